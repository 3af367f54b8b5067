"""Learner-flow orchestration: image in, concealed caption, quiz set out,
answer in, feedback back — plus batch generation over a stored image set.

Quizzes reach learners only after passing structural validation and the lint
gate; the generated description is never part of learner-facing output.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Sequence

from .core import (
    ComplexityCategory,
    Description,
    PromptCondition,
    PromptTemplate,
    ProviderProfile,
    Quiz,
    new_ulid,
    now_utc,
    validate_quiz,
)
from .gateway import GatewayError, LlmGateway, default_describe_template, default_quiz_template
from .lint import LintConfig, LintReport, lint_quiz
from .quizparse import QuizDraft, parse_quiz_block
from .store import NotFound, Store


class PipelineError(Exception):
    pass


class AllQuizzesRejected(PipelineError):
    """No generated quiz survived validation and lint; carries the stored set."""

    def __init__(self, quiz_set: "QuizSet"):
        rejected = ", ".join(sorted({c for r in quiz_set.rejected for c in r.reason_codes()})) or "unparseable output"
        super().__init__(f"all quizzes rejected ({rejected})")
        self.quiz_set = quiz_set


class UnknownQuiz(PipelineError):
    pass


class UnknownSession(PipelineError):
    pass


class InvalidLabel(PipelineError):
    pass


class QuizNotDelivered(PipelineError):
    pass


@dataclass(frozen=True)
class RejectedQuiz:
    draft: QuizDraft
    report: LintReport | None
    violations: tuple[str, ...] = ()

    def reason_codes(self) -> list[str]:
        codes = list(self.violations)
        if self.report is not None:
            codes.extend(f.code for f in self.report.findings if f.severity.value == "error")
        return codes

    def to_dict(self) -> dict[str, Any]:
        return {
            "draft": self.draft.to_dict(),
            "report": self.report.to_dict() if self.report else None,
            "violations": list(self.violations),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RejectedQuiz":
        return cls(
            draft=QuizDraft.from_dict(d["draft"]),
            report=LintReport.from_dict(d["report"]) if d.get("report") else None,
            violations=tuple(d.get("violations", ())),
        )


@dataclass(frozen=True)
class QuizSet:
    id: str
    image_id: str
    description_id: str
    quizzes: tuple[str, ...]  # delivery-eligible quiz ids
    rejected: tuple[RejectedQuiz, ...]
    created_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "description_id": self.description_id,
            "quizzes": list(self.quizzes),
            "rejected": [r.to_dict() for r in self.rejected],
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QuizSet":
        return cls(
            id=d["id"],
            image_id=d["image_id"],
            description_id=d["description_id"],
            quizzes=tuple(d["quizzes"]),
            rejected=tuple(RejectedQuiz.from_dict(r) for r in d["rejected"]),
            created_at=datetime.fromisoformat(d["created_at"]),
        )


@dataclass(frozen=True)
class AttemptRecord:
    id: str
    session_id: str
    quiz_id: str
    chosen_label: str
    is_correct: bool
    created_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "session_id": self.session_id,
            "quiz_id": self.quiz_id,
            "chosen_label": self.chosen_label,
            "is_correct": self.is_correct,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AttemptRecord":
        return cls(
            id=d["id"],
            session_id=d["session_id"],
            quiz_id=d["quiz_id"],
            chosen_label=d["chosen_label"],
            is_correct=d["is_correct"],
            created_at=datetime.fromisoformat(d["created_at"]),
        )


@dataclass(frozen=True)
class Session:
    id: str
    native_language: str = "en"
    created_at: datetime = field(default_factory=now_utc)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "native_language": self.native_language,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Session":
        return cls(
            id=d["id"],
            native_language=d.get("native_language", "en"),
            created_at=datetime.fromisoformat(d["created_at"]),
        )


@dataclass(frozen=True)
class Feedback:
    is_correct: bool
    correct_label: str
    correct_text_ar: str
    message_key: str  # "correct" | "incorrect_show_answer"

    def to_dict(self) -> dict[str, Any]:
        return {
            "is_correct": self.is_correct,
            "correct_label": self.correct_label,
            "correct_text_ar": self.correct_text_ar,
            "message_key": self.message_key,
        }


@dataclass
class BatchStats:
    """Grid accounting for one batch run.

    *_created counts grid tuples satisfied by the run (freshly generated or
    already stored from an earlier run); *_new counts records actually written
    this time, so a resumed run reports the same totals with zero new writes.
    """

    descriptions_created: int = 0
    descriptions_new: int = 0
    description_failures: int = 0
    quizzes_created: int = 0
    quizzes_new: int = 0
    quiz_failures: int = 0
    rejected_count: int = 0
    per_category: dict[str, dict[str, int]] = field(default_factory=dict)
    errors: list[dict[str, str]] = field(default_factory=list)

    def _cat(self, category: str) -> dict[str, int]:
        return self.per_category.setdefault(category, {"descriptions": 0, "quizzes": 0})

    def to_dict(self) -> dict[str, Any]:
        return {
            "descriptions_created": self.descriptions_created,
            "descriptions_new": self.descriptions_new,
            "description_failures": self.description_failures,
            "quizzes_created": self.quizzes_created,
            "quizzes_new": self.quizzes_new,
            "quiz_failures": self.quiz_failures,
            "rejected_count": self.rejected_count,
            "per_category": {k: dict(v) for k, v in sorted(self.per_category.items())},
            "errors": self.errors,
        }


class QuizPipeline:
    """Wires the gateway, parser, lint gate, and store together."""

    def __init__(
        self,
        store: Store,
        gateway: LlmGateway,
        *,
        describe_template: PromptTemplate | None = None,
        quiz_template: PromptTemplate | None = None,
        lint_cfg: LintConfig | None = None,
    ):
        self.store = store
        self.gateway = gateway
        self.describe_template = describe_template or default_describe_template()
        self.quiz_template = quiz_template or default_quiz_template()
        self.lint_cfg = lint_cfg or LintConfig()

    # -- interactive flow ---------------------------------------------------

    def run_vision_quiz(
        self,
        image_id: str,
        vision_profile: ProviderProfile,
        quiz_profile: ProviderProfile,
        condition: PromptCondition = PromptCondition.PROMPTED,
        n_questions: int = 2,
    ) -> QuizSet:
        """Caption the image, generate and gate quizzes, persist everything.

        Raises AllQuizzesRejected when nothing survives the gate; the set is
        stored either way so rejections stay auditable.
        """
        img = self.store.get("image", image_id)
        description = self.gateway.describe_image(img, vision_profile, condition, self.describe_template)
        self.store.put(description)
        raw = self.gateway.generate_quiz_text(description, quiz_profile, n_questions, self.quiz_template)
        outcome = parse_quiz_block(raw)

        delivered: list[str] = []
        rejected: list[RejectedQuiz] = []
        for draft in outcome.quizzes:
            quiz = draft.to_quiz(
                id=new_ulid(),
                image_id=image_id,
                description_id=description.id,
                model_id=quiz_profile.model_name,
            )
            result = validate_quiz(quiz)
            if not result.ok:
                rejected.append(RejectedQuiz(draft, None, tuple(result.codes())))
                continue
            report = lint_quiz(quiz, self.lint_cfg, declared_text=draft.declared_correct_text)
            if report.passed:
                self.store.put(quiz)
                self.store.put(report)
                delivered.append(quiz.id)
            else:
                rejected.append(RejectedQuiz(draft, report))

        quiz_set = QuizSet(
            id=new_ulid(),
            image_id=image_id,
            description_id=description.id,
            quizzes=tuple(delivered),
            rejected=tuple(rejected),
            created_at=now_utc(),
        )
        self.store.put(quiz_set)
        if not delivered:
            raise AllQuizzesRejected(quiz_set)
        return quiz_set

    def learner_view(self, quiz_set: QuizSet) -> dict[str, Any]:
        """Delivery payload: stems and options only — no answers, no caption."""
        quizzes = []
        for quiz_id in quiz_set.quizzes:
            quiz: Quiz = self.store.get("quiz", quiz_id)
            quizzes.append(
                {
                    "quiz_id": quiz.id,
                    "ordinal": quiz.ordinal,
                    "stem": quiz.stem,
                    "skill": quiz.skill.value,
                    "options": [{"label": o.label, "text_ar": o.text_ar} for o in quiz.options],
                }
            )
        return {"quiz_set_id": quiz_set.id, "image_id": quiz_set.image_id, "quizzes": quizzes}

    def submit_answer(self, session_id: str, quiz_id: str, chosen_label: str) -> Feedback:
        """Record one attempt and answer with feedback; repeats replay the first result."""
        try:
            self.store.get("session", session_id)
        except NotFound:
            raise UnknownSession(f"unknown session {session_id!r}")
        try:
            quiz: Quiz = self.store.get("quiz", quiz_id)
        except NotFound:
            raise UnknownQuiz(f"unknown quiz {quiz_id!r}")
        chosen_label = chosen_label.lower()
        if chosen_label not in {o.label for o in quiz.options}:
            raise InvalidLabel(f"label {chosen_label!r} is not an option")
        if not any(
            quiz_id in qs.quizzes for qs in self.store.list("quiz_set", image_id=quiz.image_id)
        ):
            raise QuizNotDelivered(f"quiz {quiz_id!r} was never delivered to learners")

        existing = self.store.list("attempt", session_id=session_id, quiz_id=quiz_id)
        if existing:
            first = min(existing, key=lambda a: a.id)
            return self._feedback(first.is_correct, quiz)

        is_correct = chosen_label == quiz.declared_correct
        self.store.put(
            AttemptRecord(
                id=new_ulid(),
                session_id=session_id,
                quiz_id=quiz_id,
                chosen_label=chosen_label,
                is_correct=is_correct,
                created_at=now_utc(),
            )
        )
        return self._feedback(is_correct, quiz)

    @staticmethod
    def _feedback(is_correct: bool, quiz: Quiz) -> Feedback:
        correct_option = quiz.option(quiz.declared_correct)
        return Feedback(
            is_correct=is_correct,
            correct_label=quiz.declared_correct,
            correct_text_ar=correct_option.text_ar,
            message_key="correct" if is_correct else "incorrect_show_answer",
        )

    def progress(self, session_id: str) -> dict[str, int]:
        try:
            self.store.get("session", session_id)
        except NotFound:
            raise UnknownSession(f"unknown session {session_id!r}")
        attempts = self.store.list("attempt", session_id=session_id)
        return {"attempts": len(attempts), "correct": sum(1 for a in attempts if a.is_correct)}

    # -- batch generation ------------------------------------------------------

    def batch_generate(
        self,
        *,
        vision_profiles: Sequence[ProviderProfile],
        quiz_profiles: Sequence[ProviderProfile],
        conditions: Sequence[PromptCondition],
        n_questions: int = 3,
        complexity: ComplexityCategory | None = None,
        max_workers: int = 8,
    ) -> BatchStats:
        """Fill the images x vision-profiles x conditions caption grid, then
        generate n questions per image per quiz profile from the selected
        caption. Already-stored tuples are skipped, so reruns write nothing."""
        stats = BatchStats()
        images = self.store.list("image", complexity=complexity)
        images.sort(key=lambda r: r.id)

        describe_tasks = [
            (img, vp, cond) for img in images for vp in vision_profiles for cond in conditions
        ]

        def run_describe(task):
            img, vp, cond = task
            return self.gateway.describe_image(img, vp, cond, self.describe_template)

        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as pool:
            pending: list[tuple[Any, concurrent.futures.Future | None]] = []
            for task in describe_tasks:
                img, vp, cond = task
                if self.store.list(
                    "description", image_id=img.id, model_id=vp.model_name, condition=cond
                ):
                    pending.append((task, None))
                else:
                    pending.append((task, pool.submit(run_describe, task)))
            for task, future in pending:
                img, vp, cond = task
                if future is None:
                    stats.descriptions_created += 1
                    stats._cat(img.complexity.value)["descriptions"] += 1
                    continue
                try:
                    description = future.result()
                except GatewayError as exc:
                    stats.description_failures += 1
                    stats.errors.append(
                        {"stage": "describe", "image_id": img.id, "error": str(exc)}
                    )
                    continue
                self.store.put(description)
                stats.descriptions_created += 1
                stats.descriptions_new += 1
                stats._cat(img.complexity.value)["descriptions"] += 1

        for img in images:
            try:
                description = self.select_description(img.id, vision_profiles)
            except PipelineError as exc:
                stats.quiz_failures += len(quiz_profiles)
                stats.errors.append({"stage": "select", "image_id": img.id, "error": str(exc)})
                continue
            for qp in quiz_profiles:
                existing = self.store.list("quiz", image_id=img.id, model_id=qp.model_name)
                if existing:
                    stats.quizzes_created += len(existing)
                    stats._cat(img.complexity.value)["quizzes"] += len(existing)
                    continue
                try:
                    raw = self.gateway.generate_quiz_text(description, qp, n_questions, self.quiz_template)
                except GatewayError as exc:
                    stats.quiz_failures += 1
                    stats.errors.append(
                        {"stage": "generate", "image_id": img.id, "error": str(exc)}
                    )
                    continue
                outcome = parse_quiz_block(raw)
                for draft in outcome.quizzes:
                    quiz = draft.to_quiz(
                        id=new_ulid(),
                        image_id=img.id,
                        description_id=description.id,
                        model_id=qp.model_name,
                    )
                    if not validate_quiz(quiz).ok:
                        stats.rejected_count += 1
                        continue
                    report = lint_quiz(quiz, self.lint_cfg, declared_text=draft.declared_correct_text)
                    self.store.put(quiz)
                    self.store.put(report)
                    if not report.passed:
                        stats.rejected_count += 1
                    stats.quizzes_created += 1
                    stats.quizzes_new += 1
                    stats._cat(img.complexity.value)["quizzes"] += 1
        return stats

    def select_description(
        self, image_id: str, vision_profiles: Sequence[ProviderProfile]
    ) -> Description:
        """Pick the caption quizzes are generated from: the one with the best
        aggregated human score when annotations exist, otherwise the prompted
        caption from the first-listed vision profile."""
        from .evalharness import aggregate_score

        candidates: list[Description] = self.store.list("description", image_id=image_id)
        if not candidates:
            raise PipelineError(f"no descriptions stored for image {image_id!r}")

        scored: list[tuple[float, Description]] = []
        for desc in candidates:
            records = self.store.list("annotation", subject_id=desc.id)
            if records:
                agg = aggregate_score(records)
                if agg.mean is not None:
                    scored.append((agg.mean, desc))
        if scored:
            scored.sort(key=lambda pair: (-pair[0], pair[1].id))
            return scored[0][1]

        for vp in vision_profiles:
            prompted = self.store.list(
                "description",
                image_id=image_id,
                model_id=vp.model_name,
                condition=PromptCondition.PROMPTED,
            )
            if prompted:
                return sorted(prompted, key=lambda d: d.id)[0]
        return sorted(candidates, key=lambda d: d.id)[0]
