"""Parser and serializer for model-generated quiz text.

A quiz block looks like:

    - Question 1: What is the boy doing? a) ... b) ... c) ... d) ... Correct answer: a) ...

with these tolerated variations: "Q 1" instead of "Question 1", an optional
skill tag "Q 1 (Actions):", options split across lines, an English gloss
"Translation (...)" after the options, non-contiguous question numbers, and
stray bidi control characters around right-to-left text. Anything else is
reported as a diagnostic instead of raising: parsing never fails on arbitrary
input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .core import (
    OPTION_LABELS,
    Quiz,
    QuizOption,
    SkillTag,
    nfc,
)

# Parse diagnostic codes.
NO_QUESTIONS = "NO_QUESTIONS"
MISSING_OPTION = "MISSING_OPTION"
DUPLICATE_LABEL = "DUPLICATE_LABEL"
MISSING_CORRECT = "MISSING_CORRECT"
CORRECT_LABEL_UNKNOWN = "CORRECT_LABEL_UNKNOWN"
CORRECT_TEXT_MISMATCH = "CORRECT_TEXT_MISMATCH"
EMPTY_STEM = "EMPTY_STEM"

_BIDI_CONTROLS = "‎‏‪‫‬‭‮⁦⁧⁨⁩"
_BIDI_TABLE = {ord(c): None for c in _BIDI_CONTROLS}

_HEADER_RE = re.compile(r"-?\s*\b(?:Question|Q)\s*(\d+)\s*(?:\(\s*([^()\n]*?)\s*\))?\s*:")
_OPTION_RE = re.compile(r"\b([a-d])\)")
_CORRECT_RE = re.compile(r"Correct\s+answer\s*:", re.IGNORECASE)
_TRANSLATION_RE = re.compile(r"Translation\s*\(", re.IGNORECASE)
_CORRECT_LABEL_RE = re.compile(r"\s*([a-d])\s*\)\s*")

_SKILL_BY_NAME = {
    "actions": SkillTag.ACTIONS,
    "objects": SkillTag.OBJECTS,
    "colors": SkillTag.COLORS,
    "adjectives": SkillTag.ADJECTIVES,
}


def strip_bidi_controls(s: str) -> str:
    """Remove LRM/RLM, embedding, override, and isolate controls; keep all else."""
    return s.translate(_BIDI_TABLE)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    line_no: int
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "line_no": self.line_no, "message": self.message}


@dataclass(frozen=True)
class QuizDraft:
    """A parsed quiz before ids are assigned.

    declared_correct_text keeps the text that followed the correct-answer
    label verbatim (normalized), so later checks can compare it against the
    labeled option.
    """

    ordinal: int
    stem: str
    options: tuple[QuizOption, ...]
    declared_correct: str
    declared_correct_text: str
    skill: SkillTag = SkillTag.UNTAGGED

    def to_quiz(self, *, id: str, image_id: str, description_id: str, model_id: str) -> Quiz:
        return Quiz(
            id=id,
            image_id=image_id,
            description_id=description_id,
            model_id=model_id,
            ordinal=self.ordinal,
            stem=self.stem,
            options=self.options,
            declared_correct=self.declared_correct,
            skill=self.skill,
        )

    def matches(self, q: Quiz) -> bool:
        return (
            self.ordinal == q.ordinal
            and self.stem == q.stem
            and self.options == q.options
            and self.declared_correct == q.declared_correct
            and self.skill == q.skill
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "ordinal": self.ordinal,
            "stem": self.stem,
            "options": [o.to_dict() for o in self.options],
            "declared_correct": self.declared_correct,
            "declared_correct_text": self.declared_correct_text,
            "skill": self.skill.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QuizDraft":
        return cls(
            ordinal=d["ordinal"],
            stem=d["stem"],
            options=tuple(QuizOption.from_dict(o) for o in d["options"]),
            declared_correct=d["declared_correct"],
            declared_correct_text=d["declared_correct_text"],
            skill=SkillTag(d["skill"]),
        )


@dataclass(frozen=True)
class ParseOutcome:
    quizzes: tuple[QuizDraft, ...]
    diagnostics: tuple[Diagnostic, ...] = field(default_factory=tuple)

    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]

    def to_dict(self) -> dict[str, Any]:
        return {
            "quizzes": [q.to_dict() for q in self.quizzes],
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def _clean(s: str) -> str:
    return nfc(s.strip())


def _parse_skill(tag: str | None) -> SkillTag:
    if not tag:
        return SkillTag.UNTAGGED
    return _SKILL_BY_NAME.get(tag.strip().lower(), SkillTag.UNTAGGED)


def parse_quiz_block(raw: str) -> ParseOutcome:
    """Parse raw model output into quiz drafts plus diagnostics.

    Malformed questions are skipped with a diagnostic; a correct-answer text
    that disagrees with its labeled option is reported but does not block the
    draft. Never raises on any input string.
    """
    text = strip_bidi_controls(raw)
    headers = list(_HEADER_RE.finditer(text))
    if not headers:
        return ParseOutcome((), (Diagnostic(NO_QUESTIONS, 1, "no question headers found"),))

    drafts: list[QuizDraft] = []
    diagnostics: list[Diagnostic] = []

    for idx, header in enumerate(headers):
        block_start = header.end()
        block_end = headers[idx + 1].start() if idx + 1 < len(headers) else len(text)
        block = text[block_start:block_end]
        line_no = _line_of(text, header.start())
        ordinal = int(header.group(1))
        skill = _parse_skill(header.group(2))

        correct_m = _CORRECT_RE.search(block)
        if correct_m is None:
            diagnostics.append(
                Diagnostic(MISSING_CORRECT, line_no, f"question {ordinal}: no correct-answer clause")
            )
            continue
        body = block[: correct_m.start()]
        clause = block[correct_m.end() :]

        label_m = _CORRECT_LABEL_RE.match(clause)
        if label_m is None:
            diagnostics.append(
                Diagnostic(
                    CORRECT_LABEL_UNKNOWN,
                    line_no,
                    f"question {ordinal}: correct-answer label is not a Latin letter a-d",
                )
            )
            continue
        declared = label_m.group(1)
        declared_text = _clean(clause[label_m.end() :])

        markers = list(_OPTION_RE.finditer(body))
        if not markers:
            diagnostics.append(
                Diagnostic(MISSING_OPTION, line_no, f"question {ordinal}: no options found")
            )
            continue

        stem = _clean(body[: markers[0].start()])
        if not stem:
            diagnostics.append(Diagnostic(EMPTY_STEM, line_no, f"question {ordinal}: empty stem"))
            continue

        # English gloss annotations are cut out of option text, never parsed.
        gloss_starts = [m.start() for m in _TRANSLATION_RE.finditer(body)]

        parsed: list[tuple[str, str]] = []
        for m_idx, marker in enumerate(markers):
            span_start = marker.end()
            span_end = markers[m_idx + 1].start() if m_idx + 1 < len(markers) else len(body)
            for g in gloss_starts:
                if span_start <= g < span_end:
                    span_end = g
                    break
            parsed.append((marker.group(1), _clean(body[span_start:span_end])))

        labels = [label for label, _ in parsed]
        duplicated = sorted({l for l in labels if labels.count(l) > 1})
        if duplicated:
            diagnostics.append(
                Diagnostic(
                    DUPLICATE_LABEL,
                    line_no,
                    f"question {ordinal}: repeated option label(s) {', '.join(duplicated)}",
                )
            )
            continue
        missing = [l for l in OPTION_LABELS if l not in labels] + [
            label for label, txt in parsed if not txt
        ]
        if missing:
            for label in sorted(set(missing)):
                diagnostics.append(
                    Diagnostic(MISSING_OPTION, line_no, f"question {ordinal}: option {label}) missing")
                )
            continue

        options = tuple(QuizOption(label, txt) for label, txt in sorted(parsed))
        draft = QuizDraft(
            ordinal=ordinal,
            stem=stem,
            options=options,
            declared_correct=declared,
            declared_correct_text=declared_text,
            skill=skill,
        )
        by_label = {o.label: o.text_ar for o in options}
        if declared_text and declared_text != by_label[declared]:
            diagnostics.append(
                Diagnostic(
                    CORRECT_TEXT_MISMATCH,
                    line_no,
                    f"question {ordinal}: correct-answer text {declared_text!r} "
                    f"differs from option {declared}) {by_label[declared]!r}",
                )
            )
        drafts.append(draft)

    if not drafts and not diagnostics:
        diagnostics.append(Diagnostic(NO_QUESTIONS, 1, "no parseable questions"))
    return ParseOutcome(tuple(drafts), tuple(diagnostics))


class InvalidQuiz(ValueError):
    """Raised when asked to serialize a quiz that fails structural validation."""


def serialize_quiz(q: Quiz) -> str:
    """Emit the canonical single-line form; the result re-parses to the same quiz."""
    from .core import validate_quiz

    result = validate_quiz(q)
    if not result.ok:
        raise InvalidQuiz(f"cannot serialize invalid quiz: {result.codes()}")
    tag = "" if q.skill is SkillTag.UNTAGGED else f" ({q.skill.value.capitalize()})"
    opts = " ".join(f"{o.label}) {o.text_ar}" for o in sorted(q.options, key=lambda o: o.label))
    correct_text = q.option(q.declared_correct).text_ar
    return (
        f"- Question {q.ordinal}{tag}: {q.stem} {opts} "
        f"Correct answer: {q.declared_correct}) {correct_text}"
    )
