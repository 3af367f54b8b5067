"""Human-annotation ingestion and benchmark reporting.

Scores are 0-10 integers. Per subject, annotator scores within 2 points of
the group median are averaged (half-up to 2 decimals); a subject where every
score is filtered out needs adjudication. On top of the aggregates this module
computes correct-answer rates per image category, model-vs-model comparisons,
and score-distribution histograms, all rendered deterministically to Markdown
and CSV.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .core import ComplexityCategory

DEFAULT_BINS = (0, 2, 4, 6, 8, 10)


class EvalError(Exception):
    pass


class EmptyInput(EvalError):
    pass


class MissingVerdict(EvalError):
    def __init__(self, quiz_id: str):
        super().__init__(f"quiz {quiz_id!r} has no correct-answer verdict")
        self.quiz_id = quiz_id


class MissingGroup(EvalError):
    pass


class BadBins(EvalError):
    pass


def round2(value: float | int | Decimal) -> float:
    """Round half-up to 2 decimals (so 8.125 -> 8.13, never banker's 8.12)."""
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _ratio2(numerator: int | float, denominator: int | float) -> float:
    return float(
        (Decimal(str(numerator)) / Decimal(str(denominator))).quantize(
            Decimal("0.01"), rounding=ROUND_HALF_UP
        )
    )


class SubjectType(str, Enum):
    DESCRIPTION = "description"
    QUIZ = "quiz"


@dataclass(frozen=True)
class AnnotationRecord:
    subject_type: SubjectType
    subject_id: str
    annotator_id: str
    score: int
    verdict_correct_answer: bool | None = None
    rubric_note: str | None = None
    id: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.score <= 10:
            raise ValueError(f"score must be in [0,10], got {self.score}")
        if self.subject_type is SubjectType.DESCRIPTION and self.verdict_correct_answer is not None:
            raise ValueError("verdicts only apply to quiz annotations")
        if not self.id:
            object.__setattr__(self, "id", f"{self.subject_id}:{self.annotator_id}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "subject_type": self.subject_type.value,
            "subject_id": self.subject_id,
            "annotator_id": self.annotator_id,
            "score": self.score,
            "verdict_correct_answer": self.verdict_correct_answer,
            "rubric_note": self.rubric_note,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnnotationRecord":
        return cls(
            subject_type=SubjectType(d["subject_type"]),
            subject_id=d["subject_id"],
            annotator_id=d["annotator_id"],
            score=int(d["score"]),
            verdict_correct_answer=d.get("verdict_correct_answer"),
            rubric_note=d.get("rubric_note"),
            id=d.get("id", ""),
        )


@dataclass(frozen=True)
class AggregateScore:
    subject_id: str
    included_scores: tuple[int, ...]
    excluded_scores: tuple[int, ...]
    mean: float | None
    needs_adjudication: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject_id": self.subject_id,
            "included_scores": list(self.included_scores),
            "excluded_scores": list(self.excluded_scores),
            "mean": self.mean,
            "needs_adjudication": self.needs_adjudication,
        }


def aggregate_score(records: Sequence[AnnotationRecord]) -> AggregateScore:
    """Median-anchored deviation filter: keep scores within 2 points of the
    median of all scores, then average the kept ones."""
    if not records:
        raise EmptyInput("no annotation records")
    subject_ids = {r.subject_id for r in records}
    if len(subject_ids) != 1:
        raise EvalError(f"records span multiple subjects: {sorted(subject_ids)}")
    scores = [r.score for r in records]
    center = statistics.median(scores)
    included = sorted(s for s in scores if abs(s - center) <= 2)
    excluded = sorted(s for s in scores if abs(s - center) > 2)
    if not included:
        return AggregateScore(records[0].subject_id, (), tuple(excluded), None, True)
    return AggregateScore(
        subject_id=records[0].subject_id,
        included_scores=tuple(included),
        excluded_scores=tuple(excluded),
        mean=_ratio2(sum(included), len(included)),
        needs_adjudication=False,
    )


def aggregate_all(records: Iterable[AnnotationRecord]) -> dict[str, AggregateScore]:
    by_subject: dict[str, list[AnnotationRecord]] = {}
    for r in records:
        by_subject.setdefault(r.subject_id, []).append(r)
    return {sid: aggregate_score(rs) for sid, rs in sorted(by_subject.items())}


# --- correct-answer rates ---------------------------------------------------


@dataclass(frozen=True)
class RateCell:
    correct_count: int
    total: int

    @property
    def rate_percent(self) -> float:
        return _ratio2(100 * self.correct_count, self.total) if self.total else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "correct_count": self.correct_count,
            "total": self.total,
            "rate_percent": self.rate_percent,
        }


@dataclass(frozen=True)
class RateReport:
    per_category: dict[str, RateCell]
    global_rate: RateCell

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_category": {k: v.to_dict() for k, v in sorted(self.per_category.items())},
            "global": self.global_rate.to_dict(),
        }


def correct_answer_rates(
    records: Iterable[AnnotationRecord],
    categories: Mapping[str, ComplexityCategory],
) -> RateReport:
    """Majority human verdict per quiz (ties count as incorrect), tallied per
    image category; the global row sums the category counts."""
    verdicts: dict[str, list[bool]] = {}
    for r in records:
        if r.subject_type is not SubjectType.QUIZ:
            continue
        verdicts.setdefault(r.subject_id, [])
        if r.verdict_correct_answer is not None:
            verdicts[r.subject_id].append(r.verdict_correct_answer)

    counts: dict[str, list[int]] = {}
    for quiz_id in sorted(verdicts):
        votes = verdicts[quiz_id]
        if not votes:
            raise MissingVerdict(quiz_id)
        try:
            category = categories[quiz_id]
        except KeyError:
            raise MissingGroup(f"no image category known for quiz {quiz_id!r}")
        correct = sum(votes) > len(votes) - sum(votes)
        cell = counts.setdefault(category.value, [0, 0])
        cell[0] += int(correct)
        cell[1] += 1

    per_category = {cat: RateCell(c, t) for cat, (c, t) in counts.items()}
    total_correct = sum(c.correct_count for c in per_category.values())
    total = sum(c.total for c in per_category.values())
    return RateReport(per_category=per_category, global_rate=RateCell(total_correct, total))


# --- model comparison ---------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    category: str
    mean_a: float
    mean_b: float

    @property
    def absolute_delta(self) -> float:
        return round2(Decimal(str(self.mean_a)) - Decimal(str(self.mean_b)))

    @property
    def relative_delta_percent(self) -> float:
        return float(
            (
                100 * (Decimal(str(self.mean_a)) - Decimal(str(self.mean_b))) / Decimal(str(self.mean_b))
            ).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "absolute_delta": self.absolute_delta,
            "relative_delta_percent": self.relative_delta_percent,
        }


@dataclass(frozen=True)
class ComparisonReport:
    model_a: str
    model_b: str
    rows: tuple[ComparisonRow, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "rows": [r.to_dict() for r in self.rows],
        }


GroupedAggregates = Mapping[tuple[str, str], Sequence[AggregateScore]]


def _group_mean(aggs: Sequence[AggregateScore]) -> float | None:
    means = [a.mean for a in aggs if a.mean is not None]
    if not means:
        return None
    return _ratio2(sum(Decimal(str(m)) for m in means), len(means))


def compare_models(agg: GroupedAggregates, model_a: str, model_b: str) -> ComparisonReport:
    """Per-category mean of subject means for two models, with both the absolute
    and the relative difference (the latter in percent of model B)."""
    categories = sorted({cat for (model, cat) in agg if model in (model_a, model_b)})
    if not categories:
        raise MissingGroup(f"no aggregates for {model_a!r} or {model_b!r}")
    rows = []
    for category in categories:
        mean_a = _group_mean(agg.get((model_a, category), ()))
        mean_b = _group_mean(agg.get((model_b, category), ()))
        if mean_a is None or mean_b is None:
            raise MissingGroup(f"category {category!r} missing for one of the models")
        rows.append(ComparisonRow(category=category, mean_a=mean_a, mean_b=mean_b))
    return ComparisonReport(model_a=model_a, model_b=model_b, rows=tuple(rows))


# --- score distributions -------------------------------------------------------


@dataclass(frozen=True)
class DistributionGroup:
    key: str
    counts: tuple[int, ...]
    percentages: tuple[float, ...]  # unrounded; render rounds for display
    total: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "counts": list(self.counts),
            "percentages": [round2(p) for p in self.percentages],
            "total": self.total,
        }


@dataclass(frozen=True)
class DistributionReport:
    bins: tuple[float, ...]
    groups: tuple[DistributionGroup, ...]

    def labels(self) -> list[str]:
        out = []
        for i in range(len(self.bins) - 1):
            closer = "]" if i == len(self.bins) - 2 else ")"
            out.append(f"[{self.bins[i]:g},{self.bins[i + 1]:g}{closer}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"bins": list(self.bins), "groups": [g.to_dict() for g in self.groups]}


def distribution(
    scores_by_group: Mapping[str, Sequence[float]],
    bins: Sequence[float] = DEFAULT_BINS,
) -> DistributionReport:
    """Histogram per group over half-open bins; the last bin is right-closed."""
    bins = tuple(bins)
    if (
        len(bins) < 2
        or bins[0] != 0
        or bins[-1] != 10
        or any(bins[i] >= bins[i + 1] for i in range(len(bins) - 1))
    ):
        raise BadBins(f"bins must be strictly increasing from 0 to 10, got {list(bins)}")

    groups = []
    for key in sorted(scores_by_group):
        scores = scores_by_group[key]
        counts = [0] * (len(bins) - 1)
        for s in scores:
            if s < bins[0] or s > bins[-1]:
                raise EvalError(f"score {s} outside [0,10]")
            for i in range(len(bins) - 1):
                last = i == len(bins) - 2
                if bins[i] <= s < bins[i + 1] or (last and s == bins[-1]):
                    counts[i] += 1
                    break
        total = len(scores)
        percentages = tuple((100 * c / total) if total else 0.0 for c in counts)
        groups.append(DistributionGroup(key=key, counts=tuple(counts), percentages=percentages, total=total))
    return DistributionReport(bins=bins, groups=tuple(groups))


def low_score_share(report: DistributionReport, key: str, below: float = 4.0) -> float:
    """Percentage of a group's scores falling below the cutoff."""
    for group in report.groups:
        if group.key == key:
            share = 0.0
            for i in range(len(report.bins) - 1):
                if report.bins[i + 1] <= below:
                    share += group.percentages[i]
            return round2(share)
    raise MissingGroup(f"no distribution group {key!r}")


# --- annotation file I/O ---------------------------------------------------------

CSV_HEADER = ["subject_type", "subject_id", "annotator_id", "score", "verdict_correct_answer"]


def _parse_verdict(raw: str | None) -> bool | None:
    if raw is None or raw == "":
        return None
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise EvalError(f"cannot read verdict value {raw!r}")


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Load annotations from CSV (canonical header) or JSONL."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    records: list[AnnotationRecord] = []
    if path.suffix == ".jsonl" or text.lstrip()[:1] == "{":
        for line in text.splitlines():
            if line.strip():
                records.append(AnnotationRecord.from_dict(json.loads(line)))
        return records
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise EvalError(f"annotation CSV missing columns: {sorted(missing)}")
    for row in reader:
        records.append(
            AnnotationRecord(
                subject_type=SubjectType(row["subject_type"].strip()),
                subject_id=row["subject_id"].strip(),
                annotator_id=row["annotator_id"].strip(),
                score=int(row["score"]),
                verdict_correct_answer=_parse_verdict(row.get("verdict_correct_answer")),
                rubric_note=(row.get("rubric_note") or None),
            )
        )
    return records


def read_categories(path: str | Path) -> dict[str, ComplexityCategory]:
    """Sidecar CSV subject_id,complexity used when quizzes are not in the store."""
    out: dict[str, ComplexityCategory] = {}
    reader = csv.DictReader(io.StringIO(Path(path).read_text(encoding="utf-8")))
    for row in reader:
        out[row["subject_id"].strip()] = ComplexityCategory(row["complexity"].strip().lower())
    return out


# --- rendering --------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_rates_markdown(report: RateReport) -> str:
    lines = ["| Type of Image | Correct | Total | Rate (%) |", "| --- | ---: | ---: | ---: |"]
    order = [c.value for c in ComplexityCategory]
    for cat in sorted(report.per_category, key=lambda c: order.index(c) if c in order else 99):
        cell = report.per_category[cat]
        lines.append(
            f"| {cat.capitalize()} | {cell.correct_count} | {cell.total} | {_fmt(cell.rate_percent)} |"
        )
    g = report.global_rate
    lines.append(f"| Global | {g.correct_count} | {g.total} | {_fmt(g.rate_percent)} |")
    return "\n".join(lines) + "\n"


def render_rates_csv(report: RateReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["category", "correct_count", "total", "rate_percent"])
    order = [c.value for c in ComplexityCategory]
    for cat in sorted(report.per_category, key=lambda c: order.index(c) if c in order else 99):
        cell = report.per_category[cat]
        writer.writerow([cat, cell.correct_count, cell.total, _fmt(cell.rate_percent)])
    g = report.global_rate
    writer.writerow(["global", g.correct_count, g.total, _fmt(g.rate_percent)])
    return out.getvalue()


def render_comparison_markdown(report: ComparisonReport) -> str:
    lines = [
        f"| Category | {report.model_a} | {report.model_b} | Absolute delta | Relative delta (%) |",
        "| --- | ---: | ---: | ---: | ---: |",
    ]
    for row in report.rows:
        lines.append(
            f"| {row.category} | {_fmt(row.mean_a)} | {_fmt(row.mean_b)} | "
            f"{_fmt(row.absolute_delta)} | {_fmt(row.relative_delta_percent)} |"
        )
    return "\n".join(lines) + "\n"


def render_comparison_csv(report: ComparisonReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["category", "mean_a", "mean_b", "absolute_delta", "relative_delta_percent"])
    for row in report.rows:
        writer.writerow(
            [row.category, _fmt(row.mean_a), _fmt(row.mean_b), _fmt(row.absolute_delta), _fmt(row.relative_delta_percent)]
        )
    return out.getvalue()


def render_distribution_markdown(report: DistributionReport) -> str:
    labels = report.labels()
    lines = ["| Group | " + " | ".join(labels) + " | Total |"]
    lines.append("| --- |" + " ---: |" * (len(labels) + 1))
    for group in report.groups:
        cells = " | ".join(_fmt(p) for p in group.percentages)
        lines.append(f"| {group.key} | {cells} | {group.total} |")
    return "\n".join(lines) + "\n"


def render_distribution_csv(report: DistributionReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["group"] + report.labels() + ["total"])
    for group in report.groups:
        writer.writerow([group.key] + [_fmt(p) for p in group.percentages] + [group.total])
    return out.getvalue()


def render_aggregates_csv(aggregates: Mapping[str, AggregateScore]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["subject_id", "mean", "included", "excluded", "needs_adjudication"])
    for sid in sorted(aggregates):
        agg = aggregates[sid]
        writer.writerow(
            [
                sid,
                "" if agg.mean is None else _fmt(agg.mean),
                " ".join(map(str, agg.included_scores)),
                " ".join(map(str, agg.excluded_scores)),
                str(agg.needs_adjudication).lower(),
            ]
        )
    return out.getvalue()


def render_report(report: Any, fmt: str) -> str:
    """Render any report object to 'md' or 'csv' text, byte-stable per input."""
    renderers = {
        (RateReport, "md"): render_rates_markdown,
        (RateReport, "csv"): render_rates_csv,
        (ComparisonReport, "md"): render_comparison_markdown,
        (ComparisonReport, "csv"): render_comparison_csv,
        (DistributionReport, "md"): render_distribution_markdown,
        (DistributionReport, "csv"): render_distribution_csv,
    }
    try:
        return renderers[(type(report), fmt)](report)
    except KeyError:
        raise EvalError(f"no {fmt!r} renderer for {type(report).__name__}")


class ExternalScorer(Protocol):
    """Pluggable automatic caption-vs-image scorer (e.g. embedding similarity).

    Deliberately unimplemented here: evaluation in this build is human-driven,
    and this interface is the seam where an automated metric would slot in.
    """

    def score(self, image_bytes: bytes, text: str) -> float: ...
