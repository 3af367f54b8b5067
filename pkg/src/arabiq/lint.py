"""Quality checks for parsed quizzes: diacritics, script mixing, duplicates,
answer integrity, and an optional lexicon lookup.

Error-severity findings block learner delivery; warnings do not.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable

from .core import Quiz, nfc
from .quizparse import strip_bidi_controls

LOW_DIACRITICS = "LOW_DIACRITICS"
CODE_SWITCH = "CODE_SWITCH"
NO_ARABIC = "NO_ARABIC"
DUPLICATE_OPTION = "DUPLICATE_OPTION"
NEAR_DUPLICATE_OPTION = "NEAR_DUPLICATE_OPTION"
CORRECT_TEXT_MISMATCH = "CORRECT_TEXT_MISMATCH"
EMPTY_OPTION = "EMPTY_OPTION"
LEXICON_MISS = "LEXICON_MISS"

# Harakat plus the dagger alif; the base ranges cover standard and extended
# Arabic letters but deliberately exclude digits and punctuation.
_MARK_RE = re.compile(r"[ً-ٰٟ]")
_BASE_RE = re.compile(r"[ء-يٱ-ۓ]")
_LATIN_RE = re.compile(r"[A-Za-z]")


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    code: str
    severity: Severity
    option_label: str | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "severity": self.severity.value,
            "option_label": self.option_label,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Finding":
        return cls(
            code=d["code"],
            severity=Severity(d["severity"]),
            option_label=d.get("option_label"),
            detail=d.get("detail", ""),
        )


@dataclass(frozen=True)
class LintReport:
    quiz_id: str
    findings: tuple[Finding, ...]
    diacritic_coverage: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(f.severity is Severity.ERROR for f in self.findings)

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def to_dict(self) -> dict[str, Any]:
        return {
            "quiz_id": self.quiz_id,
            "findings": [f.to_dict() for f in self.findings],
            "diacritic_coverage": dict(self.diacritic_coverage),
            "pass": self.passed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LintReport":
        return cls(
            quiz_id=d["quiz_id"],
            findings=tuple(Finding.from_dict(f) for f in d["findings"]),
            diacritic_coverage=dict(d.get("diacritic_coverage", {})),
        )


@dataclass(frozen=True)
class LintConfig:
    diacritic_threshold: float = 0.75
    near_duplicate_max_edit: int = 1
    lexicon_path: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.diacritic_threshold <= 1.0:
            raise ValueError(f"diacritic_threshold must be in [0,1], got {self.diacritic_threshold}")
        if self.near_duplicate_max_edit < 0:
            raise ValueError("near_duplicate_max_edit must be >= 0")


class NoArabicLetters(ValueError):
    """The text contains no Arabic base letters, so coverage is undefined."""


def _canonical(text: str) -> str:
    return nfc(strip_bidi_controls(text)).strip()


def skeleton(text: str) -> str:
    """De-diacritized NFC form used for duplicate and lexicon matching."""
    return _MARK_RE.sub("", _canonical(text))


def diacritic_coverage(text_ar: str) -> float:
    """Ratio of harakat marks to Arabic base letters.

    May exceed 1.0 (shadda plus a vowel on one letter). Normalized to NFC and
    stripped of bidi controls first, so NFC/NFD input variants score alike.
    """
    s = _canonical(text_ar)
    bases = len(_BASE_RE.findall(s))
    if bases == 0:
        raise NoArabicLetters(f"no Arabic base letters in {text_ar!r}")
    marks = len(_MARK_RE.findall(s))
    return marks / bases


def detect_code_switch(text_ar: str, label: str | None = None) -> Finding | None:
    """Flag Latin letters inside an answer option.

    Mixed Arabic/Latin is CODE_SWITCH; Latin with no Arabic at all is
    NO_ARABIC. Digits and punctuation alone never trigger.
    """
    s = _canonical(text_ar)
    has_arabic = bool(_BASE_RE.search(s))
    has_latin = bool(_LATIN_RE.search(s))
    if has_latin and has_arabic:
        return Finding(CODE_SWITCH, Severity.ERROR, label, f"Latin letters mixed into {text_ar!r}")
    if has_latin and not has_arabic:
        return Finding(NO_ARABIC, Severity.ERROR, label, f"no Arabic letters in {text_ar!r}")
    return None


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def detect_duplicates(q: Quiz, near_max_edit: int = 1) -> list[Finding]:
    """Pairwise option comparison: exact duplicates are errors, skeletons within
    the edit-distance budget are warnings."""
    findings: list[Finding] = []
    opts = sorted(q.options, key=lambda o: o.label)
    for i in range(len(opts)):
        for j in range(i + 1, len(opts)):
            a, b = opts[i], opts[j]
            if _canonical(a.text_ar) == _canonical(b.text_ar):
                findings.append(
                    Finding(
                        DUPLICATE_OPTION,
                        Severity.ERROR,
                        None,
                        f"options {a.label} and {b.label} are identical",
                    )
                )
            elif levenshtein(skeleton(a.text_ar), skeleton(b.text_ar)) <= near_max_edit:
                findings.append(
                    Finding(
                        NEAR_DUPLICATE_OPTION,
                        Severity.WARNING,
                        None,
                        f"options {a.label} and {b.label} differ by at most "
                        f"{near_max_edit} letter(s) ignoring diacritics",
                    )
                )
    return findings


@lru_cache(maxsize=8)
def load_lexicon(path: str) -> frozenset[str]:
    """Word list: one de-diacritized NFC word per line, '#' starts a comment."""
    words: set[str] = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(skeleton(word))
    return frozenset(words)


def _lexicon_misses(text_ar: str, lexicon: frozenset[str]) -> list[str]:
    return [tok for tok in skeleton(text_ar).split() if tok and tok not in lexicon]


def lint_quiz(
    q: Quiz,
    cfg: LintConfig | None = None,
    *,
    declared_text: str | None = None,
    lexicon: Iterable[str] | None = None,
) -> LintReport:
    """Run every check on a structurally valid quiz.

    declared_text is the correct-answer text captured at parse time; when
    given, it must match the labeled option. An explicit lexicon overrides
    cfg.lexicon_path.
    """
    cfg = cfg or LintConfig()
    if lexicon is not None:
        lex: frozenset[str] | None = frozenset(skeleton(w) for w in lexicon)
    elif cfg.lexicon_path:
        lex = load_lexicon(cfg.lexicon_path)
    else:
        lex = None

    findings: list[Finding] = []
    coverage: dict[str, float] = {}
    for opt in sorted(q.options, key=lambda o: o.label):
        if not opt.text_ar.strip():
            findings.append(Finding(EMPTY_OPTION, Severity.ERROR, opt.label, "empty option text"))
            coverage[opt.label] = 0.0
            continue
        switch = detect_code_switch(opt.text_ar, opt.label)
        if switch is not None:
            findings.append(switch)
        try:
            ratio = diacritic_coverage(opt.text_ar)
        except NoArabicLetters:
            coverage[opt.label] = 0.0
            continue
        coverage[opt.label] = ratio
        if ratio < cfg.diacritic_threshold:
            findings.append(
                Finding(
                    LOW_DIACRITICS,
                    Severity.WARNING,
                    opt.label,
                    f"coverage {ratio:.2f} below threshold {cfg.diacritic_threshold:.2f}",
                )
            )
        if lex is not None:
            for miss in _lexicon_misses(opt.text_ar, lex):
                findings.append(
                    Finding(LEXICON_MISS, Severity.WARNING, opt.label, f"{miss!r} not in lexicon")
                )

    findings.extend(detect_duplicates(q, cfg.near_duplicate_max_edit))

    if declared_text:
        expected = _canonical(q.option(q.declared_correct).text_ar)
        if _canonical(declared_text) != expected:
            findings.append(
                Finding(
                    CORRECT_TEXT_MISMATCH,
                    Severity.ERROR,
                    q.declared_correct,
                    f"declared correct text {declared_text!r} differs from option "
                    f"{q.declared_correct}) {expected!r}",
                )
            )

    return LintReport(quiz_id=q.id, findings=tuple(findings), diacritic_coverage=coverage)
