"""Shared domain types for the quiz platform.

Everything here is an immutable value object with a canonical JSON encoding
(snake_case field names, enums as lowercase strings, timestamps as ISO-8601
UTC). No I/O and no business logic beyond structural validation.
"""

from __future__ import annotations

import hashlib
import re
import secrets
import threading
import time
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any

OPTION_LABELS = ("a", "b", "c", "d")

_ULID_ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_ULID_RE = re.compile(r"^[0-9A-HJKMNP-TV-Z]{26}$")

_ulid_lock = threading.Lock()
_ulid_last_ms = 0
_ulid_last_rand = 0


def new_ulid() -> str:
    """Generate a 26-char Crockford-base32 ULID, monotonic within this process.

    Two calls in the same millisecond increment the 80-bit random tail so the
    results still sort in generation order.
    """
    global _ulid_last_ms, _ulid_last_rand
    with _ulid_lock:
        ms = int(time.time() * 1000)
        if ms <= _ulid_last_ms:
            ms = _ulid_last_ms
            rand = _ulid_last_rand + 1
            if rand >= 1 << 80:
                ms += 1
                rand = secrets.randbits(80)
        else:
            rand = secrets.randbits(80)
        _ulid_last_ms, _ulid_last_rand = ms, rand
        value = (ms << 80) | rand
        return "".join(
            _ULID_ALPHABET[(value >> shift) & 31] for shift in range(125, -1, -5)
        )


def is_ulid(s: str) -> bool:
    return bool(_ULID_RE.match(s))


def sha256_hex(data: bytes) -> str:
    """Hex SHA-256 digest of raw bytes."""
    return hashlib.sha256(data).hexdigest()


def now_utc() -> datetime:
    return datetime.now(timezone.utc)


def nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def _parse_ts(s: str) -> datetime:
    return datetime.fromisoformat(s)


class ComplexityCategory(str, Enum):
    SIMPLE = "simple"
    MODERATE = "moderate"
    COMPLEX = "complex"


class ImageSource(str, Enum):
    UPLOAD = "upload"
    URL = "url"


class PromptCondition(str, Enum):
    PROMPTED = "prompted"
    BARE = "bare"


class SkillTag(str, Enum):
    ACTIONS = "actions"
    OBJECTS = "objects"
    COLORS = "colors"
    ADJECTIVES = "adjectives"
    UNTAGGED = "untagged"


class Modality(str, Enum):
    VISION = "vision"
    TEXT = "text"
    MOCK = "mock"


class TemplateTask(str, Enum):
    DESCRIBE_IMAGE = "describe_image"
    GENERATE_QUIZ = "generate_quiz"


@dataclass(frozen=True)
class ImageRecord:
    id: str
    source: ImageSource
    locator: str
    sha256: str
    complexity: ComplexityCategory
    created_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "source": self.source.value,
            "locator": self.locator,
            "sha256": self.sha256,
            "complexity": self.complexity.value,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ImageRecord":
        return cls(
            id=d["id"],
            source=ImageSource(d["source"]),
            locator=d["locator"],
            sha256=d["sha256"],
            complexity=ComplexityCategory(d["complexity"]),
            created_at=_parse_ts(d["created_at"]),
        )


@dataclass(frozen=True)
class Description:
    id: str
    image_id: str
    model_id: str
    condition: PromptCondition
    text: str
    created_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "model_id": self.model_id,
            "condition": self.condition.value,
            "text": self.text,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Description":
        return cls(
            id=d["id"],
            image_id=d["image_id"],
            model_id=d["model_id"],
            condition=PromptCondition(d["condition"]),
            text=d["text"],
            created_at=_parse_ts(d["created_at"]),
        )


@dataclass(frozen=True)
class QuizOption:
    """One labeled answer choice. Arabic text is NFC-normalized and trimmed on
    construction so equality and round-trips are well-defined."""

    label: str
    text_ar: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", self.label.lower())
        object.__setattr__(self, "text_ar", nfc(self.text_ar).strip())

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "text_ar": self.text_ar}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QuizOption":
        return cls(label=d["label"], text_ar=d["text_ar"])


@dataclass(frozen=True)
class Quiz:
    id: str
    image_id: str
    description_id: str
    model_id: str
    ordinal: int
    stem: str
    options: tuple[QuizOption, ...]
    declared_correct: str
    skill: SkillTag = SkillTag.UNTAGGED

    def __post_init__(self) -> None:
        object.__setattr__(self, "options", tuple(self.options))
        object.__setattr__(self, "declared_correct", self.declared_correct.lower())
        object.__setattr__(self, "stem", nfc(self.stem).strip())

    def option(self, label: str) -> QuizOption:
        for opt in self.options:
            if opt.label == label:
                return opt
        raise KeyError(label)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "description_id": self.description_id,
            "model_id": self.model_id,
            "ordinal": self.ordinal,
            "stem": self.stem,
            "options": [o.to_dict() for o in self.options],
            "declared_correct": self.declared_correct,
            "skill": self.skill.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Quiz":
        return cls(
            id=d["id"],
            image_id=d["image_id"],
            description_id=d["description_id"],
            model_id=d["model_id"],
            ordinal=d["ordinal"],
            stem=d["stem"],
            options=tuple(QuizOption.from_dict(o) for o in d["options"]),
            declared_correct=d["declared_correct"],
            skill=SkillTag(d["skill"]),
        )


@dataclass(frozen=True)
class ProviderProfile:
    """Connection settings for one model endpoint (or the offline mock)."""

    profile_id: str
    endpoint_url: str
    model_name: str
    modality: Modality
    api_key_env: str = ""
    timeout_ms: int = 30_000
    max_retries: int = 2
    max_parallel: int = 4

    def __post_init__(self) -> None:
        if self.timeout_ms < 1000:
            raise ValueError(f"timeout_ms must be >= 1000, got {self.timeout_ms}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_parallel < 1:
            raise ValueError(f"max_parallel must be >= 1, got {self.max_parallel}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "profile_id": self.profile_id,
            "endpoint_url": self.endpoint_url,
            "model_name": self.model_name,
            "modality": self.modality.value,
            "api_key_env": self.api_key_env,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "max_parallel": self.max_parallel,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProviderProfile":
        return cls(
            profile_id=d["profile_id"],
            endpoint_url=d.get("endpoint_url", ""),
            model_name=d["model_name"],
            modality=Modality(d["modality"]),
            api_key_env=d.get("api_key_env", ""),
            timeout_ms=d.get("timeout_ms", 30_000),
            max_retries=d.get("max_retries", 2),
            max_parallel=d.get("max_parallel", 4),
        )


_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def template_placeholders(body: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(body))


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    task: TemplateTask
    body: str
    version_hash: str = field(default="", compare=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, "version_hash", sha256_hex(self.body.encode("utf-8")))
        names = template_placeholders(self.body)
        if self.task is TemplateTask.DESCRIBE_IMAGE and names:
            raise ValueError(f"describe template must have no placeholders, found {sorted(names)}")
        if self.task is TemplateTask.GENERATE_QUIZ and not {"description", "n_questions"} <= names:
            raise ValueError("quiz template must contain {description} and {n_questions}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "template_id": self.template_id,
            "task": self.task.value,
            "body": self.body,
            "version_hash": self.version_hash,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PromptTemplate":
        return cls(template_id=d["template_id"], task=TemplateTask(d["task"]), body=d["body"])


# --- structural quiz validation -------------------------------------------

OPTION_COUNT = "OPTION_COUNT"
UNKNOWN_LABEL = "UNKNOWN_LABEL"
DUPLICATE_LABEL = "DUPLICATE_LABEL"
CORRECT_LABEL_UNKNOWN = "CORRECT_LABEL_UNKNOWN"
EMPTY_OPTION = "EMPTY_OPTION"
EMPTY_STEM = "EMPTY_STEM"
BAD_ORDINAL = "BAD_ORDINAL"


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "detail": self.detail}


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def validate_quiz(q: Quiz) -> ValidationResult:
    """Check every structural quiz invariant; violations are values, not errors."""
    violations: list[Violation] = []
    if q.ordinal < 1:
        violations.append(Violation(BAD_ORDINAL, f"ordinal must be positive, got {q.ordinal}"))
    if not q.stem.strip():
        violations.append(Violation(EMPTY_STEM, "stem is empty"))
    if len(q.options) != 4:
        violations.append(Violation(OPTION_COUNT, f"expected 4 options, got {len(q.options)}"))
    seen: set[str] = set()
    for opt in q.options:
        if opt.label not in OPTION_LABELS:
            violations.append(Violation(UNKNOWN_LABEL, f"label {opt.label!r} outside a-d"))
        elif opt.label in seen:
            violations.append(Violation(DUPLICATE_LABEL, f"label {opt.label!r} appears twice"))
        seen.add(opt.label)
        if not opt.text_ar.strip():
            violations.append(Violation(EMPTY_OPTION, f"option {opt.label!r} is empty"))
    if q.declared_correct not in {o.label for o in q.options}:
        violations.append(
            Violation(CORRECT_LABEL_UNKNOWN, f"declared correct {q.declared_correct!r} not among options")
        )
    return ValidationResult(tuple(violations))
