"""Durable persistence: one append-only JSONL file per entity kind, image bytes
content-addressed under blobs/, and an in-memory index rebuilt on open.

Writes are serialized through a single lock and fsynced per record. Reopening
a store whose final line was cut off mid-write drops only that record and
reports it.
"""

from __future__ import annotations

import csv
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

from .core import (
    ComplexityCategory,
    ImageRecord,
    ImageSource,
    new_ulid,
    now_utc,
    sha256_hex,
)

SCHEMA_VERSION = 1
META_FILE = "store_meta.json"

ENTITY_KINDS = (
    "image",
    "description",
    "quiz",
    "quiz_set",
    "lint_report",
    "attempt",
    "annotation",
    "session",
)


class StoreError(Exception):
    pass


class NotFound(StoreError):
    def __init__(self, kind: str, entity_id: str):
        super().__init__(f"no {kind} with id {entity_id!r}")
        self.kind = kind
        self.entity_id = entity_id


class DuplicateSha(StoreError):
    def __init__(self, sha: str, existing_id: str):
        super().__init__(f"image with sha256 {sha} already stored as {existing_id}")
        self.sha = sha
        self.existing_id = existing_id


class SchemaMismatch(StoreError):
    pass


class StoreCorrupt(StoreError):
    pass


@dataclass(frozen=True)
class Truncation:
    kind: str
    line_no: int


@dataclass(frozen=True)
class StoreManifest:
    root_path: str
    counts: dict[str, int]
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "root_path": self.root_path,
            "counts": dict(self.counts),
            "schema_version": self.schema_version,
        }


# Decoders are registered lazily so this module does not import pipeline/eval
# types at import time (they import core, which must stay leaf-level).
_DECODERS: dict[str, Callable[[dict[str, Any]], Any]] = {}


def register_decoder(kind: str, fn: Callable[[dict[str, Any]], Any]) -> None:
    _DECODERS[kind] = fn


def _decoders() -> dict[str, Callable[[dict[str, Any]], Any]]:
    if "quiz_set" not in _DECODERS:
        from . import evalharness, lint, pipeline
        from . import core

        register_decoder("image", core.ImageRecord.from_dict)
        register_decoder("description", core.Description.from_dict)
        register_decoder("quiz", core.Quiz.from_dict)
        register_decoder("lint_report", lint.LintReport.from_dict)
        register_decoder("quiz_set", pipeline.QuizSet.from_dict)
        register_decoder("attempt", pipeline.AttemptRecord.from_dict)
        register_decoder("session", pipeline.Session.from_dict)
        register_decoder("annotation", evalharness.AnnotationRecord.from_dict)
    return _DECODERS


def kind_of(entity: Any) -> str:
    from . import evalharness, lint, pipeline
    from . import core

    mapping = {
        core.ImageRecord: "image",
        core.Description: "description",
        core.Quiz: "quiz",
        lint.LintReport: "lint_report",
        pipeline.QuizSet: "quiz_set",
        pipeline.AttemptRecord: "attempt",
        pipeline.Session: "session",
        evalharness.AnnotationRecord: "annotation",
    }
    try:
        return mapping[type(entity)]
    except KeyError:
        raise StoreError(f"unknown entity type {type(entity).__name__}")


def _entity_id(entity: Any) -> str:
    # Lint reports are keyed by the quiz they describe; everything else has an id.
    ident = getattr(entity, "id", None) or getattr(entity, "quiz_id", None)
    if not ident:
        raise StoreError(f"entity {entity!r} has no id")
    return ident


class Store:
    """Single-writer, multi-reader entity store rooted at a directory."""

    def __init__(self, root: str | Path, create: bool = True):
        self.root = Path(root)
        self.blobs_dir = self.root / "blobs"
        self.truncations: list[Truncation] = []
        self._lock = threading.RLock()
        self._records: dict[str, dict[str, Any]] = {k: {} for k in ENTITY_KINDS}
        self._image_by_sha: dict[str, str] = {}
        self._files: dict[str, Any] = {}

        meta_path = self.root / META_FILE
        if meta_path.exists():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            if meta.get("schema_version") != SCHEMA_VERSION:
                raise SchemaMismatch(
                    f"store at {self.root} has schema {meta.get('schema_version')}, "
                    f"this build reads {SCHEMA_VERSION}"
                )
        elif create:
            self.root.mkdir(parents=True, exist_ok=True)
            self.blobs_dir.mkdir(exist_ok=True)
            meta_path.write_text(
                json.dumps({"schema_version": SCHEMA_VERSION}) + "\n", encoding="utf-8"
            )
        else:
            raise StoreError(f"no store at {self.root}")
        self.blobs_dir.mkdir(exist_ok=True)
        self._load()

    # -- loading ------------------------------------------------------------

    def _path(self, kind: str) -> Path:
        return self.root / f"{kind}.jsonl"

    def _load(self) -> None:
        for kind in ENTITY_KINDS:
            path = self._path(kind)
            if not path.exists():
                continue
            raw = path.read_text(encoding="utf-8")
            lines = raw.split("\n")
            complete, tail = lines[:-1], lines[-1]
            if tail:
                # File did not end with a newline: the final record was cut off.
                self.truncations.append(Truncation(kind, len(complete) + 1))
            for line_no, line in enumerate(complete, start=1):
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError:
                    if line_no == len(complete) and not tail:
                        self.truncations.append(Truncation(kind, line_no))
                        continue
                    raise StoreCorrupt(f"{path} line {line_no} is not valid JSON")
                self._index(kind, doc)

    def _index(self, kind: str, doc: dict[str, Any]) -> None:
        key = doc["quiz_id"] if kind == "lint_report" else doc["id"]
        self._records[kind][key] = doc
        if kind == "image":
            self._image_by_sha[doc["sha256"]] = doc["id"]

    # -- write path -----------------------------------------------------------

    def _handle(self, kind: str):
        fh = self._files.get(kind)
        if fh is None:
            fh = open(self._path(kind), "a", encoding="utf-8")
            self._files[kind] = fh
        return fh

    def put(self, entity: Any) -> str:
        """Append one record, fsync it, and index it. Returns the entity id."""
        kind = kind_of(entity)
        doc = entity.to_dict()
        entity_id = _entity_id(entity)
        with self._lock:
            if kind == "image":
                existing = self._image_by_sha.get(doc["sha256"])
                if existing is not None:
                    raise DuplicateSha(doc["sha256"], existing)
            fh = self._handle(kind)
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
            self._index(kind, doc)
        return entity_id

    def put_image_bytes(
        self,
        data: bytes,
        *,
        complexity: ComplexityCategory = ComplexityCategory.MODERATE,
        source: ImageSource = ImageSource.UPLOAD,
    ) -> ImageRecord:
        """Store bytes content-addressed and record an ImageRecord pointing at the blob."""
        sha = sha256_hex(data)
        with self._lock:
            existing = self._image_by_sha.get(sha)
            if existing is not None:
                raise DuplicateSha(sha, existing)
            blob = self.blobs_dir / sha
            if not blob.exists():
                blob.write_bytes(data)
            record = ImageRecord(
                id=new_ulid(),
                source=source,
                locator=str(blob),
                sha256=sha,
                complexity=complexity,
                created_at=now_utc(),
            )
            self.put(record)
        return record

    def put_image_url(
        self,
        url: str,
        *,
        complexity: ComplexityCategory = ComplexityCategory.MODERATE,
        sha256: str | None = None,
    ) -> ImageRecord:
        """Record a URL-sourced image; without bytes the URL string is hashed for dedupe."""
        sha = sha256 or sha256_hex(url.encode("utf-8"))
        with self._lock:
            existing = self._image_by_sha.get(sha)
            if existing is not None:
                raise DuplicateSha(sha, existing)
            record = ImageRecord(
                id=new_ulid(),
                source=ImageSource.URL,
                locator=url,
                sha256=sha,
                complexity=complexity,
                created_at=now_utc(),
            )
            self.put(record)
        return record

    # -- read path ------------------------------------------------------------

    def get(self, kind: str, entity_id: str) -> Any:
        with self._lock:
            doc = self._records[kind].get(entity_id)
        if doc is None:
            raise NotFound(kind, entity_id)
        return _decoders()[kind](doc)

    def get_image_by_sha(self, sha: str) -> ImageRecord | None:
        with self._lock:
            image_id = self._image_by_sha.get(sha)
            if image_id is None:
                return None
            return ImageRecord.from_dict(self._records["image"][image_id])

    def list(self, kind: str, **filters: Any) -> list[Any]:
        """All records of a kind, filtered by exact field match (enums by value)."""
        decode = _decoders()[kind]
        wanted = {
            k: (v.value if hasattr(v, "value") else v) for k, v in filters.items() if v is not None
        }
        with self._lock:
            docs = list(self._records[kind].values())
        out = []
        for doc in docs:
            if all(doc.get(k) == v for k, v in wanted.items()):
                out.append(decode(doc))
        return out

    def count(self, kind: str) -> int:
        with self._lock:
            return len(self._records[kind])

    def manifest(self) -> StoreManifest:
        with self._lock:
            counts = {kind: len(self._records[kind]) for kind in ENTITY_KINDS}
        return StoreManifest(root_path=str(self.root), counts=counts)

    def close(self) -> None:
        with self._lock:
            for fh in self._files.values():
                fh.close()
            self._files.clear()


# --- benchmark manifests --------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    locator: str
    complexity: ComplexityCategory
    sha256: str | None = None


@dataclass(frozen=True)
class BenchmarkManifest:
    entries: tuple[ManifestEntry, ...]

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkManifest":
        """Read CSV (header locator,complexity[,sha256]) or the JSONL equivalent."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        entries: list[ManifestEntry] = []
        if path.suffix == ".jsonl" or text.lstrip()[:1] == "{":
            for line in text.splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                entries.append(
                    ManifestEntry(
                        locator=row["locator"],
                        complexity=ComplexityCategory(row["complexity"]),
                        sha256=row.get("sha256"),
                    )
                )
        else:
            reader = csv.DictReader(text.splitlines())
            if reader.fieldnames is None or "locator" not in reader.fieldnames:
                raise StoreError(f"manifest {path} needs a 'locator,complexity' header")
            for row in reader:
                entries.append(
                    ManifestEntry(
                        locator=row["locator"].strip(),
                        complexity=ComplexityCategory(row["complexity"].strip().lower()),
                        sha256=(row.get("sha256") or "").strip() or None,
                    )
                )
        return cls(tuple(entries))


@dataclass
class IngestReport:
    by_category: dict[str, int] = field(default_factory=dict)
    total: int = 0
    failures: list[dict[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"by_category": dict(self.by_category), "total": self.total, "failures": self.failures}


def import_manifest(store: Store, manifest: BenchmarkManifest) -> IngestReport:
    """Create an ImageRecord per entry; per-entry failures are collected, not fatal."""
    report = IngestReport(by_category={c.value: 0 for c in ComplexityCategory})
    for entry in manifest.entries:
        try:
            if entry.locator.startswith(("http://", "https://")):
                store.put_image_url(entry.locator, complexity=entry.complexity, sha256=entry.sha256)
            else:
                data = Path(entry.locator).read_bytes()
                if entry.sha256 and entry.sha256 != sha256_hex(data):
                    raise StoreError(
                        f"sha mismatch for {entry.locator}: manifest says {entry.sha256}"
                    )
                store.put_image_bytes(data, complexity=entry.complexity)
        except (OSError, StoreError) as exc:
            report.failures.append({"locator": entry.locator, "error": str(exc)})
            continue
        report.by_category[entry.complexity.value] += 1
        report.total += 1
    return report


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            yield json.loads(line)
