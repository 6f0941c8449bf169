"""Dataset manifest: records of online image observations, duplicate grouping,
time ordering and quartile assignment.

A manifest is a UTF-8 JSON-lines file, one record per line. Known fields:

    id              unique string
    subset          {"name": str, "kind": "synthetic_subset" | "real_dataset"}
    label           "real" | "synthetic"
    content_digest  64 lowercase hex chars (sha256 of the raw file bytes),
                    or null/absent for observations whose URL did not yield
                    a retrievable image file
    first_seen      RFC-3339 timestamp; required for synthetic records
    basic           bool; required for synthetic records that carry a digest
    source_url      optional string
    file_path       optional relative path to the image file

Unknown fields are preserved and round-trip unchanged. Timestamps are
normalized to UTC at seconds precision.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator

SYNTHETIC_SUBSET = "synthetic_subset"
REAL_DATASET = "real_dataset"
_KINDS = (SYNTHETIC_SUBSET, REAL_DATASET)

LABEL_REAL = "real"
LABEL_SYNTHETIC = "synthetic"
_LABELS = (LABEL_REAL, LABEL_SYNTHETIC)

QUARTILES = ("Q1", "Q2", "Q3", "Q4")

# Sort sentinel for records without a timestamp: they order after every
# dated record.
_TS_MAX = datetime.max.replace(tzinfo=timezone.utc)


class ManifestError(ValueError):
    """Raised on invalid manifest content. Carries the 1-based line number
    when the failure maps to a single input line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SubsetId:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ManifestError(f"unknown subset kind {self.kind!r}")

    @property
    def is_synthetic(self) -> bool:
        return self.kind == SYNTHETIC_SUBSET


@dataclass(frozen=True)
class ImageRecord:
    """One online observation of an image."""

    id: str
    subset: SubsetId
    label: str
    content_digest: str | None = None
    first_seen: datetime | None = None
    basic: bool | None = None
    source_url: str | None = None
    file_path: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def is_valid(self) -> bool:
        """An observation is valid when its URL yielded an image file."""
        return self.content_digest is not None

    def time_key(self) -> tuple:
        return (self.first_seen or _TS_MAX, self.id)


@dataclass(frozen=True)
class DuplicateGroup:
    """Records sharing byte-identical image content."""

    content_digest: str
    member_ids: tuple[str, ...]
    canonical_id: str


@dataclass(frozen=True)
class QuartileAssignment:
    """Partition of a subset's time-sorted records into Q1..Q4."""

    subset: SubsetId
    quartile_of: dict  # id -> "Q1".."Q4"
    boundaries: tuple[int, int, int]
    ordered_ids: tuple[str, ...]

    def ids_in(self, quartile: str) -> tuple[str, ...]:
        if quartile not in QUARTILES:
            raise ValueError(f"unknown quartile {quartile!r}")
        cuts = (0, *self.boundaries, len(self.ordered_ids))
        i = QUARTILES.index(quartile)
        return self.ordered_ids[cuts[i] : cuts[i + 1]]


@dataclass
class DatasetManifest:
    records: list[ImageRecord]
    subsets: dict  # name -> SubsetId, in first-appearance order

    def __post_init__(self):
        self._by_id = {r.id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def get(self, record_id: str) -> ImageRecord:
        return self._by_id[record_id]

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def records_of(self, subset_name: str) -> list[ImageRecord]:
        return [r for r in self.records if r.subset.name == subset_name]

    def synthetic_subsets(self) -> list[SubsetId]:
        return [s for s in self.subsets.values() if s.is_synthetic]

    def real_datasets(self) -> list[SubsetId]:
        return [s for s in self.subsets.values() if not s.is_synthetic]


def content_digest(data: bytes) -> str:
    """Digest of raw file bytes used for byte-level duplicate grouping."""
    return hashlib.sha256(data).hexdigest()


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC-3339 timestamp to UTC, truncated to whole seconds."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError:
        raise ManifestError(f"timestamp unparsable: {text!r}") from None
    if ts.tzinfo is None:
        raise ManifestError(f"timestamp lacks a UTC offset: {text!r}")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


_KNOWN_FIELDS = (
    "id",
    "subset",
    "label",
    "content_digest",
    "first_seen",
    "basic",
    "source_url",
    "file_path",
)


def _parse_record(obj: dict, line: int) -> ImageRecord:
    if not isinstance(obj, dict):
        raise ManifestError("record is not an object", line)
    for name in ("id", "subset", "label"):
        if name not in obj:
            raise ManifestError(f"missing mandatory field {name!r}", line)

    rid = obj["id"]
    if not isinstance(rid, str) or not rid:
        raise ManifestError("field 'id' must be a non-empty string", line)

    subset_obj = obj["subset"]
    if not isinstance(subset_obj, dict) or "name" not in subset_obj or "kind" not in subset_obj:
        raise ManifestError("field 'subset' must be {name, kind}", line)
    try:
        subset = SubsetId(name=subset_obj["name"], kind=subset_obj["kind"])
    except ManifestError as err:
        raise ManifestError(str(err), line) from None

    label = obj["label"]
    if label not in _LABELS:
        raise ManifestError(f"unknown label {label!r}", line)
    if subset.is_synthetic and label != LABEL_SYNTHETIC:
        raise ManifestError(f"record in synthetic subset {subset.name!r} labeled {label!r}", line)
    if not subset.is_synthetic and label != LABEL_REAL:
        raise ManifestError(f"record in real dataset {subset.name!r} labeled {label!r}", line)

    digest = obj.get("content_digest")
    if digest is not None:
        if not isinstance(digest, str) or len(digest) != 64 or any(
            c not in "0123456789abcdef" for c in digest
        ):
            raise ManifestError("content_digest must be 64 lowercase hex chars", line)

    first_seen = None
    if obj.get("first_seen") is not None:
        if not isinstance(obj["first_seen"], str):
            raise ManifestError("first_seen must be an RFC-3339 string", line)
        try:
            first_seen = parse_timestamp(obj["first_seen"])
        except ManifestError as err:
            raise ManifestError(str(err), line) from None
    if label == LABEL_SYNTHETIC and first_seen is None:
        raise ManifestError("synthetic record lacks first_seen", line)

    basic = obj.get("basic")
    if basic is not None and not isinstance(basic, bool):
        raise ManifestError("basic must be a boolean", line)
    if label == LABEL_SYNTHETIC and digest is not None and basic is None:
        raise ManifestError("synthetic record with image content lacks basic flag", line)

    for name in ("source_url", "file_path"):
        if obj.get(name) is not None and not isinstance(obj[name], str):
            raise ManifestError(f"{name} must be a string", line)

    extra = {k: v for k, v in obj.items() if k not in _KNOWN_FIELDS}
    return ImageRecord(
        id=rid,
        subset=subset,
        label=label,
        content_digest=digest,
        first_seen=first_seen,
        basic=basic,
        source_url=obj.get("source_url"),
        file_path=obj.get("file_path"),
        extra=extra,
    )


def parse_manifest(stream: IO[str] | Iterable[str]) -> DatasetManifest:
    """Parse and validate a JSON-lines manifest.

    Aborts with :class:`ManifestError` (carrying the line number) on the
    first invalid record: duplicate id, missing mandatory field, unknown
    subset kind, inconsistent subset declarations, or unparsable timestamp.
    """
    records: list[ImageRecord] = []
    subsets: dict[str, SubsetId] = {}
    seen_ids: set[str] = set()
    for line_no, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as err:
            raise ManifestError(f"invalid JSON: {err.msg}", line_no) from None
        record = _parse_record(obj, line_no)
        if record.id in seen_ids:
            raise ManifestError(f"duplicate id {record.id!r}", line_no)
        seen_ids.add(record.id)
        known = subsets.get(record.subset.name)
        if known is None:
            subsets[record.subset.name] = record.subset
        elif known.kind != record.subset.kind:
            raise ManifestError(
                f"subset {record.subset.name!r} declared with conflicting kinds", line_no
            )
        records.append(record)
    return DatasetManifest(records=records, subsets=subsets)


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_manifest(fh)


def serialize_record(record: ImageRecord) -> str:
    """Canonical single-line JSON form: known fields in fixed order, then
    unknown fields sorted by key. None-valued optionals are omitted."""
    obj: dict = {
        "id": record.id,
        "subset": {"name": record.subset.name, "kind": record.subset.kind},
        "label": record.label,
    }
    if record.content_digest is not None:
        obj["content_digest"] = record.content_digest
    if record.first_seen is not None:
        obj["first_seen"] = format_timestamp(record.first_seen)
    if record.basic is not None:
        obj["basic"] = record.basic
    if record.source_url is not None:
        obj["source_url"] = record.source_url
    if record.file_path is not None:
        obj["file_path"] = record.file_path
    for key in sorted(record.extra):
        obj[key] = record.extra[key]
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def serialize_manifest(manifest: DatasetManifest) -> str:
    return "".join(serialize_record(r) + "\n" for r in manifest.records)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_manifest(manifest))


def dedup_by_content(records: Iterable[ImageRecord]) -> list[DuplicateGroup]:
    """Group records by byte-identical content.

    The canonical member is the earliest ``first_seen``; ties (and groups
    with no timestamps at all) resolve to the lexicographically smallest id.
    Groups are returned ordered by the canonical member's time key.
    """
    by_digest: dict[str, list[ImageRecord]] = {}
    for record in records:
        if record.content_digest is None:
            raise ValueError(f"record {record.id!r} has no content_digest")
        by_digest.setdefault(record.content_digest, []).append(record)

    groups = []
    for digest, members in by_digest.items():
        canonical = min(members, key=ImageRecord.time_key)
        groups.append(
            (
                canonical.time_key(),
                DuplicateGroup(
                    content_digest=digest,
                    member_ids=tuple(sorted(m.id for m in members)),
                    canonical_id=canonical.id,
                ),
            )
        )
    groups.sort(key=lambda pair: pair[0])
    return [g for _, g in groups]


def assign_quartiles(records: list[ImageRecord]) -> QuartileAssignment:
    """Split one subset's records into Q1..Q4 by (first_seen, id) order.

    Boundaries sit at floor(i*n/4) for i in 1..3, so quartile sizes differ
    by at most one. Requires at least four records, all from one synthetic
    subset and all dated.
    """
    if not records:
        raise ValueError("cannot quarter an empty subset")
    subsets = {r.subset for r in records}
    if len(subsets) != 1:
        raise ValueError("records span multiple subsets")
    subset = next(iter(subsets))
    if not subset.is_synthetic:
        raise ValueError(f"subset {subset.name!r} is not a synthetic subset")
    undated = [r.id for r in records if r.first_seen is None]
    if undated:
        raise ValueError(f"records lack first_seen: {', '.join(sorted(undated))}")
    n = len(records)
    if n < 4:
        raise ValueError(f"subset {subset.name!r} too small to quarter (n={n})")

    ordered = sorted(records, key=ImageRecord.time_key)
    cuts = (n // 4, (2 * n) // 4, (3 * n) // 4)
    quartile_of = {}
    for i, record in enumerate(ordered):
        if i < cuts[0]:
            q = "Q1"
        elif i < cuts[1]:
            q = "Q2"
        elif i < cuts[2]:
            q = "Q3"
        else:
            q = "Q4"
        quartile_of[record.id] = q
    return QuartileAssignment(
        subset=subset,
        quartile_of=quartile_of,
        boundaries=cuts,
        ordered_ids=tuple(r.id for r in ordered),
    )


def filter_basic(records: Iterable[ImageRecord]) -> list[ImageRecord]:
    """Keep records flagged basic, preserving order."""
    return [r for r in records if r.basic is True]
