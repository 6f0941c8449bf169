"""Retrieval-assisted score resolution.

Detector scores degrade on late copies of an image. The fix indexes every
image submitted during the first quarter (Q1) of its subset's lifespan;
a later query that has near-duplicates among the indexed images takes the
arithmetic mean of those images' original detector scores instead of its
own direct score. Queries without near-duplicates, and images inside their
own Q1 window, keep the direct detector output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .manifest import QuartileAssignment
from .scoring import DetectorId, ScoreTable
from .simindex import (
    DEFAULT_SIMILARITY_THRESHOLD,
    EmbeddingIndex,
    HammingIndex,
)

BACKEND_HASH = "hash"
BACKEND_EMBEDDING = "embedding"

PROVENANCE_DIRECT = "direct"
PROVENANCE_RETRIEVED = "retrieved"


class RasidError(ValueError):
    pass


@dataclass(frozen=True)
class RasidConfig:
    """Thresholds above 1.0 are allowed: no similarity can reach them, so
    resolution degenerates to the direct score everywhere."""

    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    backend: str = BACKEND_HASH

    def __post_init__(self):
        if self.similarity_threshold < 0.0:
            raise RasidError(f"similarity threshold {self.similarity_threshold!r} is negative")
        if self.backend not in (BACKEND_HASH, BACKEND_EMBEDDING):
            raise RasidError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class ResolvedScore:
    image_id: str
    detector: DetectorId
    value: float
    provenance: str
    contributors: tuple[str, ...] = ()
    contributor_similarities: tuple[float, ...] = ()


@dataclass
class Q1Index:
    """Frozen first-quarter snapshot: the near-duplicate index over Q1
    images plus their direct scores per detector."""

    index: object  # HammingIndex | EmbeddingIndex
    q1_ids: frozenset
    snapshot: dict = field(default_factory=dict)  # DetectorId -> {id: score}

    def __len__(self) -> int:
        return len(self.q1_ids)


def build_q1_index(
    assignments: Sequence[QuartileAssignment],
    keys: Mapping[str, object],
    scores: ScoreTable,
    detectors: Sequence[DetectorId],
    backend: str = BACKEND_HASH,
) -> Q1Index:
    """Index every image falling in the Q1 window of its subset.

    ``keys`` maps image id to the similarity key (64-bit hash or unit
    embedding, per backend). Indexing covers the union of the given
    assignments' Q1 ranges; any Q1 image lacking a key or a direct score
    for one of ``detectors`` aborts the build.
    """
    q1_ids: list[str] = []
    for assignment in assignments:
        q1_ids.extend(assignment.ids_in("Q1"))
    if len(set(q1_ids)) != len(q1_ids):
        raise RasidError("quartile assignments overlap")

    missing_keys = sorted(i for i in q1_ids if i not in keys)
    if missing_keys:
        raise RasidError(f"missing similarity keys for Q1 images: {', '.join(missing_keys)}")

    index = HammingIndex() if backend == BACKEND_HASH else EmbeddingIndex()
    for image_id in sorted(q1_ids):
        index.insert(image_id, keys[image_id])

    snapshot: dict[DetectorId, dict[str, float]] = {}
    for detector in detectors:
        per = scores.scores_of(detector)
        missing = sorted(i for i in q1_ids if i not in per)
        if missing:
            raise RasidError(
                f"missing direct scores for detector {detector.key!r} on Q1 images: "
                + ", ".join(missing)
            )
        snapshot[detector] = {i: per[i] for i in q1_ids}
    return Q1Index(index=index, q1_ids=frozenset(q1_ids), snapshot=snapshot)


def resolve_score(
    image_id: str,
    detector: DetectorId,
    direct_score: float,
    query_key,
    q1: Q1Index,
    config: RasidConfig,
) -> ResolvedScore:
    """Resolve one (image, detector) score.

    Images inside their Q1 window keep the direct score. Later queries take
    the mean of the snapshot scores of their near-duplicates at the
    configured similarity threshold; the query never contributes to itself.
    Without matches the direct score stands.
    """
    if image_id in q1.q1_ids:
        return ResolvedScore(image_id, detector, float(direct_score), PROVENANCE_DIRECT)
    matches = [
        (mid, sim)
        for mid, sim in q1.index.query(query_key, config.similarity_threshold)
        if mid != image_id
    ]
    if not matches:
        return ResolvedScore(image_id, detector, float(direct_score), PROVENANCE_DIRECT)
    per = q1.snapshot[detector]
    contributor_scores = [per[mid] for mid, _ in matches]
    value = sum(contributor_scores) / len(contributor_scores)
    # Clamp into the contributor envelope so the mean-bounds invariant
    # holds exactly under floating point.
    value = min(max(value, min(contributor_scores)), max(contributor_scores))
    return ResolvedScore(
        image_id=image_id,
        detector=detector,
        value=value,
        provenance=PROVENANCE_RETRIEVED,
        contributors=tuple(mid for mid, _ in matches),
        contributor_similarities=tuple(sim for _, sim in matches),
    )


def resolve_all(
    image_ids: Iterable[str],
    detectors: Sequence[DetectorId],
    direct: ScoreTable,
    keys: Mapping[str, object],
    q1: Q1Index,
    config: RasidConfig,
) -> tuple[ScoreTable, list[ResolvedScore]]:
    """Resolve every (detector, image) pair; pure in all inputs.

    Returns the resolved table plus the flat provenance ledger, ordered by
    (image id, detector key).
    """
    ids = sorted(set(image_ids))
    resolved = ScoreTable()
    ledger: list[ResolvedScore] = []
    for image_id in ids:
        in_q1 = image_id in q1.q1_ids
        if not in_q1 and image_id not in keys:
            raise RasidError(f"no similarity key for query image {image_id!r}")
        key = keys.get(image_id)
        for detector in sorted(detectors, key=lambda d: d.key):
            entry = resolve_score(
                image_id, detector, direct.get(detector, image_id), key, q1, config
            )
            resolved.set(detector, image_id, entry.value)
            ledger.append(entry)
    return resolved, ledger


def save_provenance_ledger(ledger: Sequence[ResolvedScore], stream: IO[str]) -> None:
    """One ``image_id<TAB>detector<TAB>provenance<TAB>value<TAB>contributors``
    line per resolution, contributors comma-joined (empty when direct)."""
    for entry in ledger:
        contributors = ",".join(entry.contributors)
        stream.write(
            f"{entry.image_id}\t{entry.detector.key}\t{entry.provenance}"
            f"\t{entry.value:.6f}\t{contributors}\n"
        )
