"""sidtrack: track online copies of synthetic images and evaluate detectors
over their lifespan, with retrieval-assisted score propagation."""

__version__ = "0.1.0"

from .manifest import (
    DatasetManifest,
    DuplicateGroup,
    ImageRecord,
    ManifestError,
    QuartileAssignment,
    SubsetId,
    assign_quartiles,
    dedup_by_content,
    filter_basic,
    load_manifest,
    parse_manifest,
    serialize_manifest,
)
from .metrics import (
    LabeledScores,
    PairMetrics,
    aggregate_overall,
    auc,
    balanced_accuracy,
    eer_threshold,
    evaluate_pair,
    relative_diff,
)
from .rasid import Q1Index, RasidConfig, ResolvedScore, build_q1_index, resolve_all, resolve_score
from .scoring import (
    DetectorEndpoint,
    DetectorId,
    ProtocolError,
    ScoreTable,
    check_coverage,
    load_scores,
    save_scores,
    score_via_subprocess,
)
from .simindex import (
    EmbeddingIndex,
    HammingIndex,
    SimIndexError,
    compute_phash,
    cosine_similarity,
    hamming_distance,
    hamming_similarity,
    phash_from_file,
)

__all__ = [
    "DatasetManifest",
    "DetectorEndpoint",
    "DetectorId",
    "DuplicateGroup",
    "EmbeddingIndex",
    "HammingIndex",
    "ImageRecord",
    "LabeledScores",
    "ManifestError",
    "PairMetrics",
    "ProtocolError",
    "Q1Index",
    "QuartileAssignment",
    "RasidConfig",
    "ResolvedScore",
    "ScoreTable",
    "SimIndexError",
    "SubsetId",
    "aggregate_overall",
    "assign_quartiles",
    "auc",
    "balanced_accuracy",
    "build_q1_index",
    "check_coverage",
    "compute_phash",
    "cosine_similarity",
    "dedup_by_content",
    "eer_threshold",
    "evaluate_pair",
    "filter_basic",
    "hamming_distance",
    "hamming_similarity",
    "load_manifest",
    "load_scores",
    "parse_manifest",
    "phash_from_file",
    "relative_diff",
    "resolve_all",
    "resolve_score",
    "save_scores",
    "score_via_subprocess",
    "serialize_manifest",
]
