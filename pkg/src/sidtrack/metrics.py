"""Binary detection metrics and report aggregation arithmetic.

Scores are probabilities of the synthetic class, in [0, 1]. Class labels are
never inverted: a detector that ranks real above synthetic keeps its
below-chance numbers. The prediction rule at a threshold t is
``score >= t -> synthetic``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .manifest import SubsetId


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledScores:
    """Detector scores split by ground-truth class."""

    real_scores: tuple[float, ...]
    synth_scores: tuple[float, ...]

    def __post_init__(self):
        for name, values in (("real", self.real_scores), ("synth", self.synth_scores)):
            for v in values:
                if not 0.0 <= v <= 1.0:
                    raise MetricError(f"{name} score {v!r} outside [0, 1]")

    @classmethod
    def of(cls, real: Iterable[float], synth: Iterable[float]) -> "LabeledScores":
        return cls(real_scores=tuple(real), synth_scores=tuple(synth))

    def require_both_classes(self) -> None:
        if not self.real_scores or not self.synth_scores:
            raise MetricError(
                f"metric needs both classes (n_real={len(self.real_scores)}, "
                f"n_synth={len(self.synth_scores)})"
            )


@dataclass(frozen=True)
class PairMetrics:
    """Metrics for one (synthetic subset x real dataset) pairing."""

    synthetic_subset: SubsetId
    real_dataset: SubsetId
    ba_fixed: float
    ba_eer: float
    auc: float
    eer_threshold: float
    n_real: int
    n_synth: int


def balanced_accuracy(scores: LabeledScores, threshold: float) -> float:
    """(TPR + TNR) / 2 with synthetic predicted at score >= threshold."""
    scores.require_both_classes()
    synth = np.asarray(scores.synth_scores, dtype=float)
    real = np.asarray(scores.real_scores, dtype=float)
    tpr = float(np.mean(synth >= threshold))
    tnr = float(np.mean(real < threshold))
    return (tpr + tnr) / 2.0


def auc(scores: LabeledScores) -> float:
    """Probability a random synthetic score outranks a random real one,
    ties counted as 1/2 (the Mann-Whitney statistic, via midranks)."""
    scores.require_both_classes()
    synth = np.asarray(scores.synth_scores, dtype=float)
    real = np.asarray(scores.real_scores, dtype=float)
    n_s, n_r = len(synth), len(real)
    ranks = rankdata(np.concatenate([synth, real]), method="average")
    rank_sum = float(np.sum(ranks[:n_s]))
    return (rank_sum - n_s * (n_s + 1) / 2.0) / (n_s * n_r)


def eer_candidates(scores: LabeledScores) -> list[float]:
    """Candidate thresholds: midpoints between consecutive distinct pooled
    values, plus one below the minimum and one above the maximum."""
    pooled = sorted(set(scores.real_scores) | set(scores.synth_scores))
    candidates = [pooled[0] - 0.1]
    candidates.extend((a + b) / 2.0 for a, b in zip(pooled, pooled[1:]))
    candidates.append(pooled[-1] + 0.1)
    return candidates


def _error_rates(scores: LabeledScores, threshold: float) -> tuple[float, float]:
    real = np.asarray(scores.real_scores, dtype=float)
    synth = np.asarray(scores.synth_scores, dtype=float)
    fpr = float(np.mean(real >= threshold))
    fnr = float(np.mean(synth < threshold))
    return fpr, fnr


def eer_threshold(scores: LabeledScores) -> float:
    """Threshold whose |FPR - FNR| is minimal over the candidate sweep;
    ties resolve to the smallest threshold."""
    scores.require_both_classes()
    best_t = None
    best_gap = None
    for t in eer_candidates(scores):
        fpr, fnr = _error_rates(scores, t)
        gap = abs(fpr - fnr)
        if best_gap is None or gap < best_gap:
            best_gap, best_t = gap, t
    return best_t


def evaluate_pair(
    synthetic_subset: SubsetId,
    real_dataset: SubsetId,
    scores: LabeledScores,
    fixed_threshold: float = 0.5,
    eer_t: float | None = None,
) -> PairMetrics:
    """All metrics of one pairing. ``eer_t`` overrides the per-pair EER
    threshold (used by the global-EER mode)."""
    scores.require_both_classes()
    t_eer = eer_threshold(scores) if eer_t is None else eer_t
    return PairMetrics(
        synthetic_subset=synthetic_subset,
        real_dataset=real_dataset,
        ba_fixed=balanced_accuracy(scores, fixed_threshold),
        ba_eer=balanced_accuracy(scores, t_eer),
        auc=auc(scores),
        eer_threshold=t_eer,
        n_real=len(scores.real_scores),
        n_synth=len(scores.synth_scores),
    )


def aggregate_overall(values: Sequence[float]) -> float:
    """Unweighted arithmetic mean of row/column cells. The return value is
    unrounded; displays use :func:`display_round`."""
    if not values:
        raise MetricError("cannot aggregate an empty cell list")
    return float(sum(values)) / len(values)


def relative_diff(before: float, after: float) -> float:
    """Relative change in percent: 100 * (after - before) / before."""
    if before == 0:
        raise MetricError("relative diff undefined for a zero baseline")
    return 100.0 * (after - before) / before


def display_round(value: float) -> float:
    """Report-facing rounding to one decimal place."""
    return float(f"{value:.1f}")
