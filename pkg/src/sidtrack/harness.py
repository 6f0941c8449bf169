"""Evaluation run orchestration.

A run ingests a manifest plus detector scores, evaluates every
(synthetic subset x real dataset) pairing per detector, and aggregates
into one report table per mode:

    fixed_threshold     balanced accuracy at the 0.5 threshold
    eer                 balanced accuracy at the EER threshold, plus AUC
    per_real_dataset    the same metrics split by real dataset
    basic_only          all images vs the basic subset, relative diffs
    lifespan_quartiles  first vs fourth lifespan quarter, relative diffs
    rasid_vs_direct     direct scores vs retrieval-assisted resolution

Evaluation units are unique images: each subset's valid records are
grouped by content digest and the canonical (earliest) member of each
group represents it. All aggregation is the unweighted arithmetic mean of
the constituent cells; Diff(%) columns are relative differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .manifest import (
    DatasetManifest,
    ImageRecord,
    QuartileAssignment,
    assign_quartiles,
    dedup_by_content,
    filter_basic,
)
from .metrics import (
    LabeledScores,
    MetricError,
    aggregate_overall,
    eer_threshold,
    evaluate_pair,
    relative_diff,
)
from .rasid import Q1Index, RasidConfig, ResolvedScore, build_q1_index, resolve_score
from .report import ReportTable
from .scoring import DetectorId, ScoreTable, check_coverage
from .simindex import DEFAULT_SIMILARITY_THRESHOLD

MODES = (
    "fixed_threshold",
    "eer",
    "per_real_dataset",
    "basic_only",
    "lifespan_quartiles",
    "rasid_vs_direct",
)

BEST_BY_METRICS = ("auc", "ba_eer", "ba_fixed")

# Average Gregorian month, for lifespan display.
_MONTH_SECONDS = 30.4375 * 86400


class CoverageError(RuntimeError):
    """Evaluated images lack scores for some detector."""

    def __init__(self, missing):
        self.missing = list(missing)
        preview = ", ".join(f"({d.key}, {i})" for d, i in self.missing[:10])
        suffix = "" if len(self.missing) <= 10 else f", ... {len(self.missing)} total"
        super().__init__(f"missing scores for {len(self.missing)} (detector, image) pairs: {preview}{suffix}")


@dataclass(frozen=True)
class RunConfig:
    mode: str
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    basic_only: bool = False
    skip_missing: bool = False
    global_eer: bool = False
    best_by: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.best_by is not None and self.best_by not in BEST_BY_METRICS:
            raise ValueError(f"--best-by must be one of {', '.join(BEST_BY_METRICS)}")


@dataclass
class EvalResult:
    mode: str
    table: ReportTable
    ledger: list = field(default_factory=list)  # ResolvedScore entries (rasid mode)


def canonical_records(manifest: DatasetManifest, subset_name: str) -> list[ImageRecord]:
    """One record per unique image of a subset: valid records grouped by
    content digest, represented by the earliest member, in time order."""
    valid = [r for r in manifest.records_of(subset_name) if r.is_valid]
    groups = dedup_by_content(valid)
    return [manifest.get(g.canonical_id) for g in groups]


def _evaluation_sets(manifest: DatasetManifest, basic_only: bool):
    synth = {}
    for subset in manifest.synthetic_subsets():
        records = canonical_records(manifest, subset.name)
        if basic_only:
            records = filter_basic(records)
        synth[subset.name] = records
    real = {}
    for dataset in manifest.real_datasets():
        real[dataset.name] = canonical_records(manifest, dataset.name)
    if not synth:
        raise ValueError("manifest has no synthetic subsets to evaluate")
    if not real:
        raise ValueError("manifest has no real datasets to evaluate")
    return synth, real


def _pair_scores(
    table: ScoreTable,
    detector: DetectorId,
    real_ids: list,
    synth_ids: list,
    skip_missing: bool,
) -> LabeledScores:
    per = table.scores_of(detector)
    if skip_missing:
        real_ids = [i for i in real_ids if i in per]
        synth_ids = [i for i in synth_ids if i in per]
    return LabeledScores.of((per[i] for i in real_ids), (per[i] for i in synth_ids))


def _global_eer_threshold(
    table: ScoreTable,
    detector: DetectorId,
    synth_sets: dict,
    real_sets: dict,
    skip_missing: bool,
) -> float:
    synth_ids = [r.id for records in synth_sets.values() for r in records]
    real_ids = [r.id for records in real_sets.values() for r in records]
    pooled = _pair_scores(table, detector, real_ids, synth_ids, skip_missing)
    pooled.require_both_classes()
    return eer_threshold(pooled)


def _select_detectors(
    table: ScoreTable,
    config: RunConfig,
    synth_sets: dict,
    real_sets: dict,
) -> list[DetectorId]:
    detectors = table.detectors()
    if not detectors:
        raise ValueError("score table is empty")
    if config.best_by is None:
        return detectors
    by_name: dict[str, list[DetectorId]] = {}
    for det in detectors:
        by_name.setdefault(det.name, []).append(det)
    chosen = []
    for name in sorted(by_name):
        best = None
        best_value = None
        for det in by_name[name]:
            cells = []
            for synth_records in synth_sets.values():
                for real_records in real_sets.values():
                    scores = _pair_scores(
                        table,
                        det,
                        [r.id for r in real_records],
                        [r.id for r in synth_records],
                        config.skip_missing,
                    )
                    pm = evaluate_pair(None, None, scores)
                    cells.append(getattr(pm, config.best_by))
            value = aggregate_overall(cells)
            if best_value is None or value > best_value:
                best, best_value = det, value
        chosen.append(best)
    return chosen


def _check_coverage(table: ScoreTable, detectors: list, image_ids, skip_missing: bool) -> None:
    missing = check_coverage(table, image_ids, detectors)
    if missing and not skip_missing:
        raise CoverageError(missing)


def _detector_cells(
    table: ScoreTable,
    detector: DetectorId,
    synth_sets: dict,
    real_sets: dict,
    config: RunConfig,
):
    """Per-subset mean metrics for one detector: {subset: (ba_fixed, ba_eer, auc)}."""
    eer_t = None
    if config.global_eer:
        eer_t = _global_eer_threshold(table, detector, synth_sets, real_sets, config.skip_missing)
    cells = {}
    for subset_name, synth_records in synth_sets.items():
        ba_fixed, ba_eer, auc_values = [], [], []
        for real_records in real_sets.values():
            scores = _pair_scores(
                table,
                detector,
                [r.id for r in real_records],
                [r.id for r in synth_records],
                config.skip_missing,
            )
            try:
                pm = evaluate_pair(None, None, scores, eer_t=eer_t)
            except MetricError as err:
                raise MetricError(f"subset {subset_name!r}, detector {detector.key!r}: {err}") from None
            ba_fixed.append(pm.ba_fixed)
            ba_eer.append(pm.ba_eer)
            auc_values.append(pm.auc)
        cells[subset_name] = (
            aggregate_overall(ba_fixed),
            aggregate_overall(ba_eer),
            aggregate_overall(auc_values),
        )
    return cells


def _overall(cells: dict, component: int) -> float:
    return aggregate_overall([v[component] for v in cells.values()])


def eval_fixed_threshold(manifest, table, config) -> EvalResult:
    synth_sets, real_sets = _evaluation_sets(manifest, config.basic_only)
    detectors = _select_detectors(table, config, synth_sets, real_sets)
    ids = [r.id for s in (synth_sets, real_sets) for records in s.values() for r in records]
    _check_coverage(table, detectors, ids, config.skip_missing)
    out = ReportTable(
        title="balanced accuracy at the 0.5 threshold",
        columns=["detector", *synth_sets.keys(), "overall"],
    )
    for detector in detectors:
        cells = _detector_cells(table, detector, synth_sets, real_sets, config)
        row = [detector.key]
        row.extend(100 * cells[name][0] for name in synth_sets)
        row.append(100 * _overall(cells, 0))
        out.add_row(row)
    return EvalResult(mode=config.mode, table=out)


def eval_eer(manifest, table, config) -> EvalResult:
    synth_sets, real_sets = _evaluation_sets(manifest, config.basic_only)
    detectors = _select_detectors(table, config, synth_sets, real_sets)
    ids = [r.id for s in (synth_sets, real_sets) for records in s.values() for r in records]
    _check_coverage(table, detectors, ids, config.skip_missing)
    columns = ["detector"]
    for name in synth_sets:
        columns += [f"{name}_acc", f"{name}_auc"]
    columns += ["overall_acc", "overall_auc"]
    out = ReportTable(title="discrimination at the EER threshold", columns=columns)
    for detector in detectors:
        cells = _detector_cells(table, detector, synth_sets, real_sets, config)
        row = [detector.key]
        for name in synth_sets:
            row += [100 * cells[name][1], 100 * cells[name][2]]
        row += [100 * _overall(cells, 1), 100 * _overall(cells, 2)]
        out.add_row(row)
    return EvalResult(mode=config.mode, table=out)


def eval_per_real_dataset(manifest, table, config) -> EvalResult:
    synth_sets, real_sets = _evaluation_sets(manifest, config.basic_only)
    detectors = _select_detectors(table, config, synth_sets, real_sets)
    ids = [r.id for s in (synth_sets, real_sets) for records in s.values() for r in records]
    _check_coverage(table, detectors, ids, config.skip_missing)
    columns = ["detector"]
    for name in real_sets:
        columns += [f"{name}_acc", f"{name}_auc"]
    columns += ["overall_acc", "overall_auc"]
    out = ReportTable(title="discrimination per real dataset", columns=columns)
    column_cells: dict[str, list[list[float]]] = {name: [] for name in real_sets}
    overall_cells: list[list[float]] = []
    for detector in detectors:
        eer_t = None
        if config.global_eer:
            eer_t = _global_eer_threshold(table, detector, synth_sets, real_sets, config.skip_missing)
        row = [detector.key]
        per_dataset = []
        for real_name, real_records in real_sets.items():
            accs, aucs = [], []
            for synth_records in synth_sets.values():
                scores = _pair_scores(
                    table,
                    detector,
                    [r.id for r in real_records],
                    [r.id for r in synth_records],
                    config.skip_missing,
                )
                pm = evaluate_pair(None, None, scores, eer_t=eer_t)
                accs.append(pm.ba_eer)
                aucs.append(pm.auc)
            acc, auc_v = aggregate_overall(accs), aggregate_overall(aucs)
            per_dataset.append((acc, auc_v))
            column_cells[real_name].append([acc, auc_v])
            row += [100 * acc, 100 * auc_v]
        overall = (
            aggregate_overall([c[0] for c in per_dataset]),
            aggregate_overall([c[1] for c in per_dataset]),
        )
        overall_cells.append(list(overall))
        row += [100 * overall[0], 100 * overall[1]]
        out.add_row(row)
    totals = ["overall"]
    for name in real_sets:
        totals += [
            100 * aggregate_overall([c[0] for c in column_cells[name]]),
            100 * aggregate_overall([c[1] for c in column_cells[name]]),
        ]
    totals += [
        100 * aggregate_overall([c[0] for c in overall_cells]),
        100 * aggregate_overall([c[1] for c in overall_cells]),
    ]
    out.add_row(totals)
    return EvalResult(mode=config.mode, table=out)


def _diff_mode_table(title: str, left: str, right: str) -> ReportTable:
    return ReportTable(
        title=title,
        columns=[
            "detector",
            f"{left}_acc",
            f"{left}_auc",
            f"{right}_acc",
            f"{right}_auc",
            "diff_acc_pct",
            "diff_auc_pct",
        ],
    )


def eval_basic_only(manifest, table, config) -> EvalResult:
    synth_all, real_sets = _evaluation_sets(manifest, basic_only=False)
    synth_basic, _ = _evaluation_sets(manifest, basic_only=True)
    detectors = _select_detectors(table, config, synth_all, real_sets)
    ids = [r.id for s in (synth_all, real_sets) for records in s.values() for r in records]
    _check_coverage(table, detectors, ids, config.skip_missing)
    out = _diff_mode_table("all images vs basic subset", "all", "basic")
    acc_diffs, auc_diffs = [], []
    for detector in detectors:
        all_cells = _detector_cells(table, detector, synth_all, real_sets, config)
        basic_cells = _detector_cells(table, detector, synth_basic, real_sets, config)
        all_acc, all_auc = 100 * _overall(all_cells, 1), 100 * _overall(all_cells, 2)
        basic_acc, basic_auc = 100 * _overall(basic_cells, 1), 100 * _overall(basic_cells, 2)
        d_acc = relative_diff(all_acc, basic_acc)
        d_auc = relative_diff(all_auc, basic_auc)
        acc_diffs.append(d_acc)
        auc_diffs.append(d_auc)
        out.add_row([detector.key, all_acc, all_auc, basic_acc, basic_auc, d_acc, d_auc])
    out.add_row(
        ["overall", None, None, None, None, aggregate_overall(acc_diffs), aggregate_overall(auc_diffs)]
    )
    return EvalResult(mode=config.mode, table=out)


def lifespan_assignments(manifest: DatasetManifest) -> dict[str, QuartileAssignment]:
    """Quartile assignment per synthetic subset, over its canonical records."""
    assignments = {}
    for subset in manifest.synthetic_subsets():
        records = canonical_records(manifest, subset.name)
        assignments[subset.name] = assign_quartiles(records)
    return assignments


def eval_lifespan_quartiles(manifest, table, config) -> EvalResult:
    """First vs fourth lifespan quarter, on basic images (quartering runs
    over each full subset; the basic filter applies to the evaluated
    quarter members)."""
    _, real_sets = _evaluation_sets(manifest, basic_only=False)
    assignments = lifespan_assignments(manifest)
    q_sets = {}
    for quartile in ("Q1", "Q4"):
        per_subset = {}
        for subset_name, assignment in assignments.items():
            members = [manifest.get(i) for i in assignment.ids_in(quartile)]
            per_subset[subset_name] = filter_basic(members)
        q_sets[quartile] = per_subset
    detectors = _select_detectors(table, config, q_sets["Q1"], real_sets)
    ids = [r.id for q in q_sets.values() for records in q.values() for r in records]
    ids += [r.id for records in real_sets.values() for r in records]
    _check_coverage(table, detectors, ids, config.skip_missing)
    out = _diff_mode_table("first vs fourth lifespan quarter (basic images)", "q1", "q4")
    acc_diffs, auc_diffs = [], []
    for detector in detectors:
        q1_cells = _detector_cells(table, detector, q_sets["Q1"], real_sets, config)
        q4_cells = _detector_cells(table, detector, q_sets["Q4"], real_sets, config)
        q1_acc, q1_auc = 100 * _overall(q1_cells, 1), 100 * _overall(q1_cells, 2)
        q4_acc, q4_auc = 100 * _overall(q4_cells, 1), 100 * _overall(q4_cells, 2)
        d_acc = relative_diff(q1_acc, q4_acc)
        d_auc = relative_diff(q1_auc, q4_auc)
        acc_diffs.append(d_acc)
        auc_diffs.append(d_auc)
        out.add_row([detector.key, q1_acc, q1_auc, q4_acc, q4_auc, d_acc, d_auc])
    out.add_row(
        ["overall", None, None, None, None, aggregate_overall(acc_diffs), aggregate_overall(auc_diffs)]
    )
    return EvalResult(mode=config.mode, table=out)


def resolve_with_rasid(
    manifest: DatasetManifest,
    table: ScoreTable,
    detectors: list,
    hashes: dict,
    config: RunConfig,
    evaluated_ids: list,
) -> tuple[ScoreTable, list[ResolvedScore], Q1Index]:
    """Build the Q1 index from the manifest's lifespan quartering and
    resolve the evaluated images against it."""
    assignments = list(lifespan_assignments(manifest).values())
    rasid_config = RasidConfig(similarity_threshold=config.similarity_threshold)
    q1 = build_q1_index(assignments, hashes, table, detectors, backend=rasid_config.backend)
    resolved = ScoreTable()
    ledger = []
    for image_id in sorted(set(evaluated_ids)):
        if image_id not in q1.q1_ids and image_id not in hashes:
            raise ValueError(f"no perceptual hash for evaluated image {image_id!r}")
        for detector in sorted(detectors, key=lambda d: d.key):
            if config.skip_missing and not table.has(detector, image_id):
                continue
            entry = resolve_score(
                image_id,
                detector,
                table.get(detector, image_id),
                hashes.get(image_id),
                q1,
                rasid_config,
            )
            resolved.set(detector, image_id, entry.value)
            ledger.append(entry)
    return resolved, ledger, q1


def eval_rasid_vs_direct(manifest, table, config, hashes) -> EvalResult:
    if hashes is None:
        raise ValueError("rasid_vs_direct mode needs a perceptual hash cache (--hashes)")
    synth_sets, real_sets = _evaluation_sets(manifest, config.basic_only)
    detectors = _select_detectors(table, config, synth_sets, real_sets)
    evaluated = [r.id for s in (synth_sets, real_sets) for records in s.values() for r in records]
    # Q1 snapshot scores are mandatory even under --skip-missing; the
    # retrieval side cannot substitute a missing contributor score.
    assignments = lifespan_assignments(manifest)
    q1_ids = [i for a in assignments.values() for i in a.ids_in("Q1")]
    _check_coverage(table, detectors, q1_ids, skip_missing=False)
    _check_coverage(table, detectors, evaluated, config.skip_missing)
    resolved, ledger, _ = resolve_with_rasid(manifest, table, detectors, hashes, config, evaluated)
    out = _diff_mode_table("direct detection vs retrieval-assisted", "direct", "rasid")
    acc_diffs, auc_diffs = [], []
    for detector in detectors:
        direct_cells = _detector_cells(table, detector, synth_sets, real_sets, config)
        rasid_cells = _detector_cells(resolved, detector, synth_sets, real_sets, config)
        d_acc_v, d_auc_v = 100 * _overall(direct_cells, 1), 100 * _overall(direct_cells, 2)
        r_acc_v, r_auc_v = 100 * _overall(rasid_cells, 1), 100 * _overall(rasid_cells, 2)
        diff_acc = relative_diff(d_acc_v, r_acc_v)
        diff_auc = relative_diff(d_auc_v, r_auc_v)
        acc_diffs.append(diff_acc)
        auc_diffs.append(diff_auc)
        out.add_row([detector.key, d_acc_v, d_auc_v, r_acc_v, r_auc_v, diff_acc, diff_auc])
    out.add_row(
        ["overall", None, None, None, None, aggregate_overall(acc_diffs), aggregate_overall(auc_diffs)]
    )
    return EvalResult(mode=config.mode, table=out, ledger=ledger)


def run_eval(
    manifest: DatasetManifest,
    table: ScoreTable,
    config: RunConfig,
    hashes: dict | None = None,
) -> EvalResult:
    if config.mode == "fixed_threshold":
        return eval_fixed_threshold(manifest, table, config)
    if config.mode == "eer":
        return eval_eer(manifest, table, config)
    if config.mode == "per_real_dataset":
        return eval_per_real_dataset(manifest, table, config)
    if config.mode == "basic_only":
        return eval_basic_only(manifest, table, config)
    if config.mode == "lifespan_quartiles":
        return eval_lifespan_quartiles(manifest, table, config)
    if config.mode == "rasid_vs_direct":
        return eval_rasid_vs_direct(manifest, table, config, hashes)
    raise ValueError(f"unknown mode {config.mode!r}")


def stats_table(manifest: DatasetManifest) -> ReportTable:
    """Dataset overview, one row per subset plus a totals row: lifespan in
    months, observation counts, unique images, basic images."""
    out = ReportTable(
        title="dataset overview",
        columns=["subset", "lifespan_months", "total_urls", "valid_urls", "unique_images", "basic_images"],
    )
    totals = [0, 0, 0, 0, 0]
    for name in manifest.subsets:
        records = manifest.records_of(name)
        valid = [r for r in records if r.is_valid]
        groups = dedup_by_content(valid) if valid else []
        basic = sum(1 for g in groups if manifest.get(g.canonical_id).basic is True)
        dated = [r.first_seen for r in records if r.first_seen is not None]
        months = 0
        if len(dated) >= 2:
            months = round((max(dated) - min(dated)).total_seconds() / _MONTH_SECONDS)
        row = [name, months, len(records), len(valid), len(groups), basic]
        for i, v in enumerate(row[1:]):
            totals[i] += v
        out.add_row(row)
    out.add_row(["total", *totals])
    return out
