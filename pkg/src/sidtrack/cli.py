"""Command-line interface.

Verbs: validate, stats, hash, index, score, eval, report.
Exit codes: 0 success, 1 validation failure, 2 coverage failure,
3 subprocess protocol or child failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, report
from .manifest import ManifestError, load_manifest
from .metrics import MetricError
from .rasid import RasidError, save_provenance_ledger
from .scoring import (
    DEFAULT_TIMEOUT,
    DetectorEndpoint,
    DetectorId,
    ProtocolError,
    ScoreFileError,
    ScoreTable,
    check_coverage,
    load_scores,
    save_scores,
    score_endpoints,
)
from .simindex import (
    DEFAULT_SIMILARITY_THRESHOLD,
    HammingIndex,
    SimIndexError,
    format_phash,
    load_hash_cache,
    parse_phash,
    phash_from_file,
    save_hash_cache,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_COVERAGE = 2
EXIT_PROTOCOL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="sidtrack", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="parse and validate a manifest")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("stats", help="dataset overview table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.add_argument("--no-header", action="store_true")

    p = sub.add_parser("hash", help="compute perceptual hashes for manifest images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images-root", help="base directory for file_path entries (default: manifest directory)")
    p.add_argument("--out", required=True, help="hash cache file to write")

    p = sub.add_parser("index", help="build the near-duplicate index, optionally query it")
    p.add_argument("--hashes", required=True)
    p.add_argument("--query-id", help="probe with the cached hash of this id")
    p.add_argument("--query-hash", help="probe with a 16-hex-digit hash literal")
    p.add_argument("--similarity-threshold", type=float, default=DEFAULT_SIMILARITY_THRESHOLD)

    p = sub.add_parser("score", help="score manifest images through detector subprocesses")
    p.add_argument("--manifest", required=True)
    p.add_argument(
        "--detector-cmd",
        action="append",
        required=True,
        metavar="NAME=COMMAND",
        help="detector id (name or name:variant) and its command line; repeatable",
    )
    p.add_argument("--images-root")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--out", required=True, help="score file to write")

    p = sub.add_parser("eval", help="run an evaluation mode and emit report files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scores", action="append", required=True, help="score file; repeatable")
    p.add_argument("--mode", choices=harness.MODES, required=True)
    p.add_argument("--hashes", help="hash cache (required for rasid_vs_direct)")
    p.add_argument("--similarity-threshold", type=float, default=DEFAULT_SIMILARITY_THRESHOLD)
    p.add_argument("--basic-only", action="store_true")
    p.add_argument("--best-by", choices=harness.BEST_BY_METRICS)
    p.add_argument("--skip-missing", action="store_true")
    p.add_argument("--global-eer", action="store_true")
    p.add_argument("--out", help="output directory (default: print to stdout)")
    p.add_argument("--format", choices=("csv", "md", "both"), default="both")
    p.add_argument("--no-header", action="store_true")

    p = sub.add_parser("report", help="re-render a machine-readable report")
    p.add_argument("--in", dest="input", required=True, help="CSV report file")
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.add_argument("--no-header", action="store_true")

    return parser


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit_table(table, fmt: str, out, header: bool) -> None:
    text = report.render_csv(table, header) if fmt == "csv" else report.render_markdown(table, header)
    if out:
        _write_text(Path(out), text)
    else:
        sys.stdout.write(text)


def _cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    synth = len(manifest.synthetic_subsets())
    real = len(manifest.real_datasets())
    print(
        f"manifest OK: {len(manifest)} records, "
        f"{synth} synthetic subset(s), {real} real dataset(s)"
    )
    return EXIT_OK


def _cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    table = harness.stats_table(manifest)
    _emit_table(table, args.format, args.out, header=not args.no_header)
    return EXIT_OK


def _images_root(args) -> Path:
    if args.images_root:
        return Path(args.images_root)
    return Path(args.manifest).resolve().parent


def _cmd_hash(args) -> int:
    manifest = load_manifest(args.manifest)
    root = _images_root(args)
    hashes = {}
    for record in manifest.records:
        if record.file_path is None:
            continue
        hashes[record.id] = phash_from_file(root / record.file_path, record.id)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        save_hash_cache(hashes, fh)
    print(f"hashed {len(hashes)} images -> {args.out}")
    return EXIT_OK


def _cmd_index(args) -> int:
    with open(args.hashes, "r", encoding="utf-8") as fh:
        hashes = load_hash_cache(fh)
    index = HammingIndex()
    for entry_id in sorted(hashes):
        index.insert(entry_id, hashes[entry_id])
    if args.query_id is None and args.query_hash is None:
        print(f"index holds {len(index)} entries")
        return EXIT_OK
    if args.query_id is not None:
        if args.query_id not in hashes:
            raise SimIndexError(f"query id {args.query_id!r} not in hash cache")
        probe = hashes[args.query_id]
    else:
        probe = parse_phash(args.query_hash)
    for entry_id, sim in index.query(probe, args.similarity_threshold):
        print(f"{entry_id}\t{sim:.6f}")
    return EXIT_OK


def _parse_detector_cmds(specs) -> list[tuple[DetectorId, str]]:
    out = []
    for spec in specs:
        key, sep, command = spec.partition("=")
        if not sep or not key or not command:
            raise ValueError(f"--detector-cmd expects NAME=COMMAND, got {spec!r}")
        out.append((DetectorId.parse(key), command))
    return out


def _cmd_score(args) -> int:
    manifest = load_manifest(args.manifest)
    root = _images_root(args)
    requests = [
        (record.id, str((root / record.file_path).resolve()))
        for record in manifest.records
        if record.file_path is not None
    ]
    endpoints = [
        DetectorEndpoint(detector=det, kind="subprocess", location=cmd, timeout=args.timeout)
        for det, cmd in _parse_detector_cmds(args.detector_cmd)
    ]
    results = score_endpoints(endpoints, requests)
    table = ScoreTable()
    failures = []
    for result in results:
        table.merge(result.to_table())
        failures.extend((result.detector, image_id, reason) for image_id, reason in result.errors)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        save_scores(table, fh)
    print(f"scored {len(table)} (detector, image) pairs -> {args.out}")
    if failures:
        for detector, image_id, reason in failures:
            print(f"coverage failure: {detector.key}\t{image_id}\t{reason}", file=sys.stderr)
        return EXIT_COVERAGE
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    known_ids = {r.id for r in manifest.records}
    table = ScoreTable()
    for path in args.scores:
        with open(path, "r", encoding="utf-8") as fh:
            table.merge(load_scores(fh, known_ids=known_ids, strict=not args.skip_missing))
    hashes = None
    if args.hashes:
        with open(args.hashes, "r", encoding="utf-8") as fh:
            hashes = load_hash_cache(fh)
    config = harness.RunConfig(
        mode=args.mode,
        similarity_threshold=args.similarity_threshold,
        basic_only=args.basic_only,
        skip_missing=args.skip_missing,
        global_eer=args.global_eer,
        best_by=args.best_by,
    )
    try:
        result = harness.run_eval(manifest, table, config, hashes=hashes)
    except harness.CoverageError as err:
        for detector, image_id in err.missing:
            print(f"missing score: {detector.key}\t{image_id}", file=sys.stderr)
        raise
    header = not args.no_header
    if not args.out:
        _emit_table(result.table, "md" if args.format != "csv" else "csv", None, header)
        return EXIT_OK
    out_dir = Path(args.out)
    written = []
    if args.format in ("csv", "both"):
        path = out_dir / f"report_{args.mode}.csv"
        _write_text(path, report.render_csv(result.table, header))
        written.append(path)
    if args.format in ("md", "both"):
        path = out_dir / f"report_{args.mode}.md"
        _write_text(path, report.render_markdown(result.table, header))
        written.append(path)
    if result.ledger:
        path = out_dir / f"provenance_{args.mode}.tsv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            save_provenance_ledger(result.ledger, fh)
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        table = report.parse_csv_report(fh.read())
    _emit_table(table, args.format, args.out, header=not args.no_header)
    return EXIT_OK


_HANDLERS = {
    "validate": _cmd_validate,
    "stats": _cmd_stats,
    "hash": _cmd_hash,
    "index": _cmd_index,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.verb](args)
    except harness.CoverageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_COVERAGE
    except ProtocolError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (
        ManifestError,
        ScoreFileError,
        SimIndexError,
        RasidError,
        MetricError,
        ValueError,
        OSError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
