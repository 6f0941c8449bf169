"""Per-detector score acquisition: score files and the subprocess protocol.

Score file: one ``detector<TAB>variant<TAB>image_id<TAB>score`` line per
entry, variant empty when the detector has no variant, scores serialized
with six decimal digits.

Subprocess protocol: the parent writes one ``image_id<TAB>absolute_path``
request line per image and closes stdin; the child answers with one
``image_id<TAB>score`` line per request (any order), or
``image_id<TAB>ERROR<TAB>reason`` for an image it cannot score, and exits 0.
Scores a child fails to deliver surface later as coverage failures.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

DEFAULT_TIMEOUT = 300.0

ENDPOINT_SCORE_FILE = "score_file"
ENDPOINT_SUBPROCESS = "subprocess"


class ScoreFileError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """Subprocess endpoint misbehaved: malformed output, timeout, missing
    responses, or nonzero exit."""


@dataclass(frozen=True, order=True)
class DetectorId:
    name: str
    variant: str | None = None

    @property
    def key(self) -> str:
        return self.name if self.variant is None else f"{self.name}:{self.variant}"

    @classmethod
    def parse(cls, key: str) -> "DetectorId":
        name, sep, variant = key.partition(":")
        if not name:
            raise ScoreFileError(f"empty detector name in {key!r}")
        return cls(name=name, variant=variant if sep else None)


@dataclass(frozen=True)
class DetectorEndpoint:
    detector: DetectorId
    kind: str
    location: str
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.kind not in (ENDPOINT_SCORE_FILE, ENDPOINT_SUBPROCESS):
            raise ValueError(f"unknown endpoint kind {self.kind!r}")


class ScoreTable:
    """Map (detector, image id) -> score in [0, 1]; higher means more
    likely synthetic. The label convention is never inverted downstream."""

    def __init__(self):
        self._scores: dict[DetectorId, dict[str, float]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._scores.values())

    def detectors(self) -> list[DetectorId]:
        return sorted(self._scores, key=lambda d: d.key)

    def set(self, detector: DetectorId, image_id: str, score: float) -> None:
        if not (isinstance(score, (int, float)) and math.isfinite(score) and 0.0 <= score <= 1.0):
            raise ScoreFileError(f"score {score!r} for ({detector.key}, {image_id}) outside [0, 1]")
        per = self._scores.setdefault(detector, {})
        if image_id in per:
            raise ScoreFileError(f"duplicate score for ({detector.key}, {image_id})")
        per[image_id] = float(score)

    def get(self, detector: DetectorId, image_id: str) -> float:
        return self._scores[detector][image_id]

    def has(self, detector: DetectorId, image_id: str) -> bool:
        return detector in self._scores and image_id in self._scores[detector]

    def coverage(self, detector: DetectorId) -> set:
        return set(self._scores.get(detector, ()))

    def scores_of(self, detector: DetectorId) -> dict:
        return dict(self._scores.get(detector, {}))

    def merge(self, other: "ScoreTable") -> None:
        """Merge disjoint tables; overlapping (detector, id) keys error."""
        for detector, per in other._scores.items():
            for image_id, score in per.items():
                self.set(detector, image_id, score)

    def restrict(self, detectors: Iterable[DetectorId]) -> "ScoreTable":
        keep = set(detectors)
        out = ScoreTable()
        for detector, per in self._scores.items():
            if detector in keep:
                for image_id, score in per.items():
                    out.set(detector, image_id, score)
        return out


def load_scores(
    stream: IO[str] | Iterable[str],
    known_ids: set | None = None,
    strict: bool = True,
) -> ScoreTable:
    """Parse a score file. With ``known_ids`` given, rows for ids outside
    that set either abort (strict) or are dropped with a warning."""
    table = ScoreTable()
    dropped = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ScoreFileError(
                f"line {line_no}: expected 'detector<TAB>variant<TAB>image_id<TAB>score'"
            )
        name, variant, image_id, literal = parts
        if not name or not image_id:
            raise ScoreFileError(f"line {line_no}: empty detector name or image id")
        detector = DetectorId(name=name, variant=variant or None)
        try:
            score = float(literal)
        except ValueError:
            raise ScoreFileError(f"line {line_no}: unparsable score {literal!r}") from None
        if known_ids is not None and image_id not in known_ids:
            if strict:
                raise ScoreFileError(f"line {line_no}: unknown image id {image_id!r}")
            dropped.append(image_id)
            continue
        try:
            table.set(detector, image_id, score)
        except ScoreFileError as err:
            raise ScoreFileError(f"line {line_no}: {err}") from None
    if dropped:
        warnings.warn(f"dropped {len(dropped)} score rows for unknown image ids", stacklevel=2)
    return table


def save_scores(table: ScoreTable, stream: IO[str]) -> None:
    """Serialize with 6-decimal scores, ordered by (detector, image id)."""
    for detector in table.detectors():
        per = table.scores_of(detector)
        for image_id in sorted(per):
            variant = detector.variant or ""
            stream.write(f"{detector.name}\t{variant}\t{image_id}\t{per[image_id]:.6f}\n")


@dataclass
class SubprocessResult:
    """Outcome of one subprocess scoring run: per-id scores plus the error
    records the child reported in place of scores."""

    detector: DetectorId
    scores: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)  # (image_id, reason)

    def to_table(self) -> ScoreTable:
        table = ScoreTable()
        for image_id, score in self.scores.items():
            table.set(self.detector, image_id, score)
        return table


def _validate_requests(requests: Sequence[tuple[str, str]]) -> None:
    seen = set()
    for image_id, path in requests:
        for value, what in ((image_id, "image id"), (path, "path")):
            if "\t" in value or "\n" in value:
                raise ValueError(f"{what} {value!r} contains a tab or newline")
        if image_id in seen:
            raise ValueError(f"duplicate image id {image_id!r} in request batch")
        seen.add(image_id)


def score_via_subprocess(
    detector: DetectorId,
    command: str | Sequence[str],
    requests: Sequence[tuple[str, str]],
    timeout: float = DEFAULT_TIMEOUT,
) -> SubprocessResult:
    """Drive one detector child over the line protocol.

    ``requests`` is a sequence of (image_id, absolute_path). Every id must
    be answered (score or ERROR record) before a clean exit; anything else
    raises :class:`ProtocolError`.
    """
    _validate_requests(requests)
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    request_ids = [image_id for image_id, _ in requests]
    payload = "".join(f"{image_id}\t{path}\n" for image_id, path in requests)

    proc = subprocess.Popen(
        argv,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        stdout, stderr = proc.communicate(input=payload, timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        raise ProtocolError(
            f"detector {detector.key!r} timed out after {timeout:g}s; "
            f"missing ids: {', '.join(request_ids)}"
        ) from None

    result = SubprocessResult(detector=detector)
    answered = set()
    expected = set(request_ids)
    for line_no, line in enumerate(stdout.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) == 3 and parts[1] == "ERROR":
            image_id, _, reason = parts
        elif len(parts) == 2:
            image_id, literal = parts
            reason = None
        else:
            raise ProtocolError(f"detector {detector.key!r} output line {line_no} malformed: {line!r}")
        if image_id not in expected:
            raise ProtocolError(
                f"detector {detector.key!r} answered unrequested id {image_id!r} (line {line_no})"
            )
        if image_id in answered:
            raise ProtocolError(
                f"detector {detector.key!r} answered id {image_id!r} twice (line {line_no})"
            )
        answered.add(image_id)
        if reason is not None:
            result.errors.append((image_id, reason))
            continue
        try:
            score = float(literal)
        except ValueError:
            raise ProtocolError(
                f"detector {detector.key!r} output line {line_no}: unparsable score {literal!r}"
            ) from None
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise ProtocolError(
                f"detector {detector.key!r} output line {line_no}: score {score!r} outside [0, 1]"
            )
        result.scores[image_id] = score

    if proc.returncode != 0:
        tail = stderr.strip().splitlines()[-3:]
        raise ProtocolError(
            f"detector {detector.key!r} exited with code {proc.returncode}"
            + (f"; stderr: {' | '.join(tail)}" if tail else "")
        )
    missing = sorted(expected - answered)
    if missing:
        raise ProtocolError(
            f"detector {detector.key!r} left ids unanswered: {', '.join(missing)}"
        )
    return result


def score_endpoints(
    endpoints: Sequence[DetectorEndpoint],
    requests: Sequence[tuple[str, str]],
) -> list[SubprocessResult]:
    """Drive several subprocess endpoints concurrently, one child each.
    Results come back in endpoint order."""
    with ThreadPoolExecutor(max_workers=max(1, len(endpoints))) as pool:
        futures = [
            pool.submit(score_via_subprocess, ep.detector, ep.location, requests, ep.timeout)
            for ep in endpoints
        ]
        return [f.result() for f in futures]


def check_coverage(
    table: ScoreTable,
    image_ids: Iterable[str],
    detectors: Iterable[DetectorId],
) -> list[tuple[DetectorId, str]]:
    """Missing (detector, image id) pairs; empty means full coverage."""
    ids = sorted(set(image_ids))
    missing = []
    for detector in sorted(set(detectors), key=lambda d: d.key):
        covered = table.coverage(detector)
        missing.extend((detector, image_id) for image_id in ids if image_id not in covered)
    return missing
