"""Fixture construction helpers shared across test modules."""

from __future__ import annotations

import hashlib
from datetime import datetime, timedelta, timezone

from sidtrack.manifest import ImageRecord, SubsetId

SYNTH_SUBSET = SubsetId("fixture_synth", "synthetic_subset")
REAL_SET = SubsetId("fixture_real", "real_dataset")

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def ts(days: float) -> datetime:
    return EPOCH + timedelta(days=days)


def digest_of(n: int) -> str:
    return f"{n:064x}"


def stable_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def synth_record(
    rid: str,
    days: float = 0.0,
    digest: int | None = None,
    basic: bool = True,
    subset: SubsetId = SYNTH_SUBSET,
    **kwargs,
) -> ImageRecord:
    return ImageRecord(
        id=rid,
        subset=subset,
        label="synthetic",
        content_digest=digest_of(digest) if digest is not None else stable_digest(rid),
        first_seen=ts(days),
        basic=basic,
        **kwargs,
    )


def real_record(
    rid: str,
    digest: int | None = None,
    subset: SubsetId = REAL_SET,
    **kwargs,
) -> ImageRecord:
    return ImageRecord(
        id=rid,
        subset=subset,
        label="real",
        content_digest=digest_of(digest) if digest is not None else stable_digest(rid),
        **kwargs,
    )
