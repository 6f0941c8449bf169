"""Near-duplicate image matching: 64-bit frequency-domain perceptual hashes,
normalized Hamming similarity, and exact-radius search over a BK-tree.

The hash backend is deliberately pluggable: :class:`EmbeddingIndex` accepts
externally computed unit vectors and serves the same query contract, so a
deep retrieval model can replace the built-in hash without touching callers.

Hash definition (bit-exact):

1. convert to luma, ``0.299 R + 0.587 G + 0.114 B`` (grayscale input is
   used as-is, alpha is dropped);
2. resize to 32x32 by exact area averaging (fractional pixel coverage at
   cell edges is weighted, not rounded);
3. 2-D DCT-II (orthonormal) of the 32x32 luma plane;
4. keep the 64 coefficients at rows 1..8 x columns 1..8 (0-indexed), i.e.
   the top-left 8x8 block shifted one step off the DC row and column, read
   in row-major order (1,1), (1,2), ... (8,8) -- the DC term is excluded;
   coefficients within 1e-9 of zero are treated as exact zeros, so spectra
   that are zero in exact arithmetic (e.g. a constant image) hash to
   all-zero bits regardless of FFT rounding;
5. bit k (k = 0 for (1,1), k = 63 for (8,8)) is 1 iff its coefficient is
   strictly greater than the median of the 64; the hash integer packs bit
   k at position ``63 - k`` so the hex form reads in raster order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.fft import dctn

HASH_BITS = 64
DEFAULT_SIMILARITY_THRESHOLD = 0.7

_RESIZE_TO = 32
_BAND = slice(1, 9)
_ZERO_SNAP = 1e-9


class SimIndexError(ValueError):
    pass


def luma(pixels: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an HxWx3 array; HxW arrays pass through as float."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr[:, :, 0] * 0.299 + arr[:, :, 1] * 0.587 + arr[:, :, 2] * 0.114
    raise SimIndexError(f"expected HxW or HxWx3 pixel array, got shape {arr.shape}")


def _area_reduce_axis(arr: np.ndarray, out_cells: int) -> np.ndarray:
    """Mean over ``out_cells`` equal-width boxes along axis 0, with exact
    fractional coverage at box edges."""
    n = arr.shape[0]
    # Prefix integral F(x) of the piecewise-constant signal, evaluable at
    # fractional x via linear interpolation inside a pixel.
    cum = np.concatenate([np.zeros((1,) + arr.shape[1:]), np.cumsum(arr, axis=0)])

    def integral(x: np.ndarray) -> np.ndarray:
        lo = np.minimum(np.floor(x).astype(int), n - 1)
        frac = x - lo
        return cum[lo] + frac[(...,) + (None,) * (arr.ndim - 1)] * arr[lo]

    edges = np.arange(out_cells + 1) * (n / out_cells)
    widths = edges[1:] - edges[:-1]
    sums = integral(edges[1:]) - integral(edges[:-1])
    return sums / widths[(...,) + (None,) * (arr.ndim - 1)]


def area_resize(gray: np.ndarray, size: int = _RESIZE_TO) -> np.ndarray:
    """Downscale (or upscale) a 2-D array to size x size by area averaging."""
    out = _area_reduce_axis(gray, size)
    out = _area_reduce_axis(out.T, size).T
    return out


def _to_gray_array(image) -> np.ndarray:
    if isinstance(image, np.ndarray):
        return luma(image)
    if isinstance(image, Image.Image):
        if image.mode not in ("L", "RGB"):
            image = image.convert("RGB")
        return luma(np.asarray(image))
    raise SimIndexError(f"unsupported image object {type(image).__name__}")


def compute_phash(image) -> int:
    """64-bit perceptual hash of a decoded image (PIL image or pixel array).

    Deterministic function of the decoded pixels; requires min dimension
    of at least 8.
    """
    gray = _to_gray_array(image)
    h, w = gray.shape
    if min(h, w) < 8:
        raise SimIndexError(f"image too small to hash ({w}x{h}, need min dimension 8)")
    plane = area_resize(gray, _RESIZE_TO)
    coefs = dctn(plane, type=2, norm="ortho")
    band = coefs[_BAND, _BAND].reshape(-1)
    band = np.where(np.abs(band) < _ZERO_SNAP, 0.0, band)
    median = float(np.median(band))
    value = 0
    for k, c in enumerate(band):
        if c > median:
            value |= 1 << (HASH_BITS - 1 - k)
    return value


def phash_from_file(path, image_id: str | None = None) -> int:
    """Hash the image file at ``path``; decode failures name the image."""
    label = image_id if image_id is not None else str(path)
    try:
        with Image.open(path) as img:
            img.load()
            return compute_phash(img)
    except (UnidentifiedImageError, OSError) as err:
        raise SimIndexError(f"cannot decode image {label!r}: {err}") from None


def hamming_distance(a: int, b: int) -> int:
    return ((a ^ b) & (2**HASH_BITS - 1)).bit_count()


def hamming_similarity(a: int, b: int) -> float:
    """1 - distance/64; exact multiples of 1/64, symmetric, 1.0 on equality."""
    return 1.0 - hamming_distance(a, b) / HASH_BITS


def format_phash(value: int) -> str:
    return f"{value:016x}"


def parse_phash(text: str) -> int:
    raw = text.strip()
    if len(raw) != 16 or any(c not in "0123456789abcdef" for c in raw):
        raise SimIndexError(f"bad hash literal {raw!r} (need 16 lowercase hex digits)")
    return int(raw, 16)


@dataclass
class _Node:
    value: int
    ids: list = field(default_factory=list)
    children: dict = field(default_factory=dict)  # distance -> _Node


class HammingIndex:
    """Exact-search BK-tree over 64-bit hashes.

    Query results are always identical to an exhaustive linear scan; the
    tree only prunes by the triangle inequality. Build once, then query
    from any number of readers.
    """

    def __init__(self):
        self._root: _Node | None = None
        self._entries: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    @property
    def entries(self) -> dict[str, int]:
        return dict(self._entries)

    def hash_of(self, entry_id: str) -> int:
        return self._entries[entry_id]

    def insert(self, entry_id: str, value: int) -> None:
        if entry_id in self._entries:
            raise SimIndexError(f"duplicate id {entry_id!r} in index")
        self._entries[entry_id] = value
        if self._root is None:
            self._root = _Node(value=value, ids=[entry_id])
            return
        node = self._root
        while True:
            dist = hamming_distance(value, node.value)
            if dist == 0:
                node.ids.append(entry_id)
                return
            child = node.children.get(dist)
            if child is None:
                node.children[dist] = _Node(value=value, ids=[entry_id])
                return
            node = child

    def query_radius(self, probe: int, radius: int) -> list[tuple[str, int]]:
        """All (id, distance) with distance <= radius, id-sorted."""
        if self._root is None:
            return []
        matches: list[tuple[str, int]] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            dist = hamming_distance(probe, node.value)
            if dist <= radius:
                matches.extend((entry_id, dist) for entry_id in node.ids)
            for edge, child in node.children.items():
                if dist - radius <= edge <= dist + radius:
                    stack.append(child)
        matches.sort()
        return matches

    def query(self, probe: int, min_similarity: float) -> list[tuple[str, float]]:
        """All (id, similarity) with similarity >= min_similarity, sorted by
        similarity descending then id ascending. Thresholds above 1.0 are
        legal and match nothing."""
        if min_similarity < 0.0:
            raise SimIndexError(f"min_similarity {min_similarity!r} is negative")
        # Over-search by one bit, then filter exactly: similarities are
        # exact multiples of 1/64, so the >= comparison is safe.
        radius = min(HASH_BITS, max(0, int((1.0 - min_similarity) * HASH_BITS) + 1))
        out = []
        for entry_id, dist in self.query_radius(probe, radius):
            sim = 1.0 - dist / HASH_BITS
            if sim >= min_similarity:
                out.append((entry_id, sim))
        out.sort(key=lambda item: (-item[1], item[0]))
        return out


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Clamped cosine of two unit vectors, sharing the [0, 1] contract of
    :func:`hamming_similarity` (negative cosine maps to 0)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise SimIndexError(f"embedding dimension mismatch: {u.shape} vs {v.shape}")
    return min(1.0, max(0.0, float(np.dot(u, v))))


class EmbeddingIndex:
    """Linear-scan near-duplicate index over unit-normalized embeddings."""

    _NORM_TOL = 1e-6

    def __init__(self):
        self._ids: list[str] = []
        self._vectors: list[np.ndarray] = []
        self._dim: int | None = None

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in set(self._ids)

    def insert(self, entry_id: str, vector) -> None:
        vec = np.asarray(vector, dtype=float)
        if vec.ndim != 1:
            raise SimIndexError(f"embedding for {entry_id!r} is not a vector")
        if self._dim is None:
            self._dim = vec.shape[0]
        elif vec.shape[0] != self._dim:
            raise SimIndexError(
                f"embedding for {entry_id!r} has dimension {vec.shape[0]}, expected {self._dim}"
            )
        if abs(float(np.linalg.norm(vec)) - 1.0) > self._NORM_TOL:
            raise SimIndexError(f"embedding for {entry_id!r} is not unit-normalized")
        if entry_id in set(self._ids):
            raise SimIndexError(f"duplicate id {entry_id!r} in index")
        self._ids.append(entry_id)
        self._vectors.append(vec)

    def query(self, probe, min_similarity: float) -> list[tuple[str, float]]:
        if min_similarity < 0.0:
            raise SimIndexError(f"min_similarity {min_similarity!r} is negative")
        out = []
        for entry_id, vec in zip(self._ids, self._vectors):
            sim = cosine_similarity(probe, vec)
            if sim >= min_similarity:
                out.append((entry_id, sim))
        out.sort(key=lambda item: (-item[1], item[0]))
        return out


def save_hash_cache(hashes: dict, stream: IO[str]) -> None:
    """Write ``id<TAB>16-hex`` lines, id-sorted."""
    for entry_id in sorted(hashes):
        stream.write(f"{entry_id}\t{format_phash(hashes[entry_id])}\n")


def load_hash_cache(stream: IO[str] | Iterable[str]) -> dict:
    hashes: dict[str, int] = {}
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SimIndexError(f"hash cache line {line_no}: expected 'id<TAB>hash'")
        entry_id, literal = parts
        if entry_id in hashes:
            raise SimIndexError(f"hash cache line {line_no}: duplicate id {entry_id!r}")
        try:
            hashes[entry_id] = parse_phash(literal)
        except SimIndexError as err:
            raise SimIndexError(f"hash cache line {line_no}: {err}") from None
    return hashes


def save_embeddings(vectors: dict, stream: IO[str]) -> None:
    for entry_id in sorted(vectors):
        parts = ",".join(repr(float(x)) for x in vectors[entry_id])
        stream.write(f"{entry_id}\t{parts}\n")


def load_embeddings(stream: IO[str] | Iterable[str]) -> dict:
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SimIndexError(f"embedding line {line_no}: expected 'id<TAB>v1,v2,...'")
        entry_id, blob = parts
        if entry_id in vectors:
            raise SimIndexError(f"embedding line {line_no}: duplicate id {entry_id!r}")
        try:
            vec = np.array([float(x) for x in blob.split(",")], dtype=float)
        except ValueError:
            raise SimIndexError(f"embedding line {line_no}: unparsable vector") from None
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise SimIndexError(f"embedding line {line_no}: dimension {vec.shape[0]} != {dim}")
        vectors[entry_id] = vec
    return vectors
