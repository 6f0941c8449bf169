from __future__ import annotations

import io
import json
import random

import numpy as np
import pytest
from PIL import Image

from oracles import area_resize_naive, phash_naive
from sidtrack.simindex import (
    EmbeddingIndex,
    HammingIndex,
    SimIndexError,
    area_resize,
    compute_phash,
    cosine_similarity,
    format_phash,
    hamming_distance,
    hamming_similarity,
    load_embeddings,
    load_hash_cache,
    parse_phash,
    phash_from_file,
    save_embeddings,
    save_hash_cache,
)


class TestPhash:
    def test_identical_pixels_identical_hash(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(50, 70, 3)).astype(np.uint8)
        assert compute_phash(img) == compute_phash(img.copy())

    def test_constant_image_is_all_zero_bits(self):
        assert compute_phash(np.full((40, 40), 128, dtype=np.uint8)) == 0

    def test_golden_vectors(self, golden_dir):
        golden = json.loads((golden_dir / "phash_golden.json").read_text())
        for name, expected in golden.items():
            with Image.open(golden_dir / f"{name}.png") as img:
                assert format_phash(compute_phash(img)) == expected, name

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(4):
            h, w = rng.integers(8, 90, size=2)
            img = rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)
            assert compute_phash(img) == phash_naive(img)

    def test_area_resize_matches_oracle_on_fractional_boxes(self):
        rng = np.random.default_rng(9)
        for shape in [(33, 47), (50, 81), (8, 8)]:
            gray = rng.uniform(0, 255, size=shape)
            assert np.allclose(area_resize(gray, 32), area_resize_naive(gray, 32), atol=1e-9)

    def test_reencode_invariance_lossless(self, corpus_dir):
        # PNG round-trip preserves pixels exactly, so hashes must match
        path = corpus_dir / "images" / "s01.png"
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"))
        buf = io.BytesIO()
        Image.fromarray(pixels).save(buf, format="PNG", compress_level=1)
        buf.seek(0)
        with Image.open(buf) as img:
            assert compute_phash(img) == compute_phash(pixels)

    def test_too_small_rejected(self):
        with pytest.raises(SimIndexError, match="too small"):
            compute_phash(np.zeros((4, 100), dtype=np.uint8))

    def test_undecodable_file_names_image(self, tmp_path):
        bad = tmp_path / "garbage.png"
        bad.write_bytes(b"not an image")
        with pytest.raises(SimIndexError, match="cannot decode image 'img-9'"):
            phash_from_file(bad, "img-9")


class TestHammingSimilarity:
    def test_identity(self):
        assert hamming_similarity(0xDEADBEEF, 0xDEADBEEF) == 1.0

    def test_complement(self):
        a = 0x0123456789ABCDEF
        assert hamming_similarity(a, a ^ (2**64 - 1)) == 0.0

    def test_distance_19_sits_above_default_threshold(self):
        a = 0
        b = (1 << 19) - 1
        assert hamming_distance(a, b) == 19
        assert hamming_similarity(a, b) == 0.703125
        assert hamming_similarity(a, (1 << 20) - 1) == 0.6875

    def test_symmetry_and_triangle(self):
        rng = random.Random(77)
        values = [rng.getrandbits(64) for _ in range(30)]
        for a in values[:10]:
            for b in values[10:20]:
                assert hamming_distance(a, b) == hamming_distance(b, a)
                for c in values[20:]:
                    assert hamming_distance(a, c) <= (
                        hamming_distance(a, b) + hamming_distance(b, c)
                    )


class TestHammingIndex:
    def test_empty_query(self):
        assert HammingIndex().query(0, 0.7) == []

    def test_insert_then_exact_query(self):
        index = HammingIndex()
        index.insert("a", 0xFF)
        assert index.query(0xFF, 1.0) == [("a", 1.0)]

    def test_same_hash_two_ids(self):
        index = HammingIndex()
        index.insert("b", 0xFF)
        index.insert("a", 0xFF)
        assert index.query(0xFF, 1.0) == [("a", 1.0), ("b", 1.0)]

    def test_duplicate_id_rejected(self):
        index = HammingIndex()
        index.insert("a", 1)
        with pytest.raises(SimIndexError, match="duplicate id"):
            index.insert("a", 2)

    def test_min_similarity_zero_returns_all(self):
        index = HammingIndex()
        rng = random.Random(5)
        for i in range(50):
            index.insert(f"e{i}", rng.getrandbits(64))
        assert len(index.query(rng.getrandbits(64), 0.0)) == 50

    def test_threshold_filters_by_distance(self):
        index = HammingIndex()
        index.insert("near", (1 << 5) - 1)   # distance 5 from zero
        index.insert("far", (1 << 20) - 1)   # distance 20 from zero
        result = index.query(0, 0.7)
        assert result == [("near", 1 - 5 / 64)]

    def test_matches_linear_scan(self):
        rng = random.Random(123)
        entries = {f"h{i}": rng.getrandbits(64) for i in range(1000)}
        index = HammingIndex()
        for entry_id, value in entries.items():
            index.insert(entry_id, value)
        for _ in range(100):
            probe = rng.getrandbits(64)
            radius = rng.choice([0, 3, 19, 25])
            got = set(index.query_radius(probe, radius))
            expected = {
                (i, hamming_distance(probe, v))
                for i, v in entries.items()
                if hamming_distance(probe, v) <= radius
            }
            assert got == expected

    def test_similarity_query_matches_scan_at_exact_boundary(self):
        rng = random.Random(321)
        entries = {f"h{i}": rng.getrandbits(64) for i in range(300)}
        index = HammingIndex()
        for entry_id, value in entries.items():
            index.insert(entry_id, value)
        probe = rng.getrandbits(64)
        for threshold in (0.6875, 0.703125, 0.7, 0.5):
            got = index.query(probe, threshold)
            expected = sorted(
                (
                    (i, hamming_similarity(probe, v))
                    for i, v in entries.items()
                    if hamming_similarity(probe, v) >= threshold
                ),
                key=lambda item: (-item[1], item[0]),
            )
            assert got == expected


class TestEmbeddingBackend:
    def test_cosine_identity_orthogonal_antipodal(self):
        u = np.array([1.0, 0.0, 0.0])
        v = np.array([0.0, 1.0, 0.0])
        assert cosine_similarity(u, u) == 1.0
        assert cosine_similarity(u, v) == 0.0
        assert cosine_similarity(u, -u) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(SimIndexError, match="dimension mismatch"):
            cosine_similarity(np.ones(3) / np.sqrt(3), np.ones(4) / 2.0)

    def test_index_query_and_validation(self):
        index = EmbeddingIndex()
        index.insert("x", [1.0, 0.0])
        index.insert("y", [0.0, 1.0])
        with pytest.raises(SimIndexError, match="unit-normalized"):
            index.insert("z", [2.0, 0.0])
        with pytest.raises(SimIndexError, match="dimension"):
            index.insert("w", [1.0, 0.0, 0.0])
        assert index.query([1.0, 0.0], 0.7) == [("x", 1.0)]
        assert index.query([1.0, 0.0], 0.0) == [("x", 1.0), ("y", 0.0)]


class TestCacheFiles:
    def test_hash_cache_round_trip(self):
        rng = random.Random(9)
        hashes = {f"img{i}": rng.getrandbits(64) for i in range(25)}
        buf = io.StringIO()
        save_hash_cache(hashes, buf)
        assert load_hash_cache(io.StringIO(buf.getvalue())) == hashes

    def test_corpus_cache_matches_recomputed_hashes(self, corpus_dir, corpus_hashes, corpus_manifest):
        for record in corpus_manifest.records:
            value = phash_from_file(corpus_dir / record.file_path, record.id)
            assert value == corpus_hashes[record.id], record.id

    def test_corrupt_cache_line(self):
        with pytest.raises(SimIndexError, match="line 2"):
            load_hash_cache(io.StringIO("a\t0000000000000000\nb\tnothex\n"))

    def test_duplicate_cache_id(self):
        line = "a\t0000000000000000\n"
        with pytest.raises(SimIndexError, match="duplicate id"):
            load_hash_cache(io.StringIO(line + line))

    def test_phash_literal_round_trip(self):
        assert parse_phash(format_phash(0xDEADBEEF)) == 0xDEADBEEF

    def test_embedding_round_trip(self):
        vectors = {"a": np.array([0.6, 0.8]), "b": np.array([1.0, 0.0])}
        buf = io.StringIO()
        save_embeddings(vectors, buf)
        loaded = load_embeddings(io.StringIO(buf.getvalue()))
        for key, vec in vectors.items():
            assert np.array_equal(loaded[key], vec)


class TestCorpusRobustness:
    def test_reencode_and_downscale_keep_similarity(self, corpus_dir, corpus_hashes, corpus_manifest):
        """JPEG quality 70 and 50% downscale keep similarity >= 0.7 for at
        least 90% of the bundled corpus."""
        survived = 0
        total = 0
        for record in corpus_manifest.records:
            with Image.open(corpus_dir / record.file_path) as img:
                pixels = np.asarray(img.convert("RGB"))
            original = corpus_hashes[record.id]

            buf = io.BytesIO()
            Image.fromarray(pixels).save(buf, format="JPEG", quality=70)
            buf.seek(0)
            with Image.open(buf) as jpeg_img:
                jpeg_hash = compute_phash(np.asarray(jpeg_img.convert("RGB")))

            small = Image.fromarray(pixels).resize(
                (pixels.shape[1] // 2, pixels.shape[0] // 2), Image.Resampling.BOX
            )
            small_hash = compute_phash(np.asarray(small))

            total += 1
            if (
                hamming_similarity(original, jpeg_hash) >= 0.7
                and hamming_similarity(original, small_hash) >= 0.7
            ):
                survived += 1
        assert survived >= 0.9 * total
