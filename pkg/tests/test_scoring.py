from __future__ import annotations

import io
import sys

import pytest

from sidtrack.scoring import (
    DetectorEndpoint,
    DetectorId,
    ProtocolError,
    ScoreFileError,
    ScoreTable,
    check_coverage,
    load_scores,
    save_scores,
    score_endpoints,
    score_via_subprocess,
)

ALPHA = DetectorId("alpha")
BETA = DetectorId("beta", "v2")


def child(body: str) -> list:
    return [sys.executable, "-c", body]


ECHO_HALF = child(
    "import sys\n"
    "for line in sys.stdin:\n"
    "    image_id, _ = line.rstrip('\\n').split('\\t')\n"
    "    print(f'{image_id}\\t0.5')\n"
)


class TestScoreFile:
    def test_empty_file(self):
        table = load_scores(io.StringIO(""))
        assert len(table) == 0
        assert table.detectors() == []

    def test_out_of_range_score_reports_line(self):
        with pytest.raises(ScoreFileError, match="line 2.*outside"):
            load_scores(io.StringIO("alpha\t\ta\t0.4\nalpha\t\tb\t1.3\n"))

    def test_duplicate_row_rejected(self):
        data = "alpha\t\ta\t0.4\nalpha\t\ta\t0.5\n"
        with pytest.raises(ScoreFileError, match="line 2.*duplicate"):
            load_scores(io.StringIO(data))

    def test_full_coverage_fixture(self):
        lines = []
        detectors = [("d1", ""), ("d2", "x"), ("d3", "")]
        for name, variant in detectors:
            for i in range(20):
                lines.append(f"{name}\t{variant}\timg{i:02d}\t0.25")
        table = load_scores(io.StringIO("\n".join(lines) + "\n"))
        assert len(table) == 60
        for name, variant in detectors:
            assert len(table.coverage(DetectorId(name, variant or None))) == 20

    def test_unknown_id_strict_vs_lenient(self):
        data = "alpha\t\tknown\t0.4\nalpha\t\tmystery\t0.6\n"
        with pytest.raises(ScoreFileError, match="unknown image id 'mystery'"):
            load_scores(io.StringIO(data), known_ids={"known"}, strict=True)
        with pytest.warns(UserWarning, match="dropped 1"):
            table = load_scores(io.StringIO(data), known_ids={"known"}, strict=False)
        assert table.coverage(ALPHA) == {"known"}

    def test_round_trip_at_six_decimals(self):
        table = ScoreTable()
        table.set(ALPHA, "a", 0.1234567891)
        table.set(ALPHA, "b", 1.0)
        table.set(BETA, "a", 0.0)
        buf = io.StringIO()
        save_scores(table, buf)
        text = buf.getvalue()
        assert "alpha\t\ta\t0.123457\n" in text
        reloaded = load_scores(io.StringIO(text))
        buf2 = io.StringIO()
        save_scores(reloaded, buf2)
        assert buf2.getvalue() == text

    def test_nan_rejected(self):
        with pytest.raises(ScoreFileError, match="outside"):
            load_scores(io.StringIO("alpha\t\ta\tnan\n"))

    def test_merge_disjoint_and_clash(self):
        left = ScoreTable()
        left.set(ALPHA, "a", 0.5)
        right = ScoreTable()
        right.set(BETA, "a", 0.6)
        left.merge(right)
        assert len(left) == 2
        clash = ScoreTable()
        clash.set(ALPHA, "a", 0.7)
        with pytest.raises(ScoreFileError, match="duplicate"):
            left.merge(clash)


class TestSubprocessProtocol:
    def test_zero_requests(self):
        result = score_via_subprocess(ALPHA, ECHO_HALF, [])
        assert result.scores == {} and result.errors == []

    def test_echo_detector_five_ids(self):
        requests = [(f"img{i}", f"/tmp/img{i}.png") for i in range(5)]
        result = score_via_subprocess(ALPHA, ECHO_HALF, requests)
        assert result.scores == {f"img{i}": 0.5 for i in range(5)}
        table = result.to_table()
        assert table.get(ALPHA, "img3") == 0.5

    def test_malformed_output_line(self):
        bad = child("print('oops')")
        with pytest.raises(ProtocolError, match="line 1 malformed"):
            score_via_subprocess(ALPHA, bad, [("a", "/tmp/a.png")])

    def test_error_record_collected(self):
        erroring = child(
            "import sys\n"
            "for line in sys.stdin:\n"
            "    image_id, path = line.rstrip('\\n').split('\\t')\n"
            "    if image_id == 'bad':\n"
            "        print(f'{image_id}\\tERROR\\tunreadable file')\n"
            "    else:\n"
            "        print(f'{image_id}\\t0.25')\n"
        )
        result = score_via_subprocess(
            ALPHA, erroring, [("ok", "/tmp/x.png"), ("bad", "/tmp/y.png")]
        )
        assert result.scores == {"ok": 0.25}
        assert result.errors == [("bad", "unreadable file")]

    def test_timeout_lists_missing(self):
        sleeper = child("import time; time.sleep(60)")
        with pytest.raises(ProtocolError, match="timed out.*a1"):
            score_via_subprocess(ALPHA, sleeper, [("a1", "/tmp/a.png")], timeout=0.5)

    def test_nonzero_exit(self):
        dying = child("import sys; sys.exit(4)")
        with pytest.raises(ProtocolError, match="exited with code 4"):
            score_via_subprocess(ALPHA, dying, [])

    def test_missing_ids_listed(self):
        partial = child(
            "import sys\n"
            "lines = sys.stdin.readlines()\n"
            "image_id, _ = lines[0].rstrip('\\n').split('\\t')\n"
            "print(f'{image_id}\\t0.5')\n"
        )
        with pytest.raises(ProtocolError, match="unanswered: b, c"):
            score_via_subprocess(
                ALPHA, partial, [("a", "/x.png"), ("b", "/y.png"), ("c", "/z.png")]
            )

    def test_unrequested_id_rejected(self):
        rogue = child("import sys; sys.stdin.read(); print('ghost\\t0.5')")
        with pytest.raises(ProtocolError, match="unrequested id 'ghost'"):
            score_via_subprocess(ALPHA, rogue, [("a", "/x.png")])

    def test_duplicate_answer_rejected(self):
        stutter = child("import sys; sys.stdin.read(); print('a\\t0.5'); print('a\\t0.5')")
        with pytest.raises(ProtocolError, match="twice"):
            score_via_subprocess(ALPHA, stutter, [("a", "/x.png")])

    def test_out_of_range_child_score(self):
        wild = child("import sys; sys.stdin.read(); print('a\\t7.5')")
        with pytest.raises(ProtocolError, match="outside"):
            score_via_subprocess(ALPHA, wild, [("a", "/x.png")])

    def test_tab_in_request_rejected(self):
        with pytest.raises(ValueError, match="tab"):
            score_via_subprocess(ALPHA, ECHO_HALF, [("a\tb", "/x.png")])

    def test_concurrent_endpoints(self):
        import shlex

        cmd = " ".join(shlex.quote(part) for part in ECHO_HALF)
        endpoints = [
            DetectorEndpoint(ALPHA, "subprocess", cmd, timeout=30),
            DetectorEndpoint(BETA, "subprocess", cmd, timeout=30),
        ]
        requests = [(f"i{k}", f"/tmp/i{k}.png") for k in range(4)]
        results = score_endpoints(endpoints, requests)
        assert [r.detector for r in results] == [ALPHA, BETA]
        merged = ScoreTable()
        for r in results:
            merged.merge(r.to_table())
        assert len(merged) == 8


class TestCoverage:
    def test_full_coverage_empty_report(self):
        table = ScoreTable()
        for i in ("a", "b"):
            table.set(ALPHA, i, 0.5)
        assert check_coverage(table, ["a", "b"], [ALPHA]) == []

    def test_one_missing_pair(self):
        table = ScoreTable()
        table.set(ALPHA, "a", 0.5)
        assert check_coverage(table, ["a", "b"], [ALPHA]) == [(ALPHA, "b")]

    def test_disjoint_detector_lists_everything(self):
        table = ScoreTable()
        table.set(ALPHA, "a", 0.5)
        missing = check_coverage(table, ["a", "b"], [ALPHA, BETA])
        assert missing == [(ALPHA, "b"), (BETA, "a"), (BETA, "b")]

    def test_label_convention_never_inverted(self, corpus_scores):
        # the weak corpus detector stays below chance after every load/save
        # round trip: no silent inversion anywhere in the pipeline
        buf = io.StringIO()
        save_scores(corpus_scores, buf)
        reloaded = load_scores(io.StringIO(buf.getvalue()))
        for detector in corpus_scores.detectors():
            for image_id, value in corpus_scores.scores_of(detector).items():
                assert reloaded.get(detector, image_id) == pytest.approx(value, abs=5e-7)
