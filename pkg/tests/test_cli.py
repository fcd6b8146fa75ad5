import json
import subprocess
import sys
from pathlib import Path

import pytest

import algomarket
from algomarket.cli import main, parse_lengths, parse_mode, UsageError
from algomarket.distributions import load_distributions

DATA = Path(__file__).parent / "data"
SAMPLE = Path(algomarket.__file__).parent / "data" / "sample"
GOLDEN = str(DATA / "golden_prices.csv")


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


class TestParsers:
    def test_lengths(self):
        assert parse_lengths("4-6") == [4, 5, 6]
        assert parse_lengths("3,5,4-5") == [3, 4, 5]
        with pytest.raises(UsageError):
            parse_lengths("x")
        with pytest.raises(UsageError):
            parse_lengths("0-2")

    def test_mode(self):
        assert parse_mode("exhaustive", 3) == ("exhaustive", 0, 3)
        assert parse_mode("sample:100000:seed=7", 0) == ("sample", 100_000, 7)
        with pytest.raises(UsageError):
            parse_mode("sample", 0)


class TestEncode:
    def test_default_quantum(self, tmp_path):
        out = tmp_path / "bits.json"
        assert run("encode", GOLDEN, "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["bits"] == (DATA / "golden_bits_q0.4.txt").read_text().strip()
        assert doc["quantum"] == 0.4
        assert doc["metadata"]["config"]["quantum"] == 0.4

    def test_zero_quantum(self, tmp_path):
        out = tmp_path / "bits.json"
        assert run("encode", GOLDEN, "--quantum", 0, "--out", out) == 0
        assert json.loads(out.read_text())["bits"] == (DATA / "golden_bits_q0.txt").read_text().strip()

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ALGOMARKET_QUANTUM", "0")
        out = tmp_path / "bits.json"
        assert run("encode", GOLDEN, "--out", out) == 0
        assert json.loads(out.read_text())["quantum"] == 0.0

    def test_window(self, tmp_path, capsys):
        assert run("encode", GOLDEN, "--start", "2001-03-01", "--end", "2001-03-06", "--quantum", 0) == 0
        assert json.loads(capsys.readouterr().out)["bits"] == "101"

    def test_missing_file(self, tmp_path):
        assert run("encode", tmp_path / "nope.csv") == 2

    def test_unknown_flag(self):
        assert run("encode", GOLDEN, "--bogus") == 1


class TestDist:
    def test_json_and_csv(self, tmp_path):
        bits = tmp_path / "bits.json"
        run("encode", GOLDEN, "--quantum", 0, "--out", bits)
        assert run("dist", bits, "-n", 2, "--out", tmp_path / "d.csv") == 0
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "tuple,count,probability"
        assert run("dist", GOLDEN, "-n", "2-3", "--out", tmp_path / "d.json") == 0
        assert sorted(load_distributions(tmp_path / "d.json")) == [2, 3]

    def test_insufficient(self, tmp_path):
        assert run("dist", GOLDEN, "-n", 20, "--out", tmp_path / "d.json") == 2


class TestTmEnum:
    def test_two_state(self, tmp_path, capsys):
        out = tmp_path / "tm2.json"
        assert run("tm-enum", "--states", 2, "--lengths", "1-6", "--out", out, "--jobs", 1) == 0
        assert "0 violation" in capsys.readouterr().err
        doc = json.loads(out.read_text())
        assert doc["metadata"]["job"]["step_bound"] == 6
        assert doc["metadata"]["symmetry_violations"] == 0

    def test_sharded_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("tm-enum", "--states", 2, "--lengths", "3", "--out", a, "--jobs", 1)
        run("tm-enum", "--states", 2, "--lengths", "3", "--out", b, "--shards", 5, "--jobs", 2)
        da, db = json.loads(a.read_text()), json.loads(b.read_text())
        assert da["distributions"] == db["distributions"]

    def test_single_shard_then_merge(self, tmp_path):
        out = tmp_path / "t.json"
        assert run("tm-enum", "--states", 2, "--lengths", "3", "--shards", 3, "--shard-index", 1, "--out", out) == 0
        assert not out.exists()
        assert (tmp_path / "t.json.shards" / "shard-00001-of-00003.json").exists()
        assert run("tm-enum", "--states", 2, "--lengths", "3", "--shards", 3, "--out", out) == 0
        assert out.exists()

    def test_budget_guard(self, tmp_path):
        assert run("tm-enum", "--states", 4, "--out", tmp_path / "x.json") == 3

    def test_bad_shard_index(self, tmp_path):
        assert run("tm-enum", "--states", 2, "--shards", 2, "--shard-index", 5, "--out", tmp_path / "x.json") == 1

    def test_bad_mode(self, tmp_path):
        assert run("tm-enum", "--mode", "sometimes", "--out", tmp_path / "x.json") == 1

    def test_sample(self, tmp_path):
        out = tmp_path / "s.json"
        assert run("tm-enum", "--states", 4, "--mode", "sample:3000:seed=7", "--lengths", "3-4", "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["metadata"]["job"]["seed"] == 7
        assert doc["metadata"]["job"]["sample_count"] == 3000
        assert "seed=7" in doc["distributions"][0]["source_label"]


class TestCaSample:
    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "sub" / "b.json"
        for out in (a, b):
            assert run("ca-sample", "--count", 50, "--steps", 20, "--lengths", "4-5", "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_pgm(self, tmp_path):
        pgm = tmp_path / "x.pgm"
        run("ca-sample", "--count", 3, "--steps", 5, "--pgm", pgm, "--out", tmp_path / "c.json")
        assert pgm.read_bytes().startswith(b"P2\n")


class TestCompare:
    def test_self(self, tmp_path, capsys):
        d = tmp_path / "d.json"
        run("dist", GOLDEN, "-n", "2-3", "--quantum", 0, "--out", d)
        capsys.readouterr()
        assert run("compare", d, d) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "tuple_length,rho,n_compared,cell"
        assert lines[1].startswith("2,1.0,")

    def test_no_shared_length(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("dist", GOLDEN, "-n", 2, "--out", a)
        run("dist", GOLDEN, "-n", 3, "--out", b)
        assert run("compare", a, b) == 2


class TestReports:
    def test_matrix(self, tmp_path, capsys):
        out = tmp_path / "rep"
        code = run("matrix", "--config", SAMPLE / "experiment.yaml", "--comparisons",
                   "market_market,market_random", "--out-dir", out, "--plot")
        assert code == 0
        names = sorted(p.name for p in out.iterdir())
        assert "market_market.csv" in names and "market_market.md" in names
        assert "matrices.json" in names and "market_market.png" in names
        rows = (out / "market_market.csv").read_text().splitlines()
        assert len(rows) == 16 and rows[0] == "pair,4,5,6,7,8,9,10"

    def test_matrix_bad_comparison(self, tmp_path):
        assert run("matrix", "--config", SAMPLE / "experiment.yaml", "--comparisons", "nope",
                   "--out-dir", tmp_path) == 1

    def test_backtest(self, tmp_path, capsys):
        code = run("backtest", "--config", SAMPLE / "experiment.yaml", "--windows",
                   "1980-01-01:1989-12-31", "--comparisons", "market_market", "--format", "csv",
                   "--out-dir", tmp_path)
        assert code == 0
        assert "MKT_D" in capsys.readouterr().err
        rows = (tmp_path / "1980-01-01_1989-12-31_market_market.csv").read_text().splitlines()
        assert len(rows) == 4

    def test_backtest_empty_window(self, tmp_path):
        assert run("backtest", "--config", SAMPLE / "experiment.yaml", "--windows", "1950-01-01:1960-01-01",
                   "--comparisons", "market_market", "--out-dir", tmp_path) == 2


class TestToys:
    def test_rule90(self, tmp_path):
        out, png = tmp_path / "r.csv", tmp_path / "r.png"
        assert run("rule90", "--width", 20, "--steps", 30, "--out", out, "--plot", png) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "step,value" and len(lines) == 31
        assert png.stat().st_size > 0

    def test_tail(self, tmp_path):
        out = tmp_path / "t.csv"
        assert run("tail", SAMPLE / "mkt_a.csv", "--out", out, "--plot", tmp_path / "t.png") == 0
        assert out.read_text().startswith("bin_center,observed,expected,excess")


def test_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "algomarket.cli", "rule90", "--width", "5", "--steps", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "step,value"
