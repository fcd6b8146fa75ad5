import dataclasses
import datetime as dt
import json
from pathlib import Path

import numpy as np
import pytest

import algomarket
from algomarket.analysis import (
    COMPARISONS,
    ConfigError,
    CorrelationMatrix,
    ExperimentConfig,
    MissingArtifactError,
    backtest,
    emit_report,
    load_config,
    matrices_from_json,
    matrices_to_json,
    parse_window,
    render_csv,
    render_markdown,
    run_experiment,
)
from algomarket.distributions import CorrelationReport
from algomarket.market import DataError, PriceSeries

SAMPLE = Path(algomarket.__file__).parent / "data" / "sample"


@pytest.fixture(scope="module")
def cfg():
    return load_config(SAMPLE / "experiment.yaml")


@pytest.fixture(scope="module")
def matrices(cfg):
    return run_experiment(cfg)


def toy_series(symbol, seed, n=400, start=dt.date(2000, 1, 3)):
    rng = np.random.default_rng(seed)
    closes = 100 + np.cumsum(rng.normal(0, 1, n))
    closes = np.round(closes - closes.min() + 10, 2)
    dates = tuple(start + dt.timedelta(days=i) for i in range(n))
    return PriceSeries(symbol, dates, tuple(float(c) for c in closes))


class TestConfig:
    def test_sample_loads(self, cfg):
        assert len(cfg.markets) == 6
        assert cfg.comparisons == COMPARISONS
        assert cfg.lengths_for("market_tm") == (5, 6, 7, 8, 9, 10)
        assert cfg.lengths_for("market_market") == (4, 5, 6, 7, 8, 9, 10)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"markets": ["a.csv"], "colour": 1})

    def test_unknown_comparison(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"markets": ["a.csv"], "comparisons": ["market_dice"]})

    def test_round_trip(self, cfg):
        again = ExperimentConfig.from_dict(cfg.to_dict(), cfg.base_dir)
        assert again == cfg

    def test_parse_window(self):
        assert parse_window("1980-01-01:1990-12-31") == (dt.date(1980, 1, 1), dt.date(1990, 12, 31))
        with pytest.raises(ConfigError):
            parse_window("1980")


class TestExperiment:
    def test_shapes(self, matrices):
        assert set(matrices) == set(COMPARISONS)
        assert matrices["market_market"].shape == (15, 7)
        assert matrices["rounded_rounded"].shape == (15, 7)
        assert matrices["market_random"].shape == (6, 7)
        assert matrices["market_tm"].shape == (6, 6)
        assert matrices["market_tm"].columns == [5, 6, 7, 8, 9, 10]
        assert matrices["market_ca"].shape == (6, 7)

    def test_row_labels(self, matrices):
        labels = matrices["market_market"].row_labels
        assert labels[0] == "MKT_A vs. MKT_B" and labels == sorted(labels)
        assert matrices["market_tm"].row_labels[0] == "MKT_A vs. TM"

    def test_values_in_range(self, matrices):
        for m in matrices.values():
            rho = m.rho_array()
            ok = rho[~np.isnan(rho)]
            assert np.all((ok >= -1) & (ok <= 1))
            for row in m.cells:
                for n, c in zip(m.columns, row):
                    assert c.n_compared <= 2 ** n

    def test_deterministic(self, cfg, matrices):
        again = run_experiment(cfg)
        assert matrices_to_json(again) == matrices_to_json(matrices)

    def test_identical_series_rho_one(self):
        s = toy_series("A", 1)
        twin = dataclasses.replace(s, symbol="B")
        cfg = ExperimentConfig(markets=[("A", Path("a")), ("B", Path("b"))], tuple_lengths=(3, 4))
        m = run_experiment(cfg, {"A": s, "B": twin})["market_market"]
        assert [c.rho for c in m.cells[0]] == [1.0, 1.0]

    def test_order_invariance(self):
        series = {k: toy_series(k, i) for i, k in enumerate("PQR")}
        cfg = ExperimentConfig(markets=[(k, Path(k)) for k in "PQR"], tuple_lengths=(3, 4),
                               comparisons=("market_market", "market_random"))
        a = run_experiment(cfg, series)
        b = run_experiment(cfg, dict(reversed(list(series.items()))))
        assert matrices_to_json(a) == matrices_to_json(b)

    def test_short_series_gives_empty(self):
        short = toy_series("S", 2, n=4)
        cfg = ExperimentConfig(markets=[("S", Path("s")), ("T", Path("t"))], tuple_lengths=(2, 8))
        m = run_experiment(cfg, {"S": short, "T": toy_series("T", 3)})["market_market"]
        assert m.cells[0][1].n_compared == 0 and m.cells[0][1].rho is None

    def test_missing_artifact(self, tmp_path):
        cfg = ExperimentConfig(markets=[("A", Path("a"))], comparisons=("market_tm",),
                               tm={"path": "nowhere.json"}, base_dir=tmp_path)
        with pytest.raises(MissingArtifactError, match="nowhere.json"):
            run_experiment(cfg, {"A": toy_series("A", 0)})

    def test_missing_machine_entry(self):
        cfg = ExperimentConfig(markets=[("A", Path("a"))], comparisons=("market_ca",))
        with pytest.raises(MissingArtifactError):
            run_experiment(cfg, {"A": toy_series("A", 0)})

    def test_computed_tm(self):
        cfg = ExperimentConfig(markets=[("A", Path("a"))], comparisons=("market_tm",),
                               tuple_lengths=(3, 4), tm={"states": 2})
        m = run_experiment(cfg, {"A": toy_series("A", 0, n=2000)})["market_tm"]
        assert m.shape == (1, 2) and m.columns == [3, 4]


class TestBacktest:
    def test_eighties(self, cfg):
        (w,) = backtest(cfg, [(dt.date(1980, 1, 1), dt.date(1990, 12, 31))])
        assert w.dropped == []
        assert w.matrices["market_ca"].shape[0] == 6
        (w,) = backtest(cfg, [(dt.date(1980, 1, 1), dt.date(1989, 12, 31))])
        assert w.dropped == ["MKT_D", "MKT_E", "MKT_F"]
        assert w.matrices["market_ca"].shape[0] == 3
        assert w.matrices["market_market"].shape[0] == 3
        assert w.label == "1980-01-01_1989-12-31"

    def test_same_window_twice(self, cfg):
        win = (dt.date(1995, 1, 1), dt.date(1999, 12, 31))
        a, b = backtest(cfg, [win, win])
        assert matrices_to_json(a.matrices) == matrices_to_json(b.matrices)

    def test_no_data(self, cfg):
        with pytest.raises(DataError):
            backtest(cfg, [(dt.date(1950, 1, 1), dt.date(1960, 1, 1))])

    def test_bad_window(self, cfg):
        with pytest.raises(ConfigError):
            backtest(cfg, [(dt.date(1990, 1, 1), dt.date(1980, 1, 1))])


class TestReports:
    @pytest.fixture
    def small(self):
        cells = [[CorrelationReport(0.73, 55, 10), CorrelationReport(None, 1, 11)]]
        return {"market_market": CorrelationMatrix("market_market", ["A vs. B"], [10, 11], cells)}

    def test_cells(self, small):
        md = render_markdown(small["market_market"])
        assert "| A vs. B | 0.73|55 | –|1 |" in md
        assert render_csv(small["market_market"]).splitlines()[1] == "A vs. B,0.73|55,–|1"

    def test_json_round_trip(self, small, matrices):
        for m in (small, matrices):
            back = matrices_from_json(matrices_to_json(m, {"seed": 0}))
            assert back == dict(m)

    def test_emit(self, small, tmp_path):
        paths = emit_report(small, "csv", tmp_path, stem="w1")
        assert [p.name for p in paths] == ["w1_market_market.csv"]
        (p,) = emit_report(small, "json", tmp_path, {"k": 1})
        assert json.loads(p.read_text())["metadata"] == {"k": 1}
        (p,) = emit_report(small, "markdown", tmp_path)
        assert p.suffix == ".md"

    def test_emit_errors(self, small, tmp_path):
        with pytest.raises(ValueError):
            emit_report({}, "csv", tmp_path)
        with pytest.raises(ValueError):
            emit_report(small, "xlsx", tmp_path)
