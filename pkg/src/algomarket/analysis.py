"""Correlation matrices between market, random and machine-generated distributions."""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import zlib
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from . import ca_engine, tm_engine
from .baselines import random_direction_series
from .distributions import (
    CorrelationReport,
    TupleDistribution,
    build_distribution,
    empty_distribution,
    load_distributions,
    spearman,
)
from .market import DataError, DEFAULT_QUANTUM, PriceSeries, align_windows, encode_directions, ingest_csv

log = logging.getLogger(__name__)

COMPARISONS = (
    "market_market",
    "rounded_rounded",
    "market_random",
    "rounded_random",
    "market_tm",
    "market_ca",
)
DEFAULT_LENGTHS = tuple(range(4, 11))
DEFAULT_COMPARISON_LENGTHS = {"market_tm": tuple(range(5, 11))}
TITLES = {
    "market_market": "market vs. market",
    "rounded_rounded": "rounded market vs. rounded market",
    "market_random": "market vs. random",
    "rounded_random": "rounded market vs. random",
    "market_tm": "market vs. TM",
    "market_ca": "market vs. CA",
}


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


def _date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value))


@dataclass
class ExperimentConfig:
    markets: list[tuple[str, Path]]
    window: tuple[dt.date, dt.date] | None = None
    quantum: float = DEFAULT_QUANTUM
    tuple_lengths: tuple[int, ...] = DEFAULT_LENGTHS
    comparisons: tuple[str, ...] = ("market_market",)
    lengths: dict[str, tuple[int, ...]] = field(default_factory=dict)
    support: str = "intersection"
    seed: int = 0
    tm: dict | None = None
    ca: dict | None = None
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if not self.comparisons:
            raise ConfigError("select at least one comparison")
        for c in self.comparisons:
            if c not in COMPARISONS:
                raise ConfigError(f"unknown comparison {c!r}; choose from {', '.join(COMPARISONS)}")
        if self.quantum < 0:
            raise ConfigError("quantum must be non-negative")
        if self.support not in ("intersection", "union"):
            raise ConfigError(f"unknown support {self.support!r}")
        for n in self.tuple_lengths:
            if not 1 <= n <= 20:
                raise ConfigError(f"tuple length {n} outside 1..20")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ConfigError("window start must precede end")
        symbols = [s for s, _ in self.markets]
        if len(set(symbols)) != len(symbols):
            raise ConfigError("market symbols must be unique")

    def lengths_for(self, comparison: str) -> tuple[int, ...]:
        if comparison in self.lengths:
            return tuple(self.lengths[comparison])
        if comparison in DEFAULT_COMPARISON_LENGTHS and tuple(self.tuple_lengths) == DEFAULT_LENGTHS:
            return DEFAULT_COMPARISON_LENGTHS[comparison]
        return tuple(self.tuple_lengths)

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return {
            "markets": [{"symbol": s, "csv": str(p)} for s, p in self.markets],
            "window": None if self.window is None else [d.isoformat() for d in self.window],
            "quantum": self.quantum,
            "tuple_lengths": list(self.tuple_lengths),
            "comparisons": list(self.comparisons),
            "lengths": {k: list(v) for k, v in sorted(self.lengths.items())},
            "support": self.support,
            "seed": self.seed,
            "tm": self.tm,
            "ca": self.ca,
        }

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir=".") -> "ExperimentConfig":
        unknown = set(doc) - {"markets", "window", "quantum", "tuple_lengths", "comparisons",
                              "lengths", "support", "seed", "tm", "ca"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if not doc.get("markets"):
            raise ConfigError("config needs a non-empty 'markets' list")
        markets = []
        for m in doc["markets"]:
            if isinstance(m, str):
                markets.append((Path(m).stem, Path(m)))
            else:
                markets.append((str(m["symbol"]), Path(m["csv"])))
        window = doc.get("window")
        if window is not None:
            if isinstance(window, Mapping):
                window = (window["start"], window["end"])
            window = (_date(window[0]), _date(window[1]))
        return cls(
            markets=markets,
            window=window,
            quantum=float(doc.get("quantum", DEFAULT_QUANTUM)),
            tuple_lengths=tuple(int(n) for n in doc.get("tuple_lengths", DEFAULT_LENGTHS)),
            comparisons=tuple(doc.get("comparisons", ("market_market",))),
            lengths={k: tuple(int(n) for n in v) for k, v in (doc.get("lengths") or {}).items()},
            support=doc.get("support", "intersection"),
            seed=int(doc.get("seed", 0)),
            tm=doc.get("tm"),
            ca=doc.get("ca"),
            base_dir=Path(base_dir),
        )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(doc, base_dir=path.parent)


@dataclass
class CorrelationMatrix:
    comparison: str
    row_labels: list[str]
    columns: list[int]
    cells: list[list[CorrelationReport]]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_labels), len(self.columns)

    def to_dict(self) -> dict:
        return {
            "comparison": self.comparison,
            "columns": list(self.columns),
            "rows": [
                {"label": label, "cells": [c.to_dict() for c in row]}
                for label, row in zip(self.row_labels, self.cells)
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CorrelationMatrix":
        return cls(
            doc["comparison"],
            [r["label"] for r in doc["rows"]],
            [int(c) for c in doc["columns"]],
            [[CorrelationReport.from_dict(c) for c in r["cells"]] for r in doc["rows"]],
        )

    def rho_array(self) -> np.ndarray:
        return np.array([[np.nan if c.rho is None else c.rho for c in row] for row in self.cells],
                        dtype=float).reshape(self.shape)


def _dist(bits: str, n: int, label: str) -> TupleDistribution:
    if len(bits) < n:
        return empty_distribution(n, label)
    return build_distribution(bits, n, label)


def _derived_seed(seed: int, *parts: str) -> int:
    salt = [zlib.crc32(p.encode("utf-8")) for p in parts]
    return int(np.random.SeedSequence([seed, *salt]).generate_state(1)[0])


def _matrix(comparison, rows: list[tuple[str, str, str]], lengths, support,
            sources: Mapping[str, Mapping[int, TupleDistribution]] | None = None,
            bit_sources: Mapping[str, str] | None = None) -> CorrelationMatrix:
    rows = sorted(rows, key=lambda r: r[0])
    cells = []
    for label, left, right in rows:
        row = []
        for n in lengths:
            a = _dist(bit_sources[left], n, left)
            if right in bit_sources:
                b = _dist(bit_sources[right], n, right)
            else:
                b = sources[right].get(n)
                if b is None:
                    raise MissingArtifactError(f"{right} distribution has no tuple length {n}")
            row.append(spearman(a, b, support))
        cells.append(row)
    return CorrelationMatrix(comparison, [r[0] for r in rows], list(lengths), cells)


def _machine_distributions(kind: str, spec: Mapping | None, cfg: ExperimentConfig,
                           lengths: Sequence[int], jobs: int = 1) -> dict[int, TupleDistribution]:
    if spec is None:
        raise MissingArtifactError(f"comparison needs a {kind.upper()} distribution but config has no '{kind}' entry")
    if "path" in spec:
        path = cfg.resolve(spec["path"])
        if not path.exists():
            raise MissingArtifactError(f"precomputed {kind.upper()} distribution not found: {path}")
        return load_distributions(path)
    if kind == "tm":
        mode = spec.get("mode", "exhaustive")
        job = tm_engine.EnumerationJob(
            n_states=int(spec.get("states", 2)),
            step_bound=spec.get("step_bound"),
            mode=mode,
            sample_count=int(spec.get("sample_count", 0)),
            seed=int(spec.get("seed", 0)),
        )
        return tm_engine.enumerate_distribution(job, lengths)
    return ca_engine.sample_distribution(
        count=int(spec.get("count", ca_engine.DEFAULT_COUNT)),
        steps=int(spec.get("steps", ca_engine.DEFAULT_STEPS)),
        tuple_lengths=lengths,
        seed=int(spec.get("seed", 0)),
    )


def load_markets(cfg: ExperimentConfig) -> dict[str, PriceSeries]:
    out = {}
    for symbol, path in cfg.markets:
        out[symbol] = ingest_csv(cfg.resolve(path), symbol=symbol)
    return out


def run_experiment(cfg: ExperimentConfig, series: Mapping[str, PriceSeries] | None = None,
                   machine_cache: dict | None = None) -> dict[str, CorrelationMatrix]:
    """Build every requested correlation matrix.

    ``market`` uses the unrounded encoding (quantum 0), ``rounded`` uses
    ``cfg.quantum``. Random baselines have the same length as the market
    series they are paired with.
    """
    if series is None:
        series = load_markets(cfg)
        if cfg.window is not None:
            series = {s: align_windows(p, *cfg.window) for s, p in series.items()}
    symbols = sorted(series)
    raw = {s: encode_directions(series[s], 0.0).bits for s in symbols}
    rounded = {s: encode_directions(series[s], cfg.quantum).bits for s in symbols}
    machine_cache = {} if machine_cache is None else machine_cache
    out = {}
    for comp in cfg.comparisons:
        lengths = cfg.lengths_for(comp)
        if comp in ("market_market", "rounded_rounded"):
            bits = raw if comp == "market_market" else rounded
            rows = [(f"{a} vs. {b}", a, b) for a, b in combinations(symbols, 2)]
            out[comp] = _matrix(comp, rows, lengths, cfg.support, bit_sources=bits)
        elif comp in ("market_random", "rounded_random"):
            base = raw if comp == "market_random" else rounded
            bits = dict(base)
            rows = []
            for s in symbols:
                key = f"random:{s}"
                bits[key] = random_direction_series(len(base[s]), _derived_seed(cfg.seed, s, comp))
                rows.append((f"{s} vs. random", s, key))
            out[comp] = _matrix(comp, rows, lengths, cfg.support, bit_sources=bits)
        else:
            kind = "tm" if comp == "market_tm" else "ca"
            cache_key = (kind, tuple(lengths))
            if cache_key not in machine_cache:
                machine_cache[cache_key] = _machine_distributions(
                    kind, cfg.tm if kind == "tm" else cfg.ca, cfg, lengths)
            sources = {kind: machine_cache[cache_key]}
            rows = [(f"{s} vs. {kind.upper()}", s, kind) for s in symbols]
            out[comp] = _matrix(comp, rows, lengths, cfg.support, sources=sources, bit_sources=raw)
    return out


@dataclass
class BacktestWindow:
    start: dt.date
    end: dt.date
    matrices: dict[str, CorrelationMatrix]
    dropped: list[str]

    @property
    def label(self) -> str:
        return f"{self.start.isoformat()}_{self.end.isoformat()}"


def backtest(cfg: ExperimentConfig, windows: Sequence[tuple]) -> list[BacktestWindow]:
    """Run the experiment on each window; markets without data there are dropped."""
    if not windows:
        raise ConfigError("no backtest windows given")
    full = load_markets(cfg)
    cache: dict = {}
    results = []
    for start, end in windows:
        start, end = _date(start), _date(end)
        if not start < end:
            raise ConfigError(f"window start {start} must precede end {end}")
        usable, dropped = {}, []
        for sym in sorted(full):
            try:
                usable[sym] = align_windows(full[sym], start, end)
            except DataError as exc:
                log.warning("dropping %s from window %s..%s: %s", sym, start, end, exc)
                dropped.append(sym)
        if not usable:
            raise DataError(f"window {start}..{end} has no usable market data")
        matrices = run_experiment(cfg, usable, machine_cache=cache)
        results.append(BacktestWindow(start, end, matrices, dropped))
    return results


def parse_window(text: str) -> tuple[dt.date, dt.date]:
    """``YYYY-MM-DD:YYYY-MM-DD`` -> (start, end)."""
    try:
        a, b = text.split(":")
        return dt.date.fromisoformat(a), dt.date.fromisoformat(b)
    except ValueError:
        raise ConfigError(f"bad window {text!r}; expected START:END as ISO dates") from None


# -- reports ----------------------------------------------------------------

REPORT_FORMATS = ("csv", "json", "markdown")


def render_markdown(m: CorrelationMatrix) -> str:
    head = [TITLES.get(m.comparison, m.comparison)] + [str(c) for c in m.columns]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for label, row in zip(m.row_labels, m.cells):
        lines.append("| " + " | ".join([label] + [c.cell() for c in row]) + " |")
    return "\n".join(lines) + "\n"


def render_csv(m: CorrelationMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pair"] + [str(c) for c in m.columns])
    for label, row in zip(m.row_labels, m.cells):
        w.writerow([label] + [c.cell() for c in row])
    return buf.getvalue()


def matrices_to_json(matrices: Mapping[str, CorrelationMatrix], metadata: Mapping | None = None) -> str:
    doc = {
        "metadata": dict(metadata or {}),
        "matrices": {k: matrices[k].to_dict() for k in sorted(matrices)},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def matrices_from_json(text: str) -> dict[str, CorrelationMatrix]:
    doc = json.loads(text)
    return {k: CorrelationMatrix.from_dict(v) for k, v in doc["matrices"].items()}


def emit_report(matrices: Mapping[str, CorrelationMatrix], fmt: str, out_dir,
                metadata: Mapping | None = None, stem: str = "") -> list[Path]:
    """Write the matrices in ``fmt``; one file per comparison for csv/markdown."""
    if not matrices:
        raise ValueError("no matrices to report")
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; choose from {', '.join(REPORT_FORMATS)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = f"{stem}_" if stem else ""
    written = []
    if fmt == "json":
        path = out_dir / f"{prefix}matrices.json"
        path.write_text(matrices_to_json(matrices, metadata), encoding="utf-8")
        return [path]
    for name in sorted(matrices):
        if fmt == "csv":
            path = out_dir / f"{prefix}{name}.csv"
            path.write_text(render_csv(matrices[name]), encoding="utf-8")
        else:
            path = out_dir / f"{prefix}{name}.md"
            path.write_text(render_markdown(matrices[name]), encoding="utf-8")
        written.append(path)
    return written
