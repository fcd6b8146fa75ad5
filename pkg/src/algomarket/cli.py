"""Command line entry point: ``algomarket <subcommand> ...``.

Every flag with a default can also be set through an environment variable
named ``ALGOMARKET_<FLAG>`` (upper case, dashes as underscores), e.g.
``ALGOMARKET_QUANTUM=0`` or ``ALGOMARKET_JOBS=4``. Explicit flags win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 budget guard.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, baselines, ca_engine, market, tm_engine
from .distributions import (
    DistributionError,
    build_distribution,
    bundle_to_json,
    load_distributions,
    read_distribution_csv,
    spearman,
)

ENV_PREFIX = "ALGOMARKET_"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env(name: str, default):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_lengths(text: str) -> list[int]:
    """``"4-10"`` or ``"3,5,7"`` (or a mix) -> sorted unique lengths."""
    out = set()
    try:
        for part in str(text).split(","):
            part = part.strip()
            if "-" in part:
                a, b = part.split("-")
                out.update(range(int(a), int(b) + 1))
            elif part:
                out.add(int(part))
    except ValueError:
        raise UsageError(f"bad length list {text!r}") from None
    if not out or min(out) < 1:
        raise UsageError(f"bad length list {text!r}")
    return sorted(out)


def parse_mode(text: str, seed: int) -> tuple[str, int, int]:
    """``exhaustive`` or ``sample:COUNT[:seed=S]`` -> (mode, count, seed)."""
    if text == "exhaustive":
        return "exhaustive", 0, seed
    parts = text.split(":")
    if parts[0] != "sample" or len(parts) not in (2, 3):
        raise UsageError(f"bad mode {text!r}; use exhaustive or sample:COUNT[:seed=S]")
    try:
        count = int(parts[1])
        if len(parts) == 3:
            key, _, value = parts[2].partition("=")
            if key != "seed":
                raise ValueError
            seed = int(value)
    except ValueError:
        raise UsageError(f"bad mode {text!r}") from None
    return "sample", count, seed


# output locations and parallelism do not change results, so they stay out of the metadata
_NOT_RECORDED = {"func", "out", "out_dir", "plot", "pgm", "checkpoint_dir", "jobs", "verbose"}


def _metadata(args, command: str, **extra) -> dict:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_RECORDED}
    return {"tool": "algomarket", "version": __version__, "command": command,
            "config": _jsonable(resolved), **extra}


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=str))


def _write(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


# -- subcommands ------------------------------------------------------------

def cmd_encode(args) -> int:
    series = market.ingest_csv(args.csv, symbol=args.symbol)
    if args.start or args.end:
        start = analysis._date(args.start) if args.start else series.dates[0]
        end = analysis._date(args.end) if args.end else series.dates[-1]
        series = market.align_windows(series, start, end)
    enc = market.encode_directions(series, args.quantum)
    doc = {"symbol": enc.symbol, "quantum": enc.quantum, "bits": enc.bits,
           "metadata": _metadata(args, "encode")}
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _load_bits(path: str, quantum: float) -> tuple[str, str]:
    if path.endswith(".csv"):
        series = market.ingest_csv(path)
        return market.encode_directions(series, quantum).bits, series.symbol
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return doc["bits"], doc.get("symbol", Path(path).stem)


def cmd_dist(args) -> int:
    bits, symbol = _load_bits(args.input, args.quantum)
    lengths = parse_lengths(args.lengths)
    dists = {n: build_distribution(bits, n, symbol) for n in lengths}
    if args.out and args.out.endswith(".csv"):
        if len(lengths) != 1:
            raise UsageError("CSV output holds a single tuple length")
        _write(dists[lengths[0]].to_csv(), args.out)
    elif len(lengths) == 1:
        _write(dists[lengths[0]].to_json(), args.out)
    else:
        _write(bundle_to_json(dists, _metadata(args, "dist")), args.out)
    if args.plot:
        from .plotting import plot_ranked
        plot_ranked(dists[lengths[0]], args.plot)
    return EXIT_OK


def cmd_tm_enum(args) -> int:
    mode, count, seed = parse_mode(args.mode, args.seed)
    lengths = parse_lengths(args.lengths)
    try:
        job = tm_engine.EnumerationJob(args.states, args.step_bound, mode, count, seed,
                                       force=args.force)
        if args.shard_index is not None and not 0 <= args.shard_index < args.shards:
            raise ValueError(f"shard index {args.shard_index} must be below --shards {args.shards}")
        job.shard(0, args.shards)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    job.check_budget()
    ckpt = Path(args.checkpoint_dir) if args.checkpoint_dir else Path(f"{args.out}.shards")
    only = None if args.shard_index is None else [args.shard_index]
    result = tm_engine.run_sharded(job, lengths, args.shards, ckpt, jobs=args.jobs,
                                   shard_indices=only, progress=_progress)
    if result is None:
        _progress(f"shard {args.shard_index} written to {ckpt}")
        return EXIT_OK
    bad = {n: tm_engine.symmetry_violations(d) for n, d in result.items()}
    n_bad = sum(len(v) for v in bad.values())
    meta = _metadata(args, "tm-enum", job=job.metadata(), symmetry_violations=n_bad)
    _write(bundle_to_json(result, meta), args.out)
    if mode == "exhaustive":
        _progress(f"symmetry check: {n_bad} violation(s)")
        if n_bad:
            return EXIT_DATA
    return EXIT_OK


def cmd_ca_sample(args) -> int:
    lengths = parse_lengths(args.lengths)
    dists = ca_engine.sample_distribution(args.count, args.steps, lengths, args.seed)
    _write(bundle_to_json(dists, _metadata(args, "ca-sample")), args.out)
    if args.pgm:
        code = int(ca_engine.rule_codes(args.count, args.seed)[0])
        evo = ca_engine.evolve(code, ca_engine.random_initial(args.seed ^ 0), args.steps)
        Path(args.pgm).write_bytes(evo.to_pgm())
    return EXIT_OK


def _load_any_distribution(path: str, n: int | None):
    if path.endswith(".csv"):
        d = read_distribution_csv(Path(path).read_text(encoding="utf-8"), Path(path).stem)
        return {d.tuple_length: d}
    return load_distributions(path)


def cmd_compare(args) -> int:
    a = _load_any_distribution(args.a, None)
    b = _load_any_distribution(args.b, None)
    lengths = parse_lengths(args.lengths) if args.lengths else sorted(set(a) & set(b))
    if not lengths:
        raise DistributionError("the two files share no tuple length")
    lines = ["tuple_length,rho,n_compared,cell"]
    for n in lengths:
        if n not in a or n not in b:
            raise DistributionError(f"tuple length {n} missing from an input")
        rep = spearman(a[n], b[n], args.support)
        lines.append(f"{n},{'' if rep.rho is None else repr(rep.rho)},{rep.n_compared},{rep.cell()}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _report(matrices, args, stem="", extra_meta=None) -> list[Path]:
    meta = _metadata(args, args.command, **(extra_meta or {}))
    formats = analysis.REPORT_FORMATS if args.format == "all" else [args.format]
    written = []
    for fmt in formats:
        written += analysis.emit_report(matrices, fmt, args.out_dir, meta, stem=stem)
    if args.plot:
        from .plotting import plot_matrix
        for name in sorted(matrices):
            if matrices[name].shape[0]:
                prefix = f"{stem}_" if stem else ""
                written.append(plot_matrix(matrices[name], Path(args.out_dir) / f"{prefix}{name}.png",
                                           analysis.TITLES.get(name)))
    return written


def _load_config(args):
    cfg = analysis.load_config(args.config)
    if args.quantum is not None:
        cfg.quantum = args.quantum
    if args.comparisons:
        cfg.comparisons = tuple(c.strip() for c in args.comparisons.split(","))
        analysis.ExperimentConfig.__post_init__(cfg)
    return cfg


def cmd_matrix(args) -> int:
    cfg = _load_config(args)
    matrices = analysis.run_experiment(cfg)
    for path in _report(matrices, args, extra_meta={"experiment": cfg.to_dict()}):
        print(path)
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _load_config(args)
    windows = [analysis.parse_window(w) for w in args.windows]
    for res in analysis.backtest(cfg, windows):
        extra = {"experiment": cfg.to_dict(), "window": res.label, "dropped_markets": res.dropped}
        for sym in res.dropped:
            _progress(f"warning: {sym} has no data in window {res.label}; dropped")
        for path in _report(res.matrices, args, stem=res.label, extra_meta=extra):
            print(path)
    return EXIT_OK


def cmd_rule90(args) -> int:
    series = ca_engine.rule90_price_series(args.width, args.steps, args.seed)
    lines = ["step,value"] + [f"{t},{int(v)}" for t, v in enumerate(series, 1)]
    _write("\n".join(lines) + "\n", args.out)
    if args.plot:
        from .plotting import plot_rule90
        init = np.random.default_rng(args.seed).integers(0, 2, size=args.width)
        plot_rule90(ca_engine.rule90_rows(init, args.steps), series, args.plot)
    return EXIT_OK


def cmd_tail(args) -> int:
    series = market.ingest_csv(args.csv)
    changes = market.price_changes(series)
    report = baselines.isolate_tail(changes, args.bin_width)
    _write(report.to_csv(), args.out)
    _progress(f"fitted mean {report.fitted_mean:.6g}, std {report.fitted_std:.6g}, "
              f"{len(report.tail_bins)} bin(s) with excess")
    if args.plot:
        from .plotting import plot_tail
        plot_tail(changes, report, args.plot)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="algomarket", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"algomarket {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("encode", help="price CSV -> up/down bit series JSON")
    s.add_argument("csv")
    s.add_argument("--quantum", type=float, default=_env("quantum", market.DEFAULT_QUANTUM))
    s.add_argument("--symbol")
    s.add_argument("--start")
    s.add_argument("--end")
    s.add_argument("--out")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("dist", help="bit series (JSON) or price CSV -> tuple distribution")
    s.add_argument("input")
    s.add_argument("-n", "--lengths", default=_env("lengths", "3"))
    s.add_argument("--quantum", type=float, default=_env("quantum", market.DEFAULT_QUANTUM))
    s.add_argument("--out", help="*.json or *.csv; stdout if omitted")
    s.add_argument("--plot", help="PNG of the ranked distribution")
    s.set_defaults(func=cmd_dist)

    s = sub.add_parser("tm-enum", help="Turing machine output distributions")
    s.add_argument("--states", type=int, default=_env("states", 2))
    s.add_argument("--mode", default=_env("mode", "exhaustive"),
                   help="exhaustive or sample:COUNT[:seed=S]")
    s.add_argument("--seed", type=int, default=_env("seed", 0))
    s.add_argument("--step-bound", type=int, default=None,
                   help="default: Busy Beaver step count for --states")
    s.add_argument("--lengths", default=_env("lengths", "1-10"))
    s.add_argument("--shards", type=int, default=_env("shards", 1))
    s.add_argument("--shard-index", type=int, default=None,
                   help="run only this shard and leave its checkpoint")
    s.add_argument("--checkpoint-dir")
    s.add_argument("--jobs", type=int, default=_env("jobs", os.cpu_count() or 1))
    s.add_argument("--force", action="store_true", default=_env("force", False))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tm_enum)

    s = sub.add_parser("ca-sample", help="4-color totalistic CA tuple distributions")
    s.add_argument("--count", type=int, default=_env("count", ca_engine.DEFAULT_COUNT))
    s.add_argument("--steps", type=int, default=_env("steps", ca_engine.DEFAULT_STEPS))
    s.add_argument("--seed", type=int, default=_env("seed", 0))
    s.add_argument("--lengths", default=_env("lengths", "3-10"))
    s.add_argument("--pgm", help="also dump the first sampled evolution as PGM")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ca_sample)

    s = sub.add_parser("compare", help="Spearman rho|n between two distribution files")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--lengths")
    s.add_argument("--support", choices=["intersection", "union"],
                   default=_env("support", "intersection"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    for name, func, helptext in (("matrix", cmd_matrix, "correlation matrices from a config"),
                                 ("backtest", cmd_backtest, "matrices per date window")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        if name == "backtest":
            s.add_argument("--windows", nargs="+", required=True, metavar="START:END")
        s.add_argument("--comparisons", help="comma list overriding the config")
        s.add_argument("--quantum", type=float, default=None)
        s.add_argument("--format", choices=list(analysis.REPORT_FORMATS) + ["all"],
                       default=_env("format", "all"))
        s.add_argument("--out-dir", default=_env("out_dir", "report"))
        s.add_argument("--plot", action="store_true", default=_env("plot", False))
        s.set_defaults(func=func)

    s = sub.add_parser("rule90", help="rule 90 toy price series")
    s.add_argument("--width", type=int, default=_env("width", 100))
    s.add_argument("--steps", type=int, default=_env("steps", 100))
    s.add_argument("--seed", type=int, default=_env("seed", 0))
    s.add_argument("--out")
    s.add_argument("--plot")
    s.set_defaults(func=cmd_rule90)

    s = sub.add_parser("tail", help="price changes in excess of a fitted normal")
    s.add_argument("csv")
    s.add_argument("--bin-width", type=float, default=_env("bin_width", market.DEFAULT_QUANTUM))
    s.add_argument("--out")
    s.add_argument("--plot")
    s.set_defaults(func=cmd_tail)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, analysis.ConfigError) as exc:
        print(f"algomarket: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except tm_engine.BudgetError as exc:
        print(f"algomarket: budget guard: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, market.DataError, DistributionError, ValueError, KeyError) as exc:
        print(f"algomarket: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
