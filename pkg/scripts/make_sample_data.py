"""Regenerate the bundled synthetic sample markets.

Six GBM price paths on business days. Three start in 1980 so the
1980-1990 backtest window has data; the rest start in 1990. Also writes
the exhaustive 3-state Turing machine distribution the sample config uses.

    python scripts/make_sample_data.py
"""
from pathlib import Path

import numpy as np

from algomarket.baselines import GbmParams, gbm_series
from algomarket.distributions import bundle_to_json
from algomarket.tm_engine import EnumerationJob, enumerate_distribution

OUT = Path(__file__).resolve().parents[1] / "src" / "algomarket" / "data" / "sample"

# symbol, first date, s0, daily sigma, daily drift, seed
MARKETS = [
    ("MKT_A", "1980-01-01", 110.0, 0.011, 0.0003, 11),
    ("MKT_B", "1980-01-01", 850.0, 0.010, 0.0002, 12),
    ("MKT_C", "1980-01-01", 160.0, 0.014, 0.0004, 13),
    ("MKT_D", "1990-01-01", 1900.0, 0.012, 0.0002, 14),
    ("MKT_E", "1990-01-01", 1400.0, 0.013, 0.0002, 15),
    ("MKT_F", "1990-01-01", 2300.0, 0.012, 0.0001, 16),
]
LAST = "2010-02-01"

CONFIG = """\
# Synthetic sample markets over the shared 1990-2010 window.
markets:
{markets}
window: {{start: 1990-01-01, end: 2010-01-31}}
quantum: 0.4
tuple_lengths: [4, 5, 6, 7, 8, 9, 10]
comparisons: [market_market, rounded_rounded, market_random, rounded_random, market_tm, market_ca]
support: intersection
seed: 0
tm: {{path: tm3.json}}  # exhaustive 3-state run, see make_sample_data.py
ca: {{count: 1000, steps: 100, seed: 0}}
"""


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for symbol, first, s0, sigma, mu, seed in MARKETS:
        days = np.arange(first, LAST, dtype="datetime64[D]")
        days = days[np.is_busday(days)]
        path = gbm_series(GbmParams(s0=s0, sigma=sigma, mu=mu, steps=len(days) - 1, seed=seed))
        with open(OUT / f"{symbol.lower()}.csv", "w", encoding="utf-8") as fh:
            fh.write("date,close\n")
            for d, p in zip(days, path):
                fh.write(f"{d},{p:.2f}\n")
    job = EnumerationJob(3)
    dists = enumerate_distribution(job, range(1, 11))
    (OUT / "tm3.json").write_text(bundle_to_json(dists, {"job": job.metadata()}), encoding="utf-8")
    listing = "\n".join(f"  - {{symbol: {s}, csv: {s.lower()}.csv}}" for s, *_ in MARKETS)
    (OUT / "experiment.yaml").write_text(CONFIG.format(markets=listing), encoding="utf-8")


if __name__ == "__main__":
    main()
