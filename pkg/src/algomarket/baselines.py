"""Random reference series and long-tail isolation against a fitted normal."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .market import DEFAULT_QUANTUM


@dataclass(frozen=True)
class GbmParams:
    s0: float = 100.0
    sigma: float = 0.01
    mu: float = 0.0
    steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError("s0 must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass(frozen=True)
class TailBin:
    center: float
    observed: int
    expected: float
    excess: int


@dataclass(frozen=True)
class TailReport:
    fitted_mean: float
    fitted_std: float
    bin_width: float
    tail_bins: tuple[TailBin, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_center", "observed", "expected", "excess"])
        for b in self.tail_bins:
            w.writerow([repr(b.center), b.observed, repr(b.expected), b.excess])
        return buf.getvalue()


def random_direction_series(length: int, seed: int) -> str:
    """Fair coin flips as a bit string."""
    if length < 1:
        raise ValueError("length must be >= 1")
    bits = np.random.default_rng(seed).integers(0, 2, size=length, dtype=np.uint8)
    return (bits + ord("0")).tobytes().decode("ascii")


def _normals(params: GbmParams) -> np.ndarray:
    return np.random.default_rng(params.seed).standard_normal(params.steps)


def gbm_series(params: GbmParams, additive: bool = False) -> np.ndarray:
    """Price path of ``steps + 1`` values starting at ``s0``.

    Multiplicative: ``S_t = s0 * exp(mu * t + sigma * W_t)`` with ``W_t`` the
    running sum of standard normals. Additive (Bachelier): ``S_t = s0 + sigma * W_t``.
    Both variants consume the same normal draws for a given seed.
    """
    walk = np.concatenate(([0.0], np.cumsum(_normals(params))))
    if additive:
        return params.s0 + params.sigma * walk
    t = np.arange(params.steps + 1)
    return params.s0 * np.exp(params.mu * t + params.sigma * walk)


def isolate_tail(changes: Sequence[float], bin_width: float = DEFAULT_QUANTUM) -> TailReport:
    """Bins where the observed changes outnumber a normal fitted by sample moments.

    Bins are centred on multiples of ``bin_width``. The expected count of a
    bin is the fitted normal's mass over it times the sample size; the excess
    is ``observed - round(expected)`` clipped at zero, so a histogram that
    equals the rounded expected counts reports no excess.
    """
    x = np.asarray(changes, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least 2 changes")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    mean = float(x.mean())
    std = float(x.std())
    if not std > 0:
        raise ValueError("changes have zero variance")
    idx = np.floor(x / bin_width + 0.5).astype(np.int64)
    ks, observed = np.unique(idx, return_counts=True)
    lo = (ks - 0.5) * bin_width
    hi = (ks + 0.5) * bin_width
    expected = len(x) * (norm.cdf(hi, mean, std) - norm.cdf(lo, mean, std))
    bins = []
    for k, o, e in zip(ks.tolist(), observed.tolist(), expected.tolist()):
        excess = max(o - int(math.floor(e + 0.5)), 0)
        if excess > 0:
            bins.append(TailBin(k * bin_width, o, e, excess))
    return TailReport(mean, std, bin_width, tuple(bins))


def expected_bin_counts(mean: float, std: float, size: int, bin_width: float, k_range: range) -> np.ndarray:
    ks = np.asarray(k_range)
    return size * (norm.cdf((ks + 0.5) * bin_width, mean, std) - norm.cdf((ks - 0.5) * bin_width, mean, std))
