"""One-dimensional cellular automata: 4-color totalistic sampling and the rule 90 toy market."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import TupleDistribution

COLORS = 4
N_SUMS = 3 * (COLORS - 1) + 1  # neighbourhood sums 0..9
N_RULES = COLORS ** N_SUMS  # 1_048_576
DEFAULT_STEPS = 100
DEFAULT_COUNT = 10_000
_OUTSIDE = 255


@dataclass(frozen=True)
class TotalisticRule:
    code: int

    def __post_init__(self):
        if not 0 <= self.code < N_RULES:
            raise ValueError(f"rule code must lie in [0, {N_RULES}), got {self.code}")

    @property
    def digits(self) -> np.ndarray:
        """New color for each neighbourhood sum, index = sum."""
        return np.array([(self.code // COLORS ** s) % COLORS for s in range(N_SUMS)], dtype=np.uint8)

    @classmethod
    def from_digits(cls, digits: Sequence[int]) -> "TotalisticRule":
        if len(digits) != N_SUMS or any(not 0 <= d < COLORS for d in digits):
            raise ValueError("need 10 digits in 0..3")
        return cls(sum(int(d) * COLORS ** s for s, d in enumerate(digits)))


@dataclass(frozen=True)
class CAEvolution:
    rows: tuple[np.ndarray, ...]
    rule: int
    seed: int | None = None

    @property
    def steps(self) -> int:
        return len(self.rows) - 1

    def to_pgm(self) -> bytes:
        """Plain PGM image of the space-time diagram, rows centred."""
        width = len(self.rows[-1])
        lines = [f"P2\n{width} {len(self.rows)}\n{COLORS - 1}\n"]
        for row in self.rows:
            pad = (width - len(row)) // 2
            full = np.zeros(width, dtype=np.uint8)
            full[pad:pad + len(row)] = row
            # dark = high color, as in the usual black/white pictures
            lines.append(" ".join(str(COLORS - 1 - int(v)) for v in full) + "\n")
        return "".join(lines).encode("ascii")


def random_initial(seed: int) -> np.ndarray:
    """10 to 20 random black/white cells."""
    rng = np.random.default_rng(seed)
    length = int(rng.integers(10, 21))
    return rng.integers(0, 2, size=length).astype(np.uint8)


def evolve(rule: TotalisticRule | int, init: Sequence[int], steps: int) -> CAEvolution:
    """Evolve on a quiescent 0 background; each row is two cells wider than the last."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not isinstance(rule, TotalisticRule):
        rule = TotalisticRule(int(rule))
    table = rule.digits
    row = np.asarray(init, dtype=np.uint8)
    if len(row) and row.max() >= COLORS:
        raise ValueError("initial colors must be in 0..3")
    rows = [row]
    for _ in range(steps):
        padded = np.pad(row.astype(np.int64), 2)
        sums = padded[:-2] + padded[1:-1] + padded[2:]
        row = table[sums]
        rows.append(row)
    return CAEvolution(tuple(rows), rule.code)


def binary_runs(row: np.ndarray) -> list[tuple[int, int]]:
    """(start, length) of each maximal run of cells colored 0 or 1."""
    mask = np.concatenate(([False], np.asarray(row) <= 1, [False]))
    edges = np.flatnonzero(np.diff(mask.astype(np.int8)))
    starts, stops = edges[::2], edges[1::2]
    return list(zip(starts.tolist(), (stops - starts).tolist()))


def _tuple_counts(flat: np.ndarray, lengths: Sequence[int]) -> dict[int, np.ndarray]:
    # flat: cells of many rows, rows separated by at least one non-binary cell
    mask = np.concatenate(([False], flat <= 1, [False]))
    edges = np.flatnonzero(np.diff(mask.astype(np.int8)))
    starts, run_len = edges[::2], edges[1::2] - edges[::2]
    out = {}
    for n in lengths:
        blocks = run_len // n
        nb = int(blocks.sum())
        if not nb:
            out[n] = np.zeros(1 << n, dtype=np.int64)
            continue
        offset = np.arange(nb) - np.repeat(np.cumsum(blocks) - blocks, blocks)
        first = np.repeat(starts, blocks) + offset * n
        codes = np.zeros(nb, dtype=np.int64)
        for j in range(n):
            codes = (codes << 1) | flat[first + j]
        out[n] = np.bincount(codes, minlength=1 << n)
    return out


def extract_counts(rows: Sequence[np.ndarray], n: int) -> dict[int, int]:
    """Non-overlapping n-tuple codes from every binary run in every row."""
    parts = []
    for r in rows:
        parts.append(np.asarray(r, dtype=np.uint8))
        parts.append(np.array([_OUTSIDE], dtype=np.uint8))
    counts = _tuple_counts(np.concatenate(parts), [n])[n]
    return {int(c): int(counts[c]) for c in np.flatnonzero(counts)}


def evolve_batch(codes: Sequence[int], inits: Sequence[np.ndarray], steps: int) -> np.ndarray:
    """Evolve many rules at once.

    Returns ``(len(codes), steps + 1, width)`` cells where everything outside a
    rule's light cone holds a non-binary marker; each row ends with at least
    one marker cell so flattening keeps rows apart.
    """
    size = len(codes)
    max_len = max(len(i) for i in inits)
    width = 2 * steps + max_len + 1
    powers = COLORS ** np.arange(N_SUMS, dtype=np.int64)
    tables = ((np.asarray(codes, dtype=np.int64)[:, None] // powers) % COLORS).astype(np.uint8)
    lens = np.array([len(i) for i in inits])
    col = np.arange(width)
    grid = np.zeros((size, width), dtype=np.uint8)
    for k, init in enumerate(inits):
        grid[k, steps:steps + len(init)] = init
    out = np.empty((size, steps + 1, width), dtype=np.uint8)
    rows_idx = np.arange(size)[:, None]
    for t in range(steps + 1):
        inside = (col >= steps - t) & (col[None, :] < (steps + lens + t)[:, None])
        out[:, t] = np.where(inside, grid, _OUTSIDE)
        if t == steps:
            break
        padded = np.pad(grid, ((0, 0), (1, 1)))
        sums = padded[:, :-2] + padded[:, 1:-1] + padded[:, 2:]
        nxt = tables[rows_idx, sums]
        grow = (col >= steps - t - 1) & (col[None, :] < (steps + lens + t + 1)[:, None])
        grid = np.where(grow, nxt, 0).astype(np.uint8)
    return out


def rule_codes(count: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, N_RULES, size=count, dtype=np.int64)


def sample_distribution(count: int = DEFAULT_COUNT, steps: int = DEFAULT_STEPS,
                        tuple_lengths: Sequence[int] = range(4, 11), seed: int = 0,
                        codes: Sequence[int] | None = None, batch: int = 256) -> dict[int, TupleDistribution]:
    """Tuple distributions from ``count`` uniformly drawn 4-color totalistic rules.

    Rule ``i`` starts from ``random_initial(seed ^ i)``. Only cells colored 0
    or 1 contribute: each row is split into maximal 0/1 runs and every run is
    partitioned into non-overlapping tuples.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    lengths = sorted(set(int(n) for n in tuple_lengths))
    if codes is None:
        codes = rule_codes(count, seed)
    codes = np.asarray(codes, dtype=np.int64)
    totals = {n: np.zeros(1 << n, dtype=np.int64) for n in lengths}
    for lo in range(0, len(codes), batch):
        chunk = codes[lo:lo + batch]
        inits = [random_initial(seed ^ i) for i in range(lo, lo + len(chunk))]
        cells = evolve_batch(chunk, inits, steps)
        for n, c in _tuple_counts(cells.reshape(-1), lengths).items():
            totals[n] += c
    label = f"ca:count={len(codes)},steps={steps},seed={seed}"
    return {
        n: TupleDistribution(
            n, {format(int(c), f"0{n}b"): int(totals[n][c]) for c in np.flatnonzero(totals[n])}, label
        )
        for n in lengths
    }


def rule90_rows(init: Sequence[int], steps: int) -> np.ndarray:
    """Elementary rule 90 on a cyclic row; returns ``steps`` rows including ``init``."""
    row = np.asarray(init, dtype=np.uint8) & 1
    out = np.empty((steps, len(row)), dtype=np.uint8)
    for t in range(steps):
        out[t] = row
        row = np.roll(row, 1) ^ np.roll(row, -1)
    return out


def rule90_price_series(width: int, steps: int, seed: int = 0, init: Sequence[int] | None = None) -> np.ndarray:
    """Cumulative (black - white) cell count of a rule 90 evolution, one value per row."""
    if width < 1:
        raise ValueError("width must be >= 1")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if init is None:
        init = np.random.default_rng(seed).integers(0, 2, size=width)
    elif len(init) != width:
        raise ValueError("init length must equal width")
    rows = rule90_rows(init, steps).astype(np.int64)
    totals = (2 * rows - 1).sum(axis=1)
    return np.cumsum(totals)
