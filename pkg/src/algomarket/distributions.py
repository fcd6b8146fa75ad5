"""Binary tuple frequency distributions, rank views and rank correlation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class DistributionError(ValueError):
    pass


def _as_bitstring(bits) -> str:
    if isinstance(bits, str):
        s = bits
    else:
        s = "".join("1" if int(b) else "0" for b in bits)
    if s.strip("01"):
        raise DistributionError("bit sequence may only contain 0 and 1")
    return s


@dataclass(frozen=True)
class TupleDistribution:
    """Counts of fixed-length binary tuples.

    Instances are treated as immutable; ``counts`` is copied and key-sorted
    on construction so serialisation is byte-stable.
    """

    tuple_length: int
    counts: Mapping[str, int]
    source_label: str = ""
    total: int = field(init=False)

    def __post_init__(self):
        n = self.tuple_length
        if n < 1:
            raise DistributionError("tuple_length must be >= 1")
        clean = {}
        for key in sorted(self.counts):
            c = int(self.counts[key])
            if len(key) != n or key.strip("01"):
                raise DistributionError(f"bad tuple key {key!r} for length {n}")
            if c < 0:
                raise DistributionError(f"negative count for {key!r}")
            if c:
                clean[key] = c
        object.__setattr__(self, "counts", clean)
        object.__setattr__(self, "total", sum(clean.values()))

    def __len__(self):
        return len(self.counts)

    def probability(self, key: str) -> float:
        if self.total == 0:
            raise DistributionError("empty distribution")
        return self.counts.get(key, 0) / self.total

    def relabel(self, label: str) -> "TupleDistribution":
        return TupleDistribution(self.tuple_length, self.counts, label)

    def to_dict(self) -> dict:
        return {
            "tuple_length": self.tuple_length,
            "total": self.total,
            "counts": dict(self.counts),
            "source_label": self.source_label,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TupleDistribution":
        dist = cls(int(data["tuple_length"]), data["counts"], data.get("source_label", ""))
        if "total" in data and int(data["total"]) != dist.total:
            raise DistributionError("stored total does not match the sum of counts")
        return dist

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tuple", "count", "probability"])
        for key, count in self.counts.items():
            writer.writerow([key, count, repr(count / self.total)])
        return buf.getvalue()


@dataclass(frozen=True)
class RankedView:
    entries: tuple[tuple[str, float], ...]

    def tuples(self) -> list[str]:
        return [t for t, _ in self.entries]


@dataclass(frozen=True)
class CorrelationReport:
    rho: float | None
    n_compared: int
    tuple_length: int

    @property
    def defined(self) -> bool:
        return self.rho is not None

    def cell(self, digits: int = 2) -> str:
        """Render as ``rho|n``; an undefined coefficient renders as an en dash."""
        if self.rho is None:
            return f"–|{self.n_compared}"
        return f"{format_rho(self.rho, digits)}|{self.n_compared}"

    def to_dict(self) -> dict:
        return {"rho": self.rho, "n_compared": self.n_compared, "tuple_length": self.tuple_length}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CorrelationReport":
        rho = data["rho"]
        return cls(None if rho is None else float(rho), int(data["n_compared"]), int(data["tuple_length"]))


def format_rho(rho: float, digits: int = 2) -> str:
    # two significant digits, the way coefficients are usually tabulated
    if rho == 0:
        return "0"
    text = f"{rho:#.{digits}g}"
    if "e" in text:
        text = f"{rho:.{digits - 1}e}"
    return text


def build_distribution(bits, n: int, source_label: str = "") -> TupleDistribution:
    """Count non-overlapping length-``n`` blocks of ``bits`` starting at index 0.

    A trailing remainder shorter than ``n`` is dropped.
    """
    if n < 1:
        raise DistributionError("n must be >= 1")
    s = _as_bitstring(bits)
    if len(s) < n:
        raise DistributionError("insufficient data")
    counts: dict[str, int] = {}
    for i in range(0, len(s) - n + 1, n):
        block = s[i:i + n]
        counts[block] = counts.get(block, 0) + 1
    return TupleDistribution(n, counts, source_label)


def build_distributions(bits, lengths: Iterable[int], source_label: str = "") -> dict[int, TupleDistribution]:
    return {n: build_distribution(bits, n, source_label) for n in lengths}


def ranked_view(dist: TupleDistribution) -> RankedView:
    if dist.total == 0:
        raise DistributionError("empty distribution")
    order = sorted(dist.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return RankedView(tuple((k, c / dist.total) for k, c in order))


def rank_descending(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, largest value first, tied values sharing their mean rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(-v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return None
    if np.array_equal(x, y):
        return 1.0
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(a: TupleDistribution, b: TupleDistribution, support: str = "intersection") -> CorrelationReport:
    """Spearman rank correlation of two distributions over a common tuple support.

    ``support="intersection"`` compares tuples seen in both distributions;
    ``"union"`` compares tuples seen in either, treating absent ones as count 0.
    ``rho`` is None when fewer than two tuples are compared or when either
    side's ranks are all tied.
    """
    if a.tuple_length != b.tuple_length:
        raise DistributionError(
            f"tuple length mismatch: {a.tuple_length} vs {b.tuple_length}"
        )
    if support == "intersection":
        keys = sorted(set(a.counts) & set(b.counts))
    elif support == "union":
        keys = sorted(set(a.counts) | set(b.counts))
    else:
        raise DistributionError(f"unknown support mode {support!r}")
    m = len(keys)
    if m < 2:
        return CorrelationReport(None, m, a.tuple_length)
    ra = rank_descending([a.counts.get(k, 0) for k in keys])
    rb = rank_descending([b.counts.get(k, 0) for k in keys])
    return CorrelationReport(pearson(ra, rb), m, a.tuple_length)


def complexity_estimate(dist: TupleDistribution, key: str) -> float:
    """Frequency-based complexity in bits, ``-log2(count / total)``."""
    count = dist.counts.get(key, 0)
    if count <= 0:
        raise DistributionError(f"no mass for tuple {key!r}")
    return -math.log2(count / dist.total)


def merge_distributions(parts: Sequence[TupleDistribution]) -> TupleDistribution:
    """Count-wise sum of same-length distributions."""
    if not parts:
        raise DistributionError("nothing to merge")
    n = parts[0].tuple_length
    counts: dict[str, int] = {}
    for p in parts:
        if p.tuple_length != n:
            raise DistributionError(f"tuple length mismatch: {n} vs {p.tuple_length}")
        for k, c in p.counts.items():
            counts[k] = counts.get(k, 0) + c
    labels = sorted({p.source_label for p in parts if p.source_label})
    return TupleDistribution(n, counts, "+".join(labels))


def empty_distribution(n: int, source_label: str = "") -> TupleDistribution:
    return TupleDistribution(n, {}, source_label)


# -- bundles: several tuple lengths in one file ----------------------------

def bundle_to_json(dists: Mapping[int, TupleDistribution], metadata: Mapping | None = None) -> str:
    doc = {
        "metadata": dict(metadata or {}),
        "distributions": [dists[n].to_dict() for n in sorted(dists)],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_distributions(path) -> dict[int, TupleDistribution]:
    """Read either a single distribution JSON or a multi-length bundle."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "distributions" in doc:
        items = doc["distributions"]
    else:
        items = [doc]
    out = {}
    for item in items:
        d = TupleDistribution.from_dict(item)
        out[d.tuple_length] = d
    return out


def read_distribution_csv(text: str, source_label: str = "") -> TupleDistribution:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise DistributionError("empty distribution CSV")
    counts = {r["tuple"]: int(r["count"]) for r in rows}
    return TupleDistribution(len(rows[0]["tuple"]), counts, source_label)
