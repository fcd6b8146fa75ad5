"""Daily closing prices: CSV ingestion and up/down bit encoding."""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

DEFAULT_QUANTUM = 0.4


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class PriceSeries:
    symbol: str
    dates: tuple[dt.date, ...]
    closes: tuple[float, ...]

    def __post_init__(self):
        if len(self.dates) != len(self.closes):
            raise DataError("dates and closes differ in length")
        if len(self.dates) < 2:
            raise DataError(f"{self.symbol}: need at least 2 prices, got {len(self.dates)}")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"{self.symbol}: dates not strictly increasing at {b}")
        for d, c in zip(self.dates, self.closes):
            if not c > 0:
                raise DataError(f"{self.symbol}: non-positive close {c} on {d}")

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class DirectionSeries:
    symbol: str
    quantum: float
    bits: str

    def __len__(self):
        return len(self.bits)

    def to_json(self) -> str:
        return json.dumps({"symbol": self.symbol, "quantum": self.quantum, "bits": self.bits},
                          indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DirectionSeries":
        doc = json.loads(text)
        return cls(doc["symbol"], float(doc["quantum"]), doc["bits"])


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def ingest_csv(path, symbol: str | None = None) -> PriceSeries:
    """Read ``date,close`` rows (optional header) and return them sorted by date."""
    path = Path(path)
    if symbol is None:
        symbol = path.stem
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "date":
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {lineno}: expected date,close")
            try:
                date = _parse_date(row[0])
                close = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            rows.append((date, close, lineno))
    rows.sort(key=lambda r: r[0])
    for (d0, _, l0), (d1, _, l1) in zip(rows, rows[1:]):
        if d0 == d1:
            raise DataError(f"{path}: duplicate date {d1} (rows {l0} and {l1})")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 rows, got {len(rows)}")
    return PriceSeries(symbol, tuple(r[0] for r in rows), tuple(r[1] for r in rows))


def write_csv(series: PriceSeries, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("date,close\n")
        for d, c in zip(series.dates, series.closes):
            fh.write(f"{d.isoformat()},{c!r}\n")


def _dec(x) -> Decimal:
    # shortest repr keeps decimal prices such as 100.1 exact
    return x if isinstance(x, Decimal) else Decimal(repr(float(x)))


def _round_dec(x: Decimal, q: Decimal) -> Decimal:
    if q == 0:
        return x
    return (x / q).quantize(Decimal(1), rounding=ROUND_HALF_UP) * q


def round_to_quantum(x: float, q: float) -> float:
    """Round ``x`` to the nearest multiple of ``q``, halves away from zero.

    ``q == 0`` leaves ``x`` untouched. Arithmetic is decimal, so
    ``round_to_quantum(-0.6, 0.4)`` is ``-0.8`` rather than a float artefact.
    """
    if q < 0:
        raise ValueError("quantum must be non-negative")
    if q == 0:
        return x
    return float(_round_dec(_dec(x), _dec(q)))


def encode_directions(prices: PriceSeries | Sequence[float], q: float = DEFAULT_QUANTUM,
                      symbol: str | None = None) -> DirectionSeries:
    """1 where the rounded price change is positive, else 0."""
    if q < 0:
        raise ValueError("quantum must be non-negative")
    if isinstance(prices, PriceSeries):
        closes = prices.closes
        symbol = symbol or prices.symbol
    else:
        closes = tuple(prices)
    if len(closes) < 2:
        raise DataError("need at least 2 prices")
    dq = _dec(q)
    dec = [_dec(c) for c in closes]
    bits = "".join("1" if _round_dec(b - a, dq) > 0 else "0" for a, b in zip(dec, dec[1:]))
    return DirectionSeries(symbol or "", float(q), bits)


def align_windows(series: PriceSeries, start: dt.date, end: dt.date) -> PriceSeries:
    """Restrict to dates in ``[start, end]``."""
    if not start < end:
        raise ValueError(f"window start {start} must precede end {end}")
    keep = [(d, c) for d, c in zip(series.dates, series.closes) if start <= d <= end]
    if len(keep) < 2:
        raise DataError(
            f"{series.symbol}: window {start}..{end} holds {len(keep)} price(s), need 2"
        )
    return PriceSeries(series.symbol, tuple(d for d, _ in keep), tuple(c for _, c in keep))


def price_changes(series: PriceSeries) -> list[float]:
    return [float(_dec(b) - _dec(a)) for a, b in zip(series.closes, series.closes[1:])]
