"""Daily open/close bar ingestion and derived ratio series.

File format: UTF-8, LF line endings, header ``date,open,close``, ISO dates
(``YYYY-MM-DD``) and plain decimal prices. Rows with an empty price field
are dropped; anything else that does not parse is an error.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import re
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import InsufficientDataError, ParseError, ValidationError

log = logging.getLogger(__name__)

HEADER = ["date", "open", "close"]
_DATE = re.compile(r"\d{4}-\d{2}-\d{2}")
_DECIMAL = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


@dataclass(frozen=True, eq=False)
class DailyBarSeries:
    """Validated daily bars: strictly ascending dates, positive prices."""

    dates: np.ndarray
    open: np.ndarray
    close: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        o = np.asarray(self.open, dtype=float)
        c = np.asarray(self.close, dtype=float)
        if not (dates.ndim == o.ndim == c.ndim == 1) or not (dates.size == o.size == c.size):
            raise ValidationError("dates, open and close must be 1-D and equally long")
        if dates.size and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValidationError("dates must be strictly ascending and unique")
        if not (np.all(np.isfinite(o)) and np.all(np.isfinite(c))):
            raise ValidationError("prices must be finite")
        if np.any(o <= 0) or np.any(c <= 0):
            raise ValidationError("prices must be positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "open", o)
        object.__setattr__(self, "close", c)

    def __len__(self) -> int:
        return self.dates.size

    def __getitem__(self, item: slice) -> "DailyBarSeries":
        if not isinstance(item, slice):
            raise TypeError("DailyBarSeries supports slicing only")
        return DailyBarSeries(self.dates[item], self.open[item], self.close[item])

    def __eq__(self, other):
        if not isinstance(other, DailyBarSeries):
            return NotImplemented
        return (
            np.array_equal(self.dates, other.dates)
            and np.array_equal(self.open, other.open)
            and np.array_equal(self.close, other.close)
        )

    def column(self, name: str) -> np.ndarray:
        if name not in ("open", "close"):
            raise ValueError(f"unknown price column {name!r}")
        return getattr(self, name)

    def to_csv(self, target: str | PathLike) -> None:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(HEADER) + "\n")
            for d, o, c in zip(self.dates, self.open, self.close):
                fh.write(f"{d},{format_price(o)},{format_price(c)}\n")


def format_price(x: float) -> str:
    """Shortest positional decimal that reads back to the same double."""
    return np.format_float_positional(float(x), unique=True, trim="-")


def _parse_price(text: str, line: int, name: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    if not _DECIMAL.fullmatch(text):
        raise ParseError(f"{name} is not a decimal number: {text!r}", line)
    return float(text)


def load_csv(path: str | PathLike) -> DailyBarSeries:
    """Read a ``date,open,close`` file into a validated series.

    Raises
    ------
    ParseError
        Bad header, wrong field count, malformed date or price.
    ValidationError
        Duplicate dates or non-positive prices.
    InsufficientDataError
        No usable rows remain.
    """
    rows = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise ParseError(f"expected header {','.join(HEADER)!r}, got {header!r}", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line)
            text = row[0].strip()
            if not _DATE.fullmatch(text):
                raise ParseError(f"date is not YYYY-MM-DD: {text!r}", line)
            try:
                date = dt.date.fromisoformat(text)
            except ValueError as exc:
                raise ParseError(f"invalid date {text!r}", line) from exc
            o = _parse_price(row[1], line, "open")
            c = _parse_price(row[2], line, "close")
            if o is None or c is None:
                dropped += 1
                continue
            if o <= 0 or c <= 0:
                raise ValidationError(f"line {line}: prices must be positive")
            rows.append((date, o, c, line))
    if dropped:
        log.info("dropped %d row(s) with missing prices from %s", dropped, path)
    if not rows:
        raise InsufficientDataError(f"no usable rows in {path}")

    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise ValidationError(f"duplicate date {cur[0]} (lines {prev[3]} and {cur[3]})")
    return DailyBarSeries(
        np.array([r[0] for r in rows], dtype="datetime64[D]"),
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]),
        dropped=dropped,
    )


def _positive_prices(prices) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise InsufficientDataError("need at least two prices")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise ValidationError("prices must be finite and positive")
    return p


def ratio_series(prices) -> np.ndarray:
    """Gross one-step ratios ``p[i+1] / p[i]``."""
    p = _positive_prices(prices)
    return p[1:] / p[:-1]


def pct_change(prices) -> np.ndarray:
    """Simple returns ``p[i+1] / p[i] - 1``."""
    return ratio_series(prices) - 1.0


class DailyBarProvider(Protocol):
    """Source of daily bars for one symbol over an inclusive date range."""

    def fetch(self, symbol: str, start: dt.date, end: dt.date) -> DailyBarSeries: ...


class CsvDirectoryProvider:
    """Serves ``<root>/<SYMBOL>.csv`` files through the provider interface."""

    def __init__(self, root: str | PathLike):
        self.root = Path(root)

    def fetch(self, symbol: str, start: dt.date, end: dt.date) -> DailyBarSeries:
        if start > end:
            raise ValueError("start must not be after end")
        series = load_csv(self.root / f"{symbol.upper()}.csv")
        lo = np.datetime64(start, "D")
        hi = np.datetime64(end, "D")
        mask = (series.dates >= lo) & (series.dates <= hi)
        if not mask.any():
            raise InsufficientDataError(f"no {symbol} bars between {start} and {end}")
        idx = np.flatnonzero(mask)
        return series[idx[0]:idx[-1] + 1]
