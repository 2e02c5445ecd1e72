"""Dated numeric series: ingestion, calendar grids, spline resampling.

Dates are held as ``numpy.datetime64[D]`` arrays. Every series is immutable
once constructed (its arrays are flagged read-only).
"""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterable, Union

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateInputError,
    ExtrapolationError,
    IngestError,
    ValidationError,
)

DateLike = Union[str, date, np.datetime64]


class Frequency(str, Enum):
    MONTHLY = "monthly"
    QUARTERLY = "quarterly"
    BIWEEKLY = "biweekly"
    IRREGULAR = "irregular"


def to_date64(values: Iterable[DateLike] | DateLike) -> np.ndarray:
    """Coerce dates (or a single date) to a datetime64[D] array."""
    arr = np.atleast_1d(np.asarray(values))
    if arr.dtype.kind == "M":
        return arr.astype("datetime64[D]")
    return np.array([parse_date(v) for v in arr.tolist()], dtype="datetime64[D]")


def parse_date(text: DateLike) -> np.datetime64:
    """Parse ``YYYY-MM-DD`` or ``YYYY-MM`` (day 1); also accepts date objects."""
    if isinstance(text, np.datetime64):
        return text.astype("datetime64[D]")
    if isinstance(text, date):
        return np.datetime64(text.isoformat()[:10], "D")
    s = str(text).strip()
    if len(s) == 7 and s[4] == "-":
        s = s + "-01"
    elif len(s) > 10 and s[10] in "T ":
        s = s[:10]
    try:
        if len(s) != 10:
            raise ValueError(s)
        return np.datetime64(date.fromisoformat(s).isoformat(), "D")
    except ValueError:
        raise ValueError(f"unparseable date {text!r}") from None


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _gap_class(days: int) -> Frequency:
    if 12 <= days <= 17:
        return Frequency.BIWEEKLY
    if 28 <= days <= 31:
        return Frequency.MONTHLY
    if 89 <= days <= 92:
        return Frequency.QUARTERLY
    return Frequency.IRREGULAR


def infer_frequency(timestamps: np.ndarray) -> Frequency:
    """Classify the modal gap between consecutive timestamps."""
    if len(timestamps) < 2:
        return Frequency.IRREGULAR
    gaps = np.diff(timestamps).astype(int)
    counts = Counter(_gap_class(int(g)) for g in gaps)
    best, n = counts.most_common(1)[0]
    return best if n * 2 > len(gaps) else Frequency.IRREGULAR


@dataclass(frozen=True, eq=False)
class Grid:
    timestamps: np.ndarray
    frequency: Frequency = Frequency.IRREGULAR

    def __post_init__(self):
        ts = to_date64(self.timestamps)
        if len(ts) > 1 and not np.all(np.diff(ts).astype(int) > 0):
            raise ValidationError("grid timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "frequency", Frequency(self.frequency))

    def __len__(self):
        return len(self.timestamps)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.frequency == other.frequency and np.array_equal(self.timestamps, other.timestamps)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray
    frequency: Frequency = Frequency.IRREGULAR
    name: str = "value"

    def __post_init__(self):
        ts = to_date64(self.timestamps) if len(self.timestamps) else np.array([], "datetime64[D]")
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(ts) != len(vals):
            raise ValidationError(
                f"{self.name}: {len(ts)} timestamps but {len(vals)} values"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"{self.name}: non-finite values")
        if len(ts) > 1:
            gaps = np.diff(ts).astype(int)
            if np.any(gaps == 0):
                dup = ts[1:][gaps == 0][0]
                raise ValidationError(f"{self.name}: duplicate date {dup}")
            if np.any(gaps < 0):
                raise ValidationError(f"{self.name}: timestamps not increasing")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "frequency", Frequency(self.frequency))

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.name == other.name and self.frequency == other.frequency
                and np.array_equal(self.timestamps, other.timestamps) and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def grid(self) -> Grid:
        return Grid(self.timestamps, self.frequency)

    def days(self) -> np.ndarray:
        """Fractional days since the first timestamp."""
        return (self.timestamps - self.timestamps[0]).astype(float)

    def slice_dates(self, start: DateLike | None = None, end: DateLike | None = None) -> "TimeSeries":
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.timestamps >= parse_date(start)
        if end is not None:
            mask &= self.timestamps <= parse_date(end)
        return TimeSeries(self.timestamps[mask], self.values[mask], self.frequency, self.name)

    def with_values(self, values, name: str | None = None) -> "TimeSeries":
        return TimeSeries(self.timestamps, values, self.frequency, name or self.name)


def load_csv(
    source: Union[BinaryIO, str, Path, bytes],
    date_column: str = "date",
    value_column: str = "value",
    name: str | None = None,
) -> TimeSeries:
    """Read one dated column pair from a headed UTF-8 CSV.

    ``source`` may be a path, raw bytes or a binary stream. Rows are sorted by
    date; duplicate dates raise :class:`ValidationError`, unparseable cells
    raise :class:`IngestError` carrying the 1-based data row index.
    """
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise IngestError("missing header row")
    for col in (date_column, value_column):
        if col not in reader.fieldnames:
            raise IngestError(f"column {col!r} not in header {reader.fieldnames}")
    dates, values = [], []
    for i, row in enumerate(reader, start=1):
        try:
            d = parse_date(row[date_column])
        except (ValueError, TypeError):
            raise IngestError(f"unparseable date {row[date_column]!r}", row=i) from None
        try:
            v = float(row[value_column])
        except (ValueError, TypeError):
            raise IngestError(f"unparseable value {row[value_column]!r}", row=i) from None
        if not math.isfinite(v):
            raise IngestError(f"non-finite value {row[value_column]!r}", row=i)
        dates.append(d)
        values.append(v)
    ts = np.array(dates, dtype="datetime64[D]")
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], np.array(values, dtype=float)[order]
    return TimeSeries(ts, vals, infer_frequency(ts), name or value_column)


def write_csv(path: Union[str, Path], columns: dict[str, Iterable], float_fmt: str = "{:.10g}") -> None:
    """Write equal-length columns with a header; NaN/None become empty cells."""
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt_cell(c, float_fmt) for c in row])


def _fmt_cell(c, float_fmt):
    if c is None:
        return ""
    if isinstance(c, (bool, np.bool_)):
        return str(int(c))
    if isinstance(c, (int, np.integer)):
        return str(int(c))
    if isinstance(c, (float, np.floating)):
        return "" if not math.isfinite(c) else float_fmt.format(float(c))
    if isinstance(c, np.datetime64):
        return str(c.astype("datetime64[D]"))
    return str(c)


def biweekly_grid(start: DateLike, end: DateLike) -> Grid:
    """Knots on day 1 and day 15 of every month, restricted to [start, end]."""
    s, e = parse_date(start), parse_date(end)
    if s >= e:
        raise ArgumentError(f"grid start {s} must precede end {e}")
    first = s.astype("datetime64[M]")
    last = e.astype("datetime64[M]")
    months = np.arange(first, last + 1)
    day1 = months.astype("datetime64[D]")
    knots = np.column_stack([day1, day1 + 14]).reshape(-1)
    knots = knots[(knots >= s) & (knots <= e)]
    return Grid(knots, Frequency.BIWEEKLY)


def monthly_grid(start: DateLike, end: DateLike) -> Grid:
    s, e = parse_date(start), parse_date(end)
    if s >= e:
        raise ArgumentError(f"grid start {s} must precede end {e}")
    months = np.arange(s.astype("datetime64[M]"), e.astype("datetime64[M]") + 1)
    knots = months.astype("datetime64[D]")
    return Grid(knots[(knots >= s) & (knots <= e)], Frequency.MONTHLY)


def _natural_second_derivatives(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Tridiagonal system for interior second derivatives; M[0] = M[-1] = 0.
    n = len(x)
    h = np.diff(x)
    slope = np.diff(y) / h
    m = np.zeros(n)
    if n < 3:
        return m
    diag = 2.0 * (h[:-1] + h[1:])
    off = h[1:-1]
    rhs = 6.0 * np.diff(slope)
    # Thomas algorithm
    c = np.empty(n - 2)
    d = np.empty(n - 2)
    c[0] = off[0] / diag[0] if n > 3 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n - 2):
        denom = diag[i] - off[i - 1] * c[i - 1]
        c[i] = off[i] / denom if i < n - 3 else 0.0
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom
    sol = np.empty(n - 2)
    sol[-1] = d[-1]
    for i in range(n - 4, -1, -1):
        sol[i] = d[i] - c[i] * sol[i + 1]
    m[1:-1] = sol
    return m


def natural_spline_eval(x: np.ndarray, y: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """Evaluate the natural cubic spline through (x, y) at ``xq`` (no extrapolation)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xq = np.asarray(xq, float)
    if np.any(xq < x[0]) or np.any(xq > x[-1]):
        raise ExtrapolationError("evaluation point outside the knot span")
    m = _natural_second_derivatives(x, y)
    i = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, len(x) - 2)
    h = x[i + 1] - x[i]
    a = x[i + 1] - xq
    b = xq - x[i]
    out = (
        m[i] * a**3 / (6 * h)
        + m[i + 1] * b**3 / (6 * h)
        + (y[i] / h - m[i] * h / 6) * a
        + (y[i + 1] / h - m[i + 1] * h / 6) * b
    )
    # knots reproduce source values bit-exactly
    hit = np.searchsorted(x, xq)
    hit = np.clip(hit, 0, len(x) - 1)
    exact = x[hit] == xq
    out[exact] = y[hit[exact]]
    return out


def cubic_spline(series: TimeSeries, grid: Grid, name: str | None = None) -> TimeSeries:
    """Resample ``series`` onto ``grid`` with a natural cubic spline.

    Time is measured in days since the first source knot. Grid points outside
    ``[first, last]`` raise :class:`ExtrapolationError`.
    """
    if len(series) < 4:
        raise DegenerateInputError(f"{series.name}: cubic spline needs >= 4 points, got {len(series)}")
    origin = series.timestamps[0]
    xq = (grid.timestamps - origin).astype(float)
    try:
        vals = natural_spline_eval(series.days(), series.values, xq)
    except ExtrapolationError:
        raise ExtrapolationError(
            f"{series.name}: grid [{grid.timestamps[0]}, {grid.timestamps[-1]}] exceeds "
            f"source span [{series.timestamps[0]}, {series.timestamps[-1]}]"
        ) from None
    return TimeSeries(grid.timestamps, vals, grid.frequency, name or series.name)


def clip_grid(grid: Grid, series: TimeSeries) -> Grid:
    """Drop grid points outside the series' span."""
    ts = grid.timestamps
    keep = (ts >= series.timestamps[0]) & (ts <= series.timestamps[-1])
    return Grid(ts[keep], grid.frequency)


def rolling_mean_values(values, w: int) -> np.ndarray:
    """out[t] = mean(values[t-w:t]); NaN for t < w."""
    v = np.asarray(values, dtype=float)
    if w < 1:
        raise ArgumentError(f"window must be >= 1, got {w}")
    if w >= len(v):
        raise ArgumentError(f"window {w} must be shorter than the series ({len(v)})")
    out = np.full(len(v), np.nan)
    out[w:] = np.lib.stride_tricks.sliding_window_view(v, w)[:-1].mean(axis=1)
    return out


def rolling_mean(series: TimeSeries, w: int) -> TimeSeries:
    """Trailing mean of the previous ``w`` observations, defined from index ``w``."""
    out = rolling_mean_values(series.values, w)
    return TimeSeries(series.timestamps[w:], out[w:], series.frequency, f"{series.name}_rm{w}")
