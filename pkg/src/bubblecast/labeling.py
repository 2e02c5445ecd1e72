"""Four-label targets (is bubble / not bubble / up / down) from bubble flags."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ArgumentError, LabelingError, ValidationError
from .timeseries import TimeSeries, load_csv, rolling_mean_values, to_date64, write_csv

LABELS = ("is_bubble", "not_bubble", "is_bubble_up", "is_bubble_down")


@dataclass(frozen=True)
class LabelFrame:
    timestamps: np.ndarray
    is_bubble: np.ndarray
    not_bubble: np.ndarray
    is_bubble_up: np.ndarray
    is_bubble_down: np.ndarray
    params: dict = field(default_factory=dict)
    W_resolved: Optional[float] = None

    def __post_init__(self):
        cols = [np.asarray(getattr(self, n)).astype(bool) for n in LABELS]
        n = len(self.timestamps)
        if any(len(c) != n for c in cols):
            raise ValidationError("label columns must match the number of timestamps")
        check_label_invariants(np.column_stack(cols) if n else np.zeros((0, 4), bool))
        for name, c in zip(LABELS, cols):
            c = c.astype(np.int8)
            c.setflags(write=False)
            object.__setattr__(self, name, c)
        object.__setattr__(self, "timestamps", to_date64(self.timestamps) if n else np.array([], "datetime64[D]"))

    def __len__(self):
        return len(self.timestamps)

    def matrix(self) -> np.ndarray:
        """(n, 4) int matrix in :data:`LABELS` order."""
        return np.column_stack([getattr(self, n) for n in LABELS]).astype(np.int8)

    def counts(self) -> dict[str, int]:
        return {n: int(getattr(self, n).sum()) for n in LABELS}

    def to_csv(self, path: Union[str, Path]) -> None:
        cols = {"date": [str(d) for d in self.timestamps]}
        cols.update({n: getattr(self, n) for n in LABELS})
        write_csv(path, cols)


def check_label_invariants(Y: np.ndarray) -> None:
    """Raise :class:`ValidationError` unless every row is a consistent label quadruple."""
    Y = np.asarray(Y).astype(bool)
    b, nb, up, down = Y.T
    if np.any(nb == b):
        raise ValidationError("not_bubble must equal NOT is_bubble")
    if np.any((up | down) & ~b):
        raise ValidationError("bubble direction set on a non-bubble row")
    if np.any(b & (up == down)):
        raise ValidationError("a bubble row needs exactly one of up/down")


def read_labels(path: Union[str, Path]) -> LabelFrame:
    raw = Path(path).read_bytes()
    cols = [load_csv(raw, "date", n) for n in LABELS]
    return LabelFrame(cols[0].timestamps, *[c.values.astype(int) for c in cols])


def _check_inputs(series, flags) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    f = np.asarray(flags)
    if f.shape != y.shape:
        raise ArgumentError(f"flags ({f.shape}) not aligned with series ({y.shape})")
    if not np.all((f == 0) | (f == 1)):
        raise ArgumentError("flags must be binary")
    return y, f.astype(bool)


def forward_means(series, tau: int) -> np.ndarray:
    """Mean of the ``tau`` observations ``Y_k .. Y_{k+tau-1}``, truncated at the series end."""
    y = np.asarray(series.values if isinstance(series, TimeSeries) else series, dtype=float)
    if tau < 1:
        raise ArgumentError(f"tau must be >= 1, got {tau}")
    n = len(y)
    c = np.concatenate([[0.0], np.cumsum(y)])
    k = np.arange(n)
    stop = np.minimum(k + tau, n)
    out = (c[stop] - c[k]) / (stop - k)
    return out


def resolve_threshold(series, flags, tau: int, C: float) -> float:
    """``W`` = empirical C-quantile (linear interpolation) of forward means over flagged periods."""
    y, f = _check_inputs(series, flags)
    if not (0 < C < 1):
        raise ArgumentError(f"C must lie in (0, 1), got {C}")
    if not f.any():
        raise LabelingError("no flagged periods to resolve a threshold from")
    return float(np.quantile(forward_means(y, tau)[f], C))


def _timestamps(series, n):
    if isinstance(series, TimeSeries):
        return series.timestamps
    return np.arange(n).astype("datetime64[D]")


def make_labels(series, flags, tau: int = 6, C: float = 0.5, W: Optional[float] = None) -> LabelFrame:
    """Threshold rule: up iff bubble and forward mean > W, down iff bubble and <= W.

    ``W`` defaults to :func:`resolve_threshold` (series, flags, tau, C). With no
    flagged periods every row is labeled not-bubble.
    """
    y, f = _check_inputs(series, flags)
    if tau < 1:
        raise ArgumentError(f"tau must be >= 1, got {tau}")
    ts = _timestamps(series, len(y))
    params = {"rule": "threshold", "tau": int(tau), "C": float(C)}
    if not f.any():
        z = np.zeros(len(y), dtype=int)
        return LabelFrame(ts, z, 1 - z, z, z, params, W)
    if W is None:
        W = resolve_threshold(y, f, tau, C)
    fm = forward_means(y, tau)
    up = f & (fm > W)
    down = f & ~(fm > W)
    return LabelFrame(ts, f, ~f, up, down, params, float(W))


def rolling_mean_labels(series, flags, w: int = 3) -> LabelFrame:
    """Rolling-mean rule: up iff bubble and Y_t exceeds the mean of the previous ``w`` values.

    Flagged periods without a defined rolling mean (t < w) and ties are down.
    """
    y, f = _check_inputs(series, flags)
    rm = rolling_mean_values(y, w)
    with np.errstate(invalid="ignore"):
        above = np.nan_to_num(y - rm, nan=0.0) > 0
    up = f & above
    down = f & ~above
    return LabelFrame(_timestamps(series, len(y)), f, ~f, up, down, {"rule": "rolling_mean", "w": int(w)})
