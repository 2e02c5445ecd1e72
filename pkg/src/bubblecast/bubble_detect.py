"""Right-tailed ADF machinery: SADF/GSADF statistics, BSADF traces,
Monte-Carlo critical values and date-stamping of explosive episodes.

Index conventions
-----------------
A window is the half-open slice ``y[s:e]`` of the level series. A fraction
``f`` of a sample of size ``T`` maps to the integer index ``floor(f * T)``.
The BSADF trace is stored per observation: ``stats[t]`` is the supremum over
windows whose last observation is ``t`` (``e = t + 1``), so with a minimum
window length ``t0`` the first defined entry is ``t0 - 1``.

The window sweep uses cumulative cross-product sums over the regression rows,
one batched solve per replication. The full-refit route (:func:`adf_stat` on
every window) is kept as :func:`bsadf_trace_bruteforce`.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ArgumentError, SingularDesignError, ValidationError
from .timeseries import TimeSeries

# Residual sum of squares below this fraction of sum(dy^2) counts as an exact fit.
EXACT_FIT_RTOL = 1e-10
# Determinant of the scaled normal matrix below this counts as rank deficient.
SINGULAR_RTOL = 1e-10
_PAIR_CHUNK = 200_000

Vector = Union[np.ndarray, Sequence[float], TimeSeries]


@dataclass(frozen=True)
class AdfSpec:
    """ADF regression: dy_t on a constant, y_{t-1} and ``k`` lagged differences."""

    k: int = 0
    include_constant: bool = True

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ArgumentError(f"lag order must be a non-negative integer, got {self.k}")
        if not self.include_constant:
            raise ArgumentError("the ADF regression always includes a constant")

    @property
    def n_params(self) -> int:
        return self.k + 2

    @property
    def min_length(self) -> int:
        """Shortest window with at least ``n_params + 1`` usable rows."""
        return 2 * self.k + 4


@dataclass(frozen=True)
class WindowFraction:
    r1: float
    r2: float
    r0: float

    def __post_init__(self):
        if not (0 < self.r0 <= 1):
            raise ArgumentError(f"r0 must lie in (0, 1], got {self.r0}")
        if not (0 <= self.r1 <= self.r2 - self.r0 + 1e-12 and self.r2 <= 1):
            raise ArgumentError(
                f"need 0 <= r1 <= r2 - r0 and r2 <= 1, got r1={self.r1}, r2={self.r2}, r0={self.r0}"
            )

    @property
    def rw(self) -> float:
        return self.r2 - self.r1

    def indices(self, T: int) -> tuple[int, int]:
        return frac_index(self.r1, T), frac_index(self.r2, T)


def frac_index(f: float, T: int) -> int:
    """floor(f * T), robust to representation error (0.1 * 400 -> 40)."""
    return int(math.floor(f * T + 1e-9))


def _as_array(series: Vector) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return np.asarray(series.values, dtype=float)
    arr = np.asarray(series, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("series contains non-finite values")
    return arr


def _design(y: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    dy = np.diff(y)
    rows = np.arange(k, len(dy))
    cols = [np.ones(len(rows)), y[rows]]
    cols += [dy[rows - i] for i in range(1, k + 1)]
    return np.column_stack(cols), dy[rows]


def adf_stat(window: Vector, spec: AdfSpec = AdfSpec()) -> float:
    """t-statistic of the lagged level in the ADF regression over ``window``.

    Fits ``dy_t = a + b*y_{t-1} + sum_i phi_i*dy_{t-i} + e_t`` by least squares
    (QR) over the ``n - 1 - k`` usable rows and returns ``b / se(b)`` with the
    residual variance on ``n_used - (k + 2)`` degrees of freedom.

    Raises
    ------
    ArgumentError
        The window has fewer than ``k + 3`` usable rows.
    SingularDesignError
        The design is rank deficient or the fit is exact (zero residuals).
    """
    y = _as_array(window)
    k = spec.k
    n_used = len(y) - 1 - k
    if n_used < k + 3:
        raise ArgumentError(
            f"window of length {len(y)} leaves {n_used} usable rows; need >= {k + 3} for k={k}"
        )
    X, dy = _design(y, k)
    q, r = np.linalg.qr(X)
    rdiag = np.abs(np.diag(r))
    if rdiag.min() <= SINGULAR_RTOL * max(rdiag.max(), 1e-300):
        raise SingularDesignError("rank-deficient ADF design")
    qty = q.T @ dy
    beta = np.linalg.solve(r, qty)
    resid = dy - X @ beta
    rss = float(resid @ resid)
    if rss <= EXACT_FIT_RTOL * max(float(dy @ dy), 1e-300):
        raise SingularDesignError("ADF regression fits exactly; t-statistic undefined")
    sigma2 = rss / (n_used - spec.n_params)
    rinv = np.linalg.solve(r, np.eye(spec.n_params))
    var_b = sigma2 * float(rinv[1] @ rinv[1])
    return float(beta[1] / math.sqrt(var_b))


def min_window(T: int, spec: AdfSpec = AdfSpec()) -> int:
    """Minimum window length ``floor(T * (0.01 + 1.8 / sqrt(T)))``.

    Clamped up (with a warning) to the smallest length the ADF regression with
    ``spec.k`` lags can be fitted on.
    """
    if T < 30:
        raise ArgumentError(f"minimum-window rule needs T >= 30, got {T}")
    w = int(math.floor(T / 100 + 1.8 * math.sqrt(T) + 1e-9))
    if w < spec.min_length:
        warnings.warn(
            f"minimum window {w} infeasible for k={spec.k}; using {spec.min_length}",
            stacklevel=2,
        )
        w = spec.min_length
    return w


def window_length(r0: float, T: int, spec: AdfSpec) -> int:
    if not (0 < r0 <= 1):
        raise ArgumentError(f"r0 must lie in (0, 1], got {r0}")
    t0 = frac_index(r0, T)
    if t0 < spec.min_length:
        raise ArgumentError(
            f"floor(r0*T) = {t0} is below the feasible window {spec.min_length} for k={spec.k}"
        )
    return t0


@dataclass(frozen=True)
class BsadfTrace:
    """Backward-sup ADF statistics, one per observation (NaN before ``t0 - 1``)."""

    stats: np.ndarray
    t0: int
    spec: AdfSpec
    r0: float
    n_singular: int = 0
    fixed_start: bool = False

    @property
    def T(self) -> int:
        return len(self.stats)

    @property
    def first_index(self) -> int:
        return self.t0 - 1

    @property
    def defined(self) -> np.ndarray:
        return self.stats[self.first_index :]

    def gsadf(self) -> float:
        return float(np.nanmax(self.defined))


def _row_products(y: np.ndarray, k: int) -> np.ndarray:
    """Cumulative sums of z z' for z = [1, y_{i}, dy_{i-1..i-k}, dy_i], i = 0..T-2."""
    dy = np.diff(y)
    m = len(dy)
    q = k + 3
    z = np.zeros((m, q))
    z[:, 0] = 1.0
    z[:, 1] = y[:-1]
    for j in range(1, k + 1):
        z[j:, 1 + j] = dy[:-j] if j < m else 0.0
    z[:, -1] = dy
    outer = z[:, :, None] * z[:, None, :]
    c = np.zeros((m + 1, q, q))
    np.cumsum(outer, axis=0, out=c[1:])
    return c


def _window_stats(c: np.ndarray, starts: np.ndarray, ends: np.ndarray, k: int) -> np.ndarray:
    """ADF t-statistics for windows y[s:e] from cumulative products; NaN if singular."""
    p = k + 2
    # usable rows i in [s + k, e - 2]  ->  cumulative indices [s + k, e - 1)
    m = c[ends - 1] - c[starts + k]
    xtx = m[:, :p, :p]
    xty = m[:, :p, p]
    yty = m[:, p, p]
    n_used = ends - 1 - starts - k
    d = np.einsum("nii->ni", xtx)
    ok = np.all(d > 0, axis=1)
    scale = 1.0 / np.sqrt(np.where(d > 0, d, 1.0))
    corr = xtx * scale[:, :, None] * scale[:, None, :]
    ok &= np.linalg.det(corr) > SINGULAR_RTOL
    corr[~ok] = np.eye(p)
    inv_corr = np.linalg.inv(corr)
    inv = inv_corr * scale[:, :, None] * scale[:, None, :]
    beta = np.einsum("nij,nj->ni", inv, xty)
    rss = yty - np.einsum("ni,ni->n", beta, xty)
    ok &= rss > EXACT_FIT_RTOL * np.maximum(yty, 1e-300)
    sigma2 = np.where(ok, rss, 1.0) / (n_used - p)
    t = beta[:, 1] / np.sqrt(sigma2 * np.abs(inv[:, 1, 1]))
    t[~ok] = np.nan
    return t


def _standardize(y: np.ndarray) -> np.ndarray:
    # The t-statistic is invariant to affine maps y -> a*y + b (a > 0); this
    # keeps the cumulative sums well conditioned.
    sd = y.std()
    return (y - y.mean()) / sd if sd > 0 else y - y.mean()


def _bsadf_array(y: np.ndarray, t0: int, spec: AdfSpec, fixed_start: bool = False) -> tuple[np.ndarray, int]:
    T = len(y)
    k = spec.k
    c = _row_products(_standardize(y), k)
    stats = np.full(T, np.nan)
    ends_all = np.arange(t0, T + 1)
    if fixed_start:
        st = np.zeros(len(ends_all), dtype=int)
        t = _window_stats(c, st, ends_all, k)
        stats[ends_all - 1] = t
        return stats, int(np.isnan(t).sum())
    n_singular = 0
    counts = ends_all - t0 + 1
    bounds = np.concatenate([[0], np.cumsum(counts)])
    lo = 0
    while lo < len(ends_all):
        hi = lo + 1
        while hi < len(ends_all) and bounds[hi + 1] - bounds[lo] <= _PAIR_CHUNK:
            hi += 1
        ends = np.repeat(ends_all[lo:hi], counts[lo:hi])
        offs = np.arange(len(ends)) - np.repeat(bounds[lo:hi] - bounds[lo], counts[lo:hi])
        starts = offs  # s runs 0 .. e - t0 for each end
        t = _window_stats(c, starts, ends, k)
        n_singular += int(np.isnan(t).sum())
        tt = np.where(np.isnan(t), -np.inf, t)
        best = np.maximum.reduceat(tt, bounds[lo:hi] - bounds[lo])
        best[np.isneginf(best)] = np.nan
        stats[ends_all[lo:hi] - 1] = best
        lo = hi
    return stats, n_singular


def bsadf_trace(series: Vector, r0: float, spec: AdfSpec = AdfSpec(), fixed_start: bool = False) -> BsadfTrace:
    """Backward-sup ADF sequence over all windows of length >= floor(r0*T).

    ``fixed_start=True`` pins every window start to 0 (the forward-recursive
    SADF sequence).

    Raises
    ------
    SingularDesignError
        Every window is singular. Individual singular windows are skipped and
        counted in ``n_singular``.
    """
    y = _as_array(series)
    T = len(y)
    t0 = window_length(r0, T, spec)
    stats, n_singular = _bsadf_array(y, t0, spec, fixed_start)
    if np.all(np.isnan(stats)):
        raise SingularDesignError("every ADF window is singular")
    return BsadfTrace(stats, t0, spec, float(r0), n_singular, fixed_start)


def gsadf(series: Vector, r0: float, spec: AdfSpec = AdfSpec(), fixed_start: bool = False) -> float:
    """Supremum of windowed ADF statistics, ``max`` of the BSADF trace."""
    return bsadf_trace(series, r0, spec, fixed_start).gsadf()


def bsadf_trace_bruteforce(series: Vector, r0: float, spec: AdfSpec = AdfSpec(), fixed_start: bool = False) -> np.ndarray:
    """Reference route: refit :func:`adf_stat` on every admissible window."""
    y = _as_array(series)
    T = len(y)
    t0 = window_length(r0, T, spec)
    out = np.full(T, np.nan)
    for e in range(t0, T + 1):
        best = -np.inf
        for s in ([0] if fixed_start else range(0, e - t0 + 1)):
            try:
                best = max(best, adf_stat(y[s:e], spec))
            except SingularDesignError:
                continue
        out[e - 1] = best if np.isfinite(best) else np.nan
    return out


@dataclass(frozen=True)
class CriticalValueTable:
    """Per-observation null quantiles of the BSADF statistic."""

    quantile_level: float
    values: np.ndarray
    gsadf_cv: float
    replications: int
    seed: int
    T: int
    t0: int
    spec: AdfSpec
    r0: float
    fixed_start: bool = False

    def to_dict(self) -> dict:
        return {
            "quantile_level": self.quantile_level,
            "values": [None if not np.isfinite(v) else float(v) for v in self.values],
            "gsadf_cv": self.gsadf_cv,
            "replications": self.replications,
            "seed": self.seed,
            "T": self.T,
            "t0": self.t0,
            "k": self.spec.k,
            "r0": self.r0,
            "fixed_start": self.fixed_start,
        }


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication ``index``; no dependence on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _null_traces(T: int, t0: int, spec: AdfSpec, seed: int, indices: Sequence[int], fixed_start: bool) -> np.ndarray:
    out = np.empty((len(indices), T))
    for row, i in enumerate(indices):
        rng = replication_rng(seed, i)
        y = np.concatenate([[0.0], np.cumsum(rng.standard_normal(T - 1))])
        out[row] = _bsadf_array(y, t0, spec, fixed_start)[0]
    return out


def simulate_null_traces(
    T: int,
    r0: float,
    spec: AdfSpec = AdfSpec(),
    replications: int = 499,
    seed: int = 0,
    jobs: int = 1,
    fixed_start: bool = False,
) -> np.ndarray:
    """BSADF traces of ``replications`` driftless Gaussian random walks (y_0 = 0)."""
    t0 = window_length(r0, T, spec)
    idx = list(range(replications))
    if jobs <= 1 or replications < 2 * jobs:
        return _null_traces(T, t0, spec, seed, idx, fixed_start)
    chunks = [idx[j::jobs] for j in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_null_traces, [T] * jobs, [t0] * jobs, [spec] * jobs,
                              [seed] * jobs, chunks, [fixed_start] * jobs))
    out = np.empty((replications, T))
    for chunk, part in zip(chunks, parts):
        out[chunk] = part
    return out


def critical_values(
    T: int,
    r0: float,
    spec: AdfSpec = AdfSpec(),
    quantile: float = 0.95,
    replications: int = 499,
    seed: int = 0,
    jobs: int = 1,
    fixed_start: bool = False,
) -> CriticalValueTable:
    """Seeded Monte-Carlo quantiles of BSADF (per observation) and GSADF under H0.

    Each replication draws from its own stream derived from ``(seed, index)``,
    so the table does not depend on ``jobs``.
    """
    if replications < 99:
        raise ArgumentError(f"need >= 99 replications, got {replications}")
    if not (0.5 < quantile < 1):
        raise ArgumentError(f"quantile must lie in (0.5, 1), got {quantile}")
    t0 = window_length(r0, T, spec)
    traces = simulate_null_traces(T, r0, spec, replications, seed, jobs, fixed_start)
    return table_from_traces(traces, quantile, seed, t0, spec, r0, fixed_start)


def table_from_traces(traces: np.ndarray, quantile: float, seed: int, t0: int, spec: AdfSpec,
                      r0: float, fixed_start: bool = False) -> CriticalValueTable:
    T = traces.shape[1]
    vals = np.full(T, np.nan)
    vals[t0 - 1 :] = np.quantile(traces[:, t0 - 1 :], quantile, axis=0)
    sup = np.nanmax(traces[:, t0 - 1 :], axis=1)
    return CriticalValueTable(
        quantile_level=float(quantile),
        values=vals,
        gsadf_cv=float(np.quantile(sup, quantile)),
        replications=traces.shape[0],
        seed=int(seed),
        T=T,
        t0=t0,
        spec=spec,
        r0=float(r0),
        fixed_start=fixed_start,
    )


def enforce_min_duration(flags: np.ndarray, min_duration: int) -> np.ndarray:
    """Zero every run of ones shorter than ``min_duration``."""
    f = np.asarray(flags, dtype=bool).copy()
    if min_duration <= 1:
        return f
    padded = np.concatenate([[False], f, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    for start, stop in zip(edges[::2], edges[1::2]):
        if stop - start < min_duration:
            f[start:stop] = False
    return f


def date_stamp(trace: BsadfTrace, cvs: CriticalValueTable, min_duration: int = 2) -> np.ndarray:
    """Binary bubble flags: ``stats[t] > cv[t]``, runs shorter than ``min_duration`` dropped."""
    if trace.T != cvs.T or trace.t0 != cvs.t0:
        raise ArgumentError(
            f"trace (T={trace.T}, t0={trace.t0}) and table (T={cvs.T}, t0={cvs.t0}) are not aligned"
        )
    if min_duration < 1:
        raise ArgumentError(f"min_duration must be >= 1, got {min_duration}")
    with np.errstate(invalid="ignore"):
        raw = np.nan_to_num(trace.stats, nan=-np.inf) > np.nan_to_num(cvs.values, nan=np.inf)
    raw[: trace.first_index] = False
    return enforce_min_duration(raw, min_duration).astype(np.int8)


@dataclass
class DetectionConfig:
    """JSON block ``{r0, k, quantile, replications, seed, min_duration}``."""

    r0: Union[float, str] = "auto"
    k: int = 0
    quantile: float = 0.95
    replications: int = 499
    seed: int = 0
    min_duration: int = 2
    fixed_start: bool = False

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "DetectionConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ArgumentError(f"unknown detection keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.r0 != "auto":
            r0 = float(self.r0)
            if not (0 < r0 <= 1):
                raise ArgumentError(f"r0 must be 'auto' or in (0, 1], got {self.r0}")
        AdfSpec(int(self.k))
        if not (0.5 < float(self.quantile) < 1):
            raise ArgumentError(f"quantile must lie in (0.5, 1), got {self.quantile}")
        if int(self.replications) < 99:
            raise ArgumentError(f"replications must be >= 99, got {self.replications}")
        if int(self.seed) < 0:
            raise ArgumentError("seed must be unsigned")
        if int(self.min_duration) < 1:
            raise ArgumentError("min_duration must be >= 1")

    @property
    def spec(self) -> AdfSpec:
        return AdfSpec(int(self.k))

    def resolve_r0(self, T: int) -> float:
        if self.r0 == "auto":
            return min_window(T, self.spec) / T
        return float(self.r0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Detection:
    trace: BsadfTrace
    table: CriticalValueTable
    flags: np.ndarray


def detect(series: Vector, config: DetectionConfig = DetectionConfig(), jobs: int = 1) -> Detection:
    """Full stage-1 run: window rule, critical values, trace, flags."""
    y = _as_array(series)
    r0 = config.resolve_r0(len(y))
    spec = config.spec
    table = critical_values(len(y), r0, spec, float(config.quantile), int(config.replications),
                            int(config.seed), jobs, config.fixed_start)
    trace = bsadf_trace(y, r0, spec, config.fixed_start)
    return Detection(trace, table, date_stamp(trace, table, int(config.min_duration)))
