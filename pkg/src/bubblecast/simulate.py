"""Synthetic data: null and explosive processes, and the bundled pipeline fixtures."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .timeseries import monthly_grid, write_csv


def random_walk(T: int, rng: np.random.Generator, y0: float = 0.0, sigma: float = 1.0) -> np.ndarray:
    """Driftless Gaussian random walk of length ``T`` starting at ``y0``."""
    return y0 + np.concatenate([[0.0], np.cumsum(sigma * rng.standard_normal(T - 1))])


def explosive_series(
    T: int,
    rng: np.random.Generator,
    start: int,
    length: int,
    rho: float = 1.05,
    y0: float = 100.0,
    sigma: float = 1.0,
    collapse: bool = True,
) -> np.ndarray:
    """Random walk with ``y_t = rho * y_{t-1} + e_t`` on ``[start, start + length)``.

    With ``collapse`` the level falls back to its pre-episode value right after
    the episode and the random walk resumes from there.
    """
    if not (0 < start and start + length <= T):
        raise ValueError("episode must lie inside the sample")
    e = sigma * rng.standard_normal(T)
    y = np.empty(T)
    y[0] = y0
    for t in range(1, T):
        if start <= t < start + length:
            y[t] = rho * y[t - 1] + e[t]
        elif collapse and t == start + length:
            y[t] = y[start - 1] + e[t]
        else:
            y[t] = y[t - 1] + e[t]
    return y


@dataclass(frozen=True)
class FixtureSpec:
    start: str = "2000-01-01"
    months: int = 240
    episodes: tuple = ((60, 24), (162, 20))  # (start month, length in months)
    rho: float = 1.04
    pd_level: float = 30.0
    pd_sigma: float = 0.25
    n_headlines: int = 600


MACRO_FILES = {
    "GDP": ("gdp.csv", "quarterly"),
    "BOP": ("bop.csv", "quarterly"),
    "CPI": ("cpi.csv", "quarterly"),
    "3M T-Bill": ("tbill_3m.csv", "monthly"),
    "10Y T-Note": ("tnote_10y.csv", "monthly"),
    "U-Rate": ("urate.csv", "quarterly"),
}


def fixture_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream,)))


def synthetic_pd(spec: FixtureSpec, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monthly PD ratio with planted explosive episodes; returns dates, values, episode mask."""
    rng = fixture_rng(seed, 0)
    m = spec.months
    e = spec.pd_sigma * rng.standard_normal(m)
    y = np.empty(m)
    y[0] = spec.pd_level
    mask = np.zeros(m, dtype=bool)
    starts = {s: L for s, L in spec.episodes}
    ends = {s + L: s for s, L in spec.episodes}
    active_until = -1
    for t in range(1, m):
        if t in starts:
            active_until = t + starts[t]
        if t in ends:
            y[t] = y[ends[t] - 1] + e[t]
        elif t < active_until:
            y[t] = spec.rho * y[t - 1] + e[t]
            mask[t] = True
        else:
            # mild mean reversion keeps the base level bounded
            y[t] = y[t - 1] + 0.05 * (spec.pd_level - y[t - 1]) + e[t]
    dates = monthly_grid(spec.start, np.datetime64(spec.start, "M") + m - 1).timestamps
    return dates, y, mask


def synthetic_macro(spec: FixtureSpec, seed: int, pd_values: np.ndarray, dates: np.ndarray) -> dict:
    """Macro series: GDP tracks the PD deviation from its base level, the rest are noise."""
    out = {}
    for i, (name, (_, freq)) in enumerate(MACRO_FILES.items()):
        rng = fixture_rng(seed, 10 + i)
        step = 3 if freq == "quarterly" else 1
        idx = np.arange(0, len(dates), step)
        if idx[-1] != len(dates) - 1:
            idx = np.append(idx, len(dates) - 1)
        if name == "GDP":
            vals = 100.0 + 2.0 * (pd_values[idx] - spec.pd_level) + 0.3 * rng.standard_normal(len(idx))
        else:
            base = {"BOP": -50.0, "CPI": 2.5, "3M T-Bill": 3.0, "10Y T-Note": 4.5, "U-Rate": 5.5}[name]
            vals = base + np.cumsum(0.2 * rng.standard_normal(len(idx)))
        out[name] = (dates[idx], vals)
    return out


def synthetic_news(spec: FixtureSpec, seed: int, dates: np.ndarray) -> list[tuple]:
    """Scored headlines ``(date, headline, p_neg, p_pos, p_neu)`` with uninformative probabilities."""
    rng = fixture_rng(seed, 30)
    span = int((dates[-1] - dates[0]).astype(int))
    days = np.sort(rng.integers(0, span + 1, size=spec.n_headlines))
    probs = rng.dirichlet([1.0, 1.0, 2.0], size=spec.n_headlines)
    out = []
    for i, (d, p) in enumerate(zip(days, probs)):
        out.append((dates[0] + int(d), f"synthetic market headline {i}", float(p[0]), float(p[1]),
                    float(1.0 - p[0] - p[1])))
    return out


def write_fixtures(out_dir: Union[str, Path], seed: int = 0, spec: FixtureSpec = FixtureSpec(),
                   replications: int = 499) -> Path:
    """Write the PD series, macro series, scored news, a raw news archive and a config."""
    from .sentiment import headline_hash

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dates, pd_vals, _ = synthetic_pd(spec, seed)
    write_csv(out / "pd_ratio.csv", {"date": [str(d) for d in dates], "value": pd_vals}, "{:.10f}")
    for name, (d, v) in synthetic_macro(spec, seed, pd_vals, dates).items():
        write_csv(out / MACRO_FILES[name][0], {"date": [str(x) for x in d], "value": v}, "{:.10f}")
    news = synthetic_news(spec, seed, dates)
    write_csv(out / "news_scored.csv", {
        "date": [str(n[0]) for n in news],
        "headline_hash": [headline_hash(n[1]) for n in news],
        "p_neg": [n[2] for n in news],
        "p_pos": [n[3] for n in news],
        "p_neu": [n[4] for n in news],
    }, "{:.12f}")
    archive = {"status": "OK", "response": {"docs": [
        {"pub_date": f"{n[0]}T05:00:00+0000", "headline": {"main": n[1]}} for n in news[:25]
    ]}}
    (out / "news_archive.json").write_text(json.dumps(archive, indent=1) + "\n", encoding="utf-8")
    end = str(dates[-1])
    cfg = f"""# Pipeline configuration (paths relative to this file)
inputs:
  pd_series: pd_ratio.csv
  macro:
{chr(10).join(f'    "{k}": {v[0]}' for k, v in MACRO_FILES.items())}
  news_scored: news_scored.csv
grid:
  start: "{dates[0]}"
  end: "{end}"
detection:
  r0: auto
  k: 0
  quantile: 0.95
  replications: {replications}
  seed: {seed}
  min_duration: 2
labeling:
  rule: threshold
  tau: 6
  C: 0.5
model:
  family: gradient_boost
  seed: {seed}
  params:
    n_estimators: 60
    learning_rate: 0.2
    depth: 3
  grid:
    n_estimators: [30, 60]
    depth: [2, 3]
evaluation:
  k_folds: 5
  split: stratified
  test_fraction: 0.25
  seed: {seed}
  C_values: [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
output: out
"""
    (out / "config.yaml").write_text(cfg, encoding="utf-8")
    return out
