"""Classification metrics, stratified cross-validation, grid search and
threshold sweeps over the four bubble labels."""
from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ArgumentError, StratificationError
from .labeling import LABELS, make_labels, rolling_mean_labels
from .ml.dataset import Dataset
from .ml.multilabel import ModelSpec, fit_multilabel, predict_multilabel
from .timeseries import TimeSeries, write_csv

RETRY_BUDGET = 100


def _binary_matrix(a, name) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[:, None]
    if not np.all((a == 0) | (a == 1)):
        raise ArgumentError(f"{name} must be binary")
    return a.astype(np.int64)


def confusion(pred, truth) -> np.ndarray:
    """``[[TN, FP], [FN, TP]]`` for one binary column (rows = actual)."""
    p = _binary_matrix(pred, "pred")[:, 0]
    t = _binary_matrix(truth, "truth")[:, 0]
    if p.shape != t.shape:
        raise ArgumentError(f"length mismatch: {len(p)} predictions vs {len(t)} labels")
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _ratio(a, b) -> float:
    return float(a) / float(b) if b else 0.0


def prf(cm) -> dict:
    """Precision, recall, F1, support and accuracy from a 2x2 confusion matrix."""
    (tn, fp), (fn, tp) = np.asarray(cm)
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return {"precision": p, "recall": r, "f1": _ratio(2 * p * r, p + r), "support": int(tp + fn),
            "accuracy": _ratio(tp + tn, tn + fp + fn + tp)}


@dataclass
class MetricsReport:
    labels: tuple
    per_label: dict
    confusion: dict
    f1_macro: float
    f1_micro: float
    subset_accuracy: Optional[float]
    mean_label_accuracy: float
    n_rows: int
    fold_scores: list = field(default_factory=list)
    wall_time: Optional[float] = None

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "labels": list(self.labels),
            "n_rows": self.n_rows,
            "per_label": self.per_label,
            "confusion": {k: v.tolist() for k, v in self.confusion.items()},
            "f1_macro": self.f1_macro,
            "f1_micro": self.f1_micro,
            "subset_accuracy": self.subset_accuracy,
            "mean_label_accuracy": self.mean_label_accuracy,
            "fold_scores": list(self.fold_scores),
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d

    def to_text(self) -> str:
        lines = [f"{'label':<16}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"]
        for name in self.labels:
            m = self.per_label[name]
            lines.append(f"{name:<16}{m['precision']:>10.3f}{m['recall']:>10.3f}{m['f1']:>10.3f}{m['support']:>10d}")
        lines.append("")
        lines.append(f"f1 macro              {self.f1_macro:.4f}")
        lines.append(f"f1 micro              {self.f1_micro:.4f}")
        if self.subset_accuracy is not None:
            lines.append(f"subset accuracy       {self.subset_accuracy:.4f}")
        lines.append(f"mean label accuracy   {self.mean_label_accuracy:.4f}")
        if self.fold_scores:
            lines.append("fold f1 macro         " + " ".join(f"{s:.4f}" for s in self.fold_scores))
        for name in self.labels:
            (tn, fp), (fn, tp) = self.confusion[name]
            lines.append("")
            lines.append(f"{name}: actual 0 -> [{tn:>5d} {fp:>5d}]   actual 1 -> [{fn:>5d} {tp:>5d}]")
        return "\n".join(lines) + "\n"


def metrics_from_confusion(matrices: Mapping[str, Sequence], subset_accuracy: Optional[float] = None) -> MetricsReport:
    """Report from per-label 2x2 matrices (``[[TN, FP], [FN, TP]]``)."""
    labels = tuple(matrices)
    cms = {k: np.asarray(v, dtype=np.int64) for k, v in matrices.items()}
    for k, v in cms.items():
        if v.shape != (2, 2) or np.any(v < 0):
            raise ArgumentError(f"{k}: confusion matrix must be a non-negative 2x2 array")
    per = {k: prf(v) for k, v in cms.items()}
    pooled = sum(cms.values())
    return MetricsReport(
        labels=labels,
        per_label=per,
        confusion=cms,
        f1_macro=float(np.mean([per[k]["f1"] for k in labels])),
        f1_micro=prf(pooled)["f1"],
        subset_accuracy=subset_accuracy,
        mean_label_accuracy=float(np.mean([per[k]["accuracy"] for k in labels])),
        n_rows=int(next(iter(cms.values())).sum()),
    )


def metrics(pred, truth, labels: Sequence[str] = LABELS) -> MetricsReport:
    """Per-label P/R/F1 (zero denominators give 0), macro/micro F1 and accuracies."""
    P = _binary_matrix(pred, "pred")
    T = _binary_matrix(truth, "truth")
    if P.shape != T.shape:
        raise ArgumentError(f"shape mismatch: pred {P.shape} vs truth {T.shape}")
    if P.shape[1] != len(labels):
        labels = tuple(f"label_{j}" for j in range(P.shape[1]))
    cms = {name: confusion(P[:, j], T[:, j]) for j, name in enumerate(labels)}
    subset = float(np.mean(np.all(P == T, axis=1))) if len(P) else 0.0
    return metrics_from_confusion(cms, subset_accuracy=subset)


def f1_macro(pred, truth) -> float:
    return metrics(pred, truth).f1_macro


def _fold_assignment(data: Dataset, k: int, seed: int, attempt: int) -> np.ndarray:
    # canonical order by date so the assignment does not depend on row order
    order = np.lexsort((np.arange(len(data)), data.dates.astype(np.int64)))
    strata = data.Y[order, 0]
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(attempt,)))
    dealt = np.concatenate([rng.permutation(order[strata == c]) for c in (1, 0)])
    folds = np.empty(len(data), dtype=int)
    folds[dealt] = np.arange(len(dealt)) % k
    return folds


def _training_ok(data: Dataset, folds: np.ndarray, k: int) -> bool:
    varying = [j for j in range(data.Y.shape[1]) if len(np.unique(data.Y[:, j])) > 1]
    for f in range(k):
        train = data.Y[folds != f]
        for j in varying:
            if len(np.unique(train[:, j])) < 2:
                return False
    return True


def stratified_folds(data: Dataset, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per row, stratified by ``is_bubble``; sizes differ by at most one.

    Reshuffles (up to :data:`RETRY_BUDGET` times) until every training part
    holds both classes of every non-constant label.
    """
    if k < 2:
        raise ArgumentError(f"k must be >= 2, got {k}")
    if k > len(data):
        raise ArgumentError(f"k={k} exceeds the number of rows ({len(data)})")
    for attempt in range(RETRY_BUDGET):
        folds = _fold_assignment(data, k, seed, attempt)
        if _training_ok(data, folds, k):
            return folds
    raise StratificationError(f"no admissible {k}-fold assignment within {RETRY_BUDGET} attempts")


def _score_fold(args):
    data, folds, f, spec = args
    train, test = data.subset(np.flatnonzero(folds != f)), data.subset(np.flatnonzero(folds == f))
    model = fit_multilabel(train, spec)
    return f1_macro(predict_multilabel(model, test.X), test.Y)


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class CVResult:
    fold_scores: list
    mean: float
    folds: np.ndarray
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"fold_scores": self.fold_scores, "mean": self.mean}


def kfold_cv(data: Dataset, k: int, spec: ModelSpec, seed: int = 0, jobs: int = 1) -> CVResult:
    """Mean held-out f1-macro over ``k`` stratified folds."""
    t = time.perf_counter()
    folds = stratified_folds(data, k, seed)
    scores = _map(_score_fold, [(data, folds, f, spec) for f in range(k)], jobs)
    return CVResult([float(s) for s in scores], float(np.mean(scores)), folds, time.perf_counter() - t)


def expand_grid(grid: Union[Mapping[str, Sequence], Sequence[Mapping]]) -> list[dict]:
    """Cartesian product of a ``{name: values}`` mapping (keys in given order), or a list of points."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    table: list
    wall_time: float

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {"best_params": self.best_params, "best_score": self.best_score, "table": self.table}
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


def grid_search(data: Dataset, spec: ModelSpec, grid, k: int = 5, seed: int = 0, jobs: int = 1) -> GridResult:
    """Exhaustive CV over ``grid``; best mean f1-macro wins, earlier points win ties."""
    points = expand_grid(grid)
    if not points:
        raise ArgumentError("parameter grid is empty")
    t = time.perf_counter()
    table, best = [], None
    for params in points:
        res = kfold_cv(data, k, spec.with_params(**params), seed, jobs)
        table.append({"params": params, "mean": res.mean, "fold_scores": res.fold_scores})
        if best is None or res.mean > best[1]:
            best = (params, res.mean)
    return GridResult(best[0], best[1], table, time.perf_counter() - t)


def holdout_split(is_bubble, test_fraction: float = 0.25, seed: int = 0, chronological: bool = False):
    """Train/test row indices, stratified by ``is_bubble`` (or last rows when chronological)."""
    b = np.asarray(is_bubble).astype(int)
    n = len(b)
    if not (0 < test_fraction < 1):
        raise ArgumentError("test_fraction must lie in (0, 1)")
    if chronological:
        cut = n - int(round(test_fraction * n))
        return np.arange(cut), np.arange(cut, n)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    test = []
    for c in (1, 0):
        idx = rng.permutation(np.flatnonzero(b == c))
        test.extend(idx[: int(round(test_fraction * len(idx)))].tolist())
    test = np.array(sorted(test), dtype=int)
    train = np.setdiff1d(np.arange(n), test)
    return train, test


def evaluate_holdout(data: Dataset, spec: ModelSpec, test_fraction: float = 0.25, seed: int = 0,
                     chronological: bool = False) -> tuple[MetricsReport, np.ndarray, np.ndarray]:
    train, test = holdout_split(data.Y[:, 0], test_fraction, seed, chronological)
    t = time.perf_counter()
    model = fit_multilabel(data.subset(train), spec)
    pred = predict_multilabel(model, data.X[test])
    rep = metrics(pred, data.Y[test])
    rep.wall_time = time.perf_counter() - t
    return rep, pred, test


@dataclass
class SweepColumn:
    name: str
    C: Optional[float]
    report: MetricsReport
    pred: np.ndarray
    truth: np.ndarray


@dataclass
class SweepTable:
    columns: list
    tau: int
    rm_window: int

    def to_rows(self) -> list[list]:
        """Table rows: label, metric, then one value per column (RM first)."""
        rows = []
        for name in LABELS:
            for metric in ("precision", "recall", "f1", "support"):
                rows.append([name, metric] + [c.report.per_label[name][metric] for c in self.columns])
        return rows

    def to_csv(self, path) -> None:
        header = ["label", "metric"] + [c.name for c in self.columns]
        rows = self.to_rows()
        cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
        write_csv(path, cols, float_fmt="{:.6f}")

    def to_dict(self) -> dict:
        return {"tau": self.tau, "rm_window": self.rm_window,
                "columns": [{"name": c.name, "C": c.C, "report": c.report.to_dict()} for c in self.columns]}


def threshold_sweep(
    data: Dataset,
    series: TimeSeries,
    spec: ModelSpec,
    C_values: Iterable[float] = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8),
    tau: int = 6,
    seed: int = 0,
    test_fraction: float = 0.25,
    rm_window: int = 3,
    chronological: bool = False,
) -> SweepTable:
    """Relabel with each threshold C (plus the rolling-mean rule), refit, score the held-out split.

    The split depends only on ``is_bubble`` and ``seed``, so every column is
    scored on the same rows.
    """
    if len(series) != len(data) or np.any(series.timestamps != data.dates):
        raise ArgumentError("series must be aligned with the dataset rows")
    flags = data.Y[:, 0]
    train, test = holdout_split(flags, test_fraction, seed, chronological)
    frames = [("RM", None, rolling_mean_labels(series, flags, rm_window))]
    for C in C_values:
        if not (0 < C < 1):
            raise ArgumentError(f"C must lie in (0, 1), got {C}")
        frames.append((f"C={C:g}", float(C), make_labels(series, flags, tau, C)))
    columns = []
    for name, C, lf in frames:
        d = Dataset(data.feature_names, data.X, lf.matrix(), data.dates)
        model = fit_multilabel(d.subset(train), spec)
        pred = predict_multilabel(model, d.X[test])
        columns.append(SweepColumn(name, C, metrics(pred, d.Y[test]), pred, d.Y[test]))
    return SweepTable(columns, tau, rm_window)


def micro_macro_curve(sweep: SweepTable) -> list[tuple]:
    """``(C, f1_micro, f1_macro)`` for each threshold column (rolling-mean column skipped)."""
    if not sweep.columns:
        raise ArgumentError("empty sweep")
    return [(c.C, c.report.f1_micro, c.report.f1_macro) for c in sweep.columns if c.C is not None]


def permutation_importance(model, data: Dataset, seed: int = 0, n_repeats: int = 5) -> np.ndarray:
    """Mean drop in f1-macro when one feature column is shuffled (model-agnostic)."""
    base = f1_macro(predict_multilabel(model, data.X), data.Y)
    out = np.zeros(data.X.shape[1])
    for j in range(data.X.shape[1]):
        drops = []
        for r in range(n_repeats):
            rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(j, r)))
            Xp = data.X.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            drops.append(base - f1_macro(predict_multilabel(model, Xp), data.Y))
        out[j] = float(np.mean(drops))
    return out


def importance_table(scores: Mapping[str, np.ndarray], feature_names: Sequence[str]) -> list[dict]:
    """One row per feature: per-model scores, their average and its rank."""
    from .ml.multilabel import rank_scores

    models = list(scores)
    mat = np.column_stack([np.asarray(scores[m], float) for m in models])
    avg = mat.mean(axis=1)
    ranks = rank_scores(avg)
    rows = []
    for i, f in enumerate(feature_names):
        row = {"feature": f}
        row.update({m: float(mat[i, j]) for j, m in enumerate(models)})
        row["Average"] = float(avg[i])
        row["Rank"] = int(ranks[i])
        rows.append(row)
    return sorted(rows, key=lambda r: r["Rank"])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
