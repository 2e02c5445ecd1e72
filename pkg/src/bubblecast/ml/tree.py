"""CART decision trees (classification and squared-error regression)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ArgumentError

Criterion = Literal["gini", "entropy"]
TIE_TOL = 1e-12


def impurity(counts, criterion: Criterion = "gini") -> float:
    """Gini ``sum p(1-p)`` or base-2 entropy of a (possibly weighted) class-count vector."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise ArgumentError("class counts must be non-negative")
    n = c.sum()
    if n <= 0:
        raise ArgumentError("impurity of an empty node is undefined")
    p = c / n
    if criterion == "gini":
        return float(np.sum(p * (1.0 - p)))
    if criterion == "entropy":
        nz = p[p > 0]
        return float(-np.sum(nz * np.log2(nz))) + 0.0
    raise ArgumentError(f"unknown criterion {criterion!r}")


def _impurity_rows(counts: np.ndarray, criterion: Criterion) -> np.ndarray:
    # counts: (m, K) -> impurity per row; rows with zero total give 0
    n = counts.sum(axis=1, keepdims=True)
    p = counts / np.where(n > 0, n, 1.0)
    if criterion == "gini":
        return np.sum(p * (1.0 - p), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(p * lg, axis=1)


class Split(NamedTuple):
    feature: int
    threshold: float
    quality: float  # size-weighted child impurity G


def _candidates(x: np.ndarray):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    pos = np.flatnonzero(xs[1:] > xs[:-1])  # split after sorted position pos
    return order, xs, pos


def _pick(best: Optional[Split], cand: Split) -> Split:
    if best is None or cand.quality < best.quality - TIE_TOL:
        return cand
    return best


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    criterion: Criterion = "gini",
    features: Optional[Sequence[int]] = None,
    sample_weight: Optional[np.ndarray] = None,
    n_classes: Optional[int] = None,
) -> Optional[Split]:
    """Minimize ``G = nL/n * H(L) + nR/n * H(R)`` over (feature, midpoint) pairs.

    The left child is ``x_j <= t``. Candidate thresholds are midpoints between
    consecutive distinct values. Ties go to the lower feature index, then the
    lower threshold. Returns ``None`` when no split lowers the node impurity.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n = len(y)
    if n < 2:
        return None
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    K = int(n_classes or max(2, y.max() + 1))
    onehot = np.zeros((n, K))
    onehot[np.arange(n), y] = w
    total = onehot.sum(axis=0)
    parent = impurity(total, criterion)
    wn = total.sum()
    best = None
    feats = range(X.shape[1]) if features is None else sorted(features)
    for j in feats:
        order, xs, pos = _candidates(X[:, j])
        if len(pos) == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[pos]
        right = total - left
        nl = left.sum(axis=1)
        nr = wn - nl
        g = (nl * _impurity_rows(left, criterion) + nr * _impurity_rows(right, criterion)) / wn
        i = int(np.argmin(g))
        # argmin returns the first (lowest threshold) of exact ties; widen to TIE_TOL
        i = int(np.flatnonzero(g <= g[i] + TIE_TOL)[0])
        best = _pick(best, Split(j, float((xs[pos[i]] + xs[pos[i] + 1]) / 2), float(g[i])))
    if best is None or not best.quality < parent - TIE_TOL:
        return None
    return best


def best_split_regression(
    X: np.ndarray,
    r: np.ndarray,
    features: Optional[Sequence[int]] = None,
    sample_weight: Optional[np.ndarray] = None,
) -> Optional[Split]:
    """Same search as :func:`best_split` with weighted variance as the impurity."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    n = len(r)
    if n < 2:
        return None
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    wn = w.sum()
    mean = np.sum(w * r) / wn
    parent = float(np.sum(w * (r - mean) ** 2) / wn)
    best = None
    feats = range(X.shape[1]) if features is None else sorted(features)
    for j in feats:
        order, xs, pos = _candidates(X[:, j])
        if len(pos) == 0:
            continue
        rc = r[order] - mean
        wc = w[order]
        sw = np.cumsum(wc)[pos]
        s1 = np.cumsum(wc * rc)[pos]
        s2 = np.cumsum(wc * rc * rc)[pos]
        tw, t1, t2 = wc.sum(), np.sum(wc * rc), np.sum(wc * rc * rc)
        sse_l = s2 - s1 * s1 / sw
        sse_r = (t2 - s2) - (t1 - s1) ** 2 / (tw - sw)
        g = (sse_l + sse_r) / wn
        i = int(np.argmin(g))
        i = int(np.flatnonzero(g <= g[i] + TIE_TOL)[0])
        best = _pick(best, Split(j, float((xs[pos[i]] + xs[pos[i] + 1]) / 2), float(g[i])))
    if best is None or not best.quality < parent - TIE_TOL * max(1.0, parent):
        return None
    return best


@dataclass
class Node:
    n: int
    weight: float
    impurity: float
    value: np.ndarray  # class distribution (classifier) or [leaf value] (regressor)
    counts: Optional[np.ndarray] = None
    feature: int = -1
    threshold: float = float("nan")
    left: Optional["Node"] = None
    right: Optional["Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        d = {"n": self.n, "weight": self.weight, "impurity": self.impurity,
             "value": [float(v) for v in self.value]}
        if self.counts is not None:
            d["counts"] = [float(c) for c in self.counts]
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold,
                     left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        node = cls(d["n"], d["weight"], d["impurity"], np.array(d["value"], float),
                   np.array(d["counts"], float) if "counts" in d else None)
        if "feature" in d:
            node.feature = int(d["feature"])
            node.threshold = float(d["threshold"])
            node.left = cls.from_dict(d["left"])
            node.right = cls.from_dict(d["right"])
        return node


@dataclass
class _BaseTree:
    max_depth: Optional[int] = None
    min_samples: int = 2
    max_features: Optional[int] = None
    root: Optional[Node] = None
    n_features: int = 0

    def _features(self, rng: Optional[np.random.Generator]) -> Optional[list[int]]:
        if self.max_features is None or self.max_features >= self.n_features:
            return None
        if rng is None:
            raise ArgumentError("feature subsampling requires a random generator")
        return sorted(rng.choice(self.n_features, size=self.max_features, replace=False).tolist())

    def _stop(self, depth: int, n: int) -> bool:
        return (self.max_depth is not None and depth >= self.max_depth) or n < self.min_samples or n == 1

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ArgumentError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def apply(self, X) -> list[Node]:
        """Leaf reached by each row."""
        X = self._check_X(X)
        out: list = [None] * len(X)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                for i in idx:
                    out[i] = node
                continue
            go_left = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend([node.right, node.left])

    @property
    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def raw_importances(self) -> np.ndarray:
        """Weighted impurity decrease per feature, normalized to sum 1 (zeros if no split)."""
        imp = np.zeros(self.n_features)
        total = self.root.weight
        for node in self.nodes():
            if node.is_leaf:
                continue
            g = (node.left.weight * node.left.impurity + node.right.weight * node.right.impurity) / node.weight
            imp[node.feature] += node.weight / total * (node.impurity - g)
        imp = np.maximum(imp, 0.0)
        s = imp.sum()
        return imp / s if s > 0 else imp


@dataclass
class DecisionTree(_BaseTree):
    """Classification tree; leaves hold weighted class counts and probabilities."""

    criterion: Criterion = "gini"
    n_classes: int = 2

    def fit(self, X, y, sample_weight=None, rng: Optional[np.random.Generator] = None) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if len(y) == 0:
            raise ArgumentError("cannot fit a tree on zero rows")
        self.n_features = X.shape[1]
        self.n_classes = max(self.n_classes, int(y.max()) + 1)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.root = self._grow(X, y, w, 0, rng)
        return self

    def _grow(self, X, y, w, depth, rng) -> Node:
        counts = np.bincount(y, weights=w, minlength=self.n_classes).astype(float)
        wn = counts.sum()
        node = Node(len(y), float(wn), impurity(counts, self.criterion) if wn > 0 else 0.0,
                    counts / wn if wn > 0 else np.full(self.n_classes, 1.0 / self.n_classes), counts)
        if self._stop(depth, len(y)) or node.impurity <= 0.0:
            return node
        split = best_split(X, y, self.criterion, self._features(rng), w, self.n_classes)
        if split is None:
            return node
        mask = X[:, split.feature] <= split.threshold
        node.feature, node.threshold = split.feature, split.threshold
        node.left = self._grow(X[mask], y[mask], w[mask], depth + 1, rng)
        node.right = self._grow(X[~mask], y[~mask], w[~mask], depth + 1, rng)
        return node

    def predict_proba(self, X) -> np.ndarray:
        return np.array([leaf.value for leaf in self.apply(X)])

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {"type": "classification", "criterion": self.criterion, "max_depth": self.max_depth,
                "min_samples": self.min_samples, "max_features": self.max_features,
                "n_features": self.n_features, "n_classes": self.n_classes, "root": self.root.to_dict()}


@dataclass
class RegressionTree(_BaseTree):
    """Squared-error tree; ``leaf_value`` maps the row indices of a leaf to its output."""

    def fit(self, X, r, leaf_value: Optional[Callable[[np.ndarray], float]] = None,
            rng: Optional[np.random.Generator] = None) -> "RegressionTree":
        X = np.asarray(X, dtype=float)
        r = np.asarray(r, dtype=float)
        if len(r) == 0:
            raise ArgumentError("cannot fit a tree on zero rows")
        self.n_features = X.shape[1]
        leaf_value = leaf_value or (lambda idx: float(r[idx].mean()))
        self.root = self._grow(X, r, np.arange(len(r)), 0, leaf_value, rng)
        return self

    def _grow(self, X, r, idx, depth, leaf_value, rng) -> Node:
        rr = r[idx]
        node = Node(len(idx), float(len(idx)), float(rr.var()), np.array([0.0]))
        split = None
        if not (self._stop(depth, len(idx)) or node.impurity <= 0.0):
            split = best_split_regression(X[idx], rr, self._features(rng))
        if split is None:
            node.value = np.array([leaf_value(idx)])
            return node
        mask = X[idx, split.feature] <= split.threshold
        node.feature, node.threshold = split.feature, split.threshold
        node.left = self._grow(X, r, idx[mask], depth + 1, leaf_value, rng)
        node.right = self._grow(X, r, idx[~mask], depth + 1, leaf_value, rng)
        return node

    def predict(self, X) -> np.ndarray:
        return np.array([leaf.value[0] for leaf in self.apply(X)])

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes() if n.is_leaf]

    def to_dict(self) -> dict:
        return {"type": "regression", "max_depth": self.max_depth, "min_samples": self.min_samples,
                "max_features": self.max_features, "n_features": self.n_features,
                "root": self.root.to_dict()}


def tree_from_dict(d: dict):
    if d["type"] == "classification":
        t = DecisionTree(d["max_depth"], d["min_samples"], d["max_features"],
                         criterion=d["criterion"], n_classes=d["n_classes"])
    else:
        t = RegressionTree(d["max_depth"], d["min_samples"], d["max_features"])
    t.n_features = d["n_features"]
    t.root = Node.from_dict(d["root"])
    return t
