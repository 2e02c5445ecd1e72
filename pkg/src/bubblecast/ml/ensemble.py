"""Tree ensembles: bagging / random forest, AdaBoost, logistic gradient boosting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..errors import ArgumentError, UnsupportedOperationError
from .tree import DecisionTree, RegressionTree, tree_from_dict

KINDS = ("tree", "bagging", "random_forest", "adaboost", "gradient_boost", "knn", "logistic", "naive_bayes")
TREE_KINDS = ("tree", "bagging", "random_forest", "adaboost", "gradient_boost")
LOGODDS_EPS = 1e-6


def member_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(y, F) -> float:
    """Mean negative log-likelihood of labels ``y`` under logits ``F``."""
    y = np.asarray(y, dtype=float)
    F = np.asarray(F, dtype=float)
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


@dataclass
class EnsembleModel:
    kind: str
    members: list
    member_weights: list = field(default_factory=list)
    hyperparameters: dict = field(default_factory=dict)
    importances: Optional[np.ndarray] = None
    n_features: int = 0
    base_score: float = 0.0
    constant: Optional[int] = None  # set when trained on single-class data
    history: list = field(default_factory=list)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ArgumentError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def decision_function(self, X) -> np.ndarray:
        """Ensemble logit (gradient boosting) or weighted vote margin (AdaBoost)."""
        X = self._check(X)
        if self.kind == "gradient_boost":
            lr = self.hyperparameters["learning_rate"]
            F = np.full(len(X), self.base_score)
            for tree in self.members:
                F += lr * tree.predict(X)
            return F
        if self.kind == "adaboost":
            F = np.zeros(len(X))
            for a, tree in zip(self.member_weights, self.members):
                F += a * (2 * tree.predict(X) - 1)
            return F
        raise UnsupportedOperationError(f"{self.kind} has no decision function")

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        if self.constant is not None and not self.members:
            p = np.zeros((len(X), 2))
            p[:, self.constant] = 1.0
            return p
        if self.kind == "gradient_boost":
            p1 = sigmoid(self.decision_function(X))
            return np.column_stack([1 - p1, p1])
        if self.kind == "adaboost":
            votes = np.zeros(len(X))
            for a, tree in zip(self.member_weights, self.members):
                votes += a * tree.predict(X)
            p1 = votes / float(np.sum(self.member_weights))
            return np.column_stack([1 - p1, p1])
        if self.kind in ("tree", "bagging", "random_forest"):
            return np.mean([m.predict_proba(X) for m in self.members], axis=0)
        return self.members[0].predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def is_tree_based(self) -> bool:
        return self.kind in TREE_KINDS

    def to_dict(self) -> dict:
        members = [m.to_dict() for m in self.members]
        return {
            "kind": self.kind,
            "hyperparameters": self.hyperparameters,
            "n_features": self.n_features,
            "base_score": self.base_score,
            "constant": self.constant,
            "member_weights": [float(w) for w in self.member_weights],
            "importances": None if self.importances is None else [float(v) for v in self.importances],
            "members": members,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        from .baselines import baseline_from_dict

        if d["kind"] in TREE_KINDS:
            members = [tree_from_dict(m) for m in d["members"]]
        else:
            members = [baseline_from_dict(m) for m in d["members"]]
        return cls(
            kind=d["kind"], members=members, member_weights=list(d["member_weights"]),
            hyperparameters=dict(d["hyperparameters"]),
            importances=None if d["importances"] is None else np.array(d["importances"]),
            n_features=d["n_features"], base_score=d["base_score"], constant=d["constant"],
        )


def _mean_importance(trees, n_features) -> np.ndarray:
    imps = np.array([t.raw_importances() for t in trees]) if trees else np.zeros((0, n_features))
    imps = imps[imps.sum(axis=1) > 0] if len(imps) else imps
    if len(imps) == 0:
        return np.zeros(n_features)
    m = imps.mean(axis=0)
    return m / m.sum()


def _binary(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ArgumentError("labels must be binary (0/1)")
    return y.astype(int)


def _constant_model(kind, y, n_features, hp) -> EnsembleModel:
    return EnsembleModel(kind, [], [], hp, np.zeros(n_features), n_features, constant=int(y[0]))


def _class_weights(y, class_weight) -> Optional[np.ndarray]:
    if class_weight is None:
        return None
    if class_weight != "balanced":
        raise ArgumentError(f"class_weight must be None or 'balanced', got {class_weight!r}")
    counts = np.bincount(y, minlength=2).astype(float)
    per_class = len(y) / (2.0 * np.where(counts > 0, counts, 1.0))
    return per_class[y]


def fit_tree(X, y, max_depth: Optional[int] = None, min_samples: int = 2, criterion: str = "gini",
             class_weight=None) -> EnsembleModel:
    """Single CART classifier wrapped as a one-member model."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ArgumentError("cannot fit on zero rows")
    hp = {"max_depth": max_depth, "min_samples": min_samples, "criterion": criterion, "class_weight": class_weight}
    tree = DecisionTree(max_depth, min_samples, criterion=criterion)
    tree.fit(X, y, _class_weights(y, class_weight) if len(np.unique(y)) > 1 else None)
    return EnsembleModel("tree", [tree], [1.0], hp, _mean_importance([tree], X.shape[1]), X.shape[1])


def fit_bagging(X, y, n_estimators: int = 100, seed: int = 0, random_forest: bool = False,
                m_try: Optional[int] = None, max_depth: Optional[int] = None, min_samples: int = 2,
                criterion: str = "gini", bootstrap: bool = True, class_weight=None) -> EnsembleModel:
    """Trees on bootstrap resamples; ``random_forest`` also samples ``m_try`` features per node.

    Member ``i`` draws from the stream ``(seed, i)``.
    """
    if n_estimators < 1:
        raise ArgumentError("n_estimators must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n, p = X.shape
    if random_forest and m_try is None:
        m_try = int(math.ceil(math.sqrt(p)))
    kind = "random_forest" if random_forest else "bagging"
    hp = {"n_estimators": n_estimators, "seed": seed, "m_try": m_try if random_forest else None,
          "max_depth": max_depth, "min_samples": min_samples, "criterion": criterion,
          "bootstrap": bootstrap, "class_weight": class_weight}
    members = []
    for i in range(n_estimators):
        rng = member_rng(seed, i)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = DecisionTree(max_depth, min_samples, m_try if random_forest else None, criterion=criterion)
        yi = y[idx]
        tree.fit(X[idx], yi, _class_weights(yi, class_weight) if len(np.unique(yi)) > 1 else None, rng=rng)
        members.append(tree)
    return EnsembleModel(kind, members, [1.0] * n_estimators, hp, _mean_importance(members, p), p)


def fit_adaboost(X, y, n_estimators: int = 50, depth: int = 1, criterion: str = "gini",
                 min_samples: int = 2) -> EnsembleModel:
    """Discrete (two-class SAMME) AdaBoost on depth-limited trees.

    Round weight ``alpha = 0.5 * ln((1 - eps) / eps)``; misclassified rows are
    up-weighted by ``exp(alpha)``, correct ones down-weighted by ``exp(-alpha)``.
    Stops when ``eps >= 0.5`` (that round is discarded) or ``eps == 0`` (kept).
    ``history`` records the weighted error of every retained round.
    """
    if n_estimators < 1:
        raise ArgumentError("n_estimators must be >= 1")
    X = np.asarray(X, dtype=float)
    y = _binary(y)
    n, p = X.shape
    hp = {"n_estimators": n_estimators, "depth": depth, "criterion": criterion, "min_samples": min_samples}
    if len(np.unique(y)) < 2:
        tree = DecisionTree(0, min_samples, criterion=criterion).fit(X, y)
        return EnsembleModel("adaboost", [tree], [1.0], hp, np.zeros(p), p, history=[0.0])
    w = np.full(n, 1.0 / n)
    members, alphas, errors = [], [], []
    for _ in range(n_estimators):
        tree = DecisionTree(depth, min_samples, criterion=criterion).fit(X, y, sample_weight=w)
        miss = tree.predict(X) != y
        eps = float(np.sum(w[miss]) / np.sum(w))
        if eps >= 0.5:
            if not members:
                members, alphas, errors = [tree], [1.0], [eps]
            break
        eps_c = max(eps, 1e-10)
        alpha = 0.5 * math.log((1 - eps_c) / eps_c)
        members.append(tree)
        alphas.append(alpha)
        errors.append(eps)
        if eps == 0.0:
            break
        w = w * np.exp(np.where(miss, alpha, -alpha))
        w /= w.sum()
    return EnsembleModel("adaboost", members, alphas, hp, _mean_importance(members, p), p, history=errors)


def _newton_leaf(y, p):
    def value(idx):
        g = float(np.sum(y[idx] - p[idx]))
        h = float(np.sum(p[idx] * (1 - p[idx])))
        return g / max(h, 1e-12)
    return value


def fit_gradient_boosting(X, y, n_estimators: int = 100, learning_rate: float = 0.1, depth: int = 3,
                          min_samples: int = 2) -> EnsembleModel:
    """Logistic-loss boosting with squared-error trees and one Newton step per leaf.

    ``F_0`` is the clipped base-rate log-odds. Each round fits a regression tree
    to the residuals ``y - sigmoid(F)``; a leaf outputs ``sum(g) / sum(h)``. If
    the damped step would raise a leaf's loss it is halved until it does not,
    so the training loss never increases. ``history`` holds the loss after
    each round, starting with the constant model.
    """
    if learning_rate < 0:
        raise ArgumentError("learning_rate must be >= 0")
    X = np.asarray(X, dtype=float)
    y = _binary(y).astype(float)
    n, p = X.shape
    hp = {"n_estimators": n_estimators, "learning_rate": learning_rate, "depth": depth, "min_samples": min_samples}
    rate = float(np.clip(y.mean(), LOGODDS_EPS, 1 - LOGODDS_EPS))
    base = math.log(rate / (1 - rate))
    F = np.full(n, base)
    history = [logistic_loss(y, F)]
    model = EnsembleModel("gradient_boost", [], [], hp, None, p, base_score=base, history=history)
    if len(np.unique(y)) < 2:
        model.importances = np.zeros(p)
        return model
    for _ in range(n_estimators):
        prob = sigmoid(F)
        tree = RegressionTree(depth, min_samples).fit(X, y - prob, leaf_value=_newton_leaf(y, prob))
        leaf_of = tree.apply(X)
        groups: dict[int, list] = {}
        for i, leaf in enumerate(leaf_of):
            groups.setdefault(id(leaf), [leaf, []])[1].append(i)
        for leaf, rows in groups.values():
            rows = np.asarray(rows)
            leaf.value[0] = _safeguard(y[rows], F[rows], float(leaf.value[0]), learning_rate)
            F[rows] += learning_rate * leaf.value[0]
        model.members.append(tree)
        model.member_weights.append(learning_rate)
        history.append(logistic_loss(y, F))
    model.importances = _mean_importance(model.members, p)
    return model


def _safeguard(y, F, gamma, lr) -> float:
    if lr == 0 or gamma == 0:
        return gamma
    before = np.sum(np.logaddexp(0.0, F) - y * F)
    for _ in range(60):
        G = F + lr * gamma
        if np.sum(np.logaddexp(0.0, G) - y * G) <= before:
            return gamma
        gamma *= 0.5
    return 0.0
