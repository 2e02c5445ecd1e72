"""Non-ensemble baselines: k-nearest neighbours, logistic regression, Gaussian naive Bayes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ArgumentError
from .ensemble import EnsembleModel, sigmoid


def _standardizer(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


@dataclass
class KNN:
    K: int
    mu: np.ndarray
    sd: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    n_classes: int = 2

    def neighbours(self, X) -> np.ndarray:
        Zq = (np.asarray(X, float) - self.mu) / self.sd
        d2 = ((Zq[:, None, :] - self.Z[None, :, :]) ** 2).sum(axis=2)
        return np.argsort(d2, axis=1, kind="stable")[:, : self.K]

    def predict_proba(self, X) -> np.ndarray:
        nb = self.neighbours(X)
        labels = self.y[nb]
        votes = np.stack([(labels == c).sum(axis=1) for c in range(self.n_classes)], axis=1).astype(float)
        proba = votes / self.K
        # vote ties go to the class of the nearest neighbour among the tied classes
        top = votes.max(axis=1, keepdims=True)
        tied = (votes == top).sum(axis=1) > 1
        for i in np.flatnonzero(tied):
            for lab in labels[i]:
                if votes[i, lab] == top[i, 0]:
                    proba[i, lab] += 1e-9
                    break
        return proba / proba.sum(axis=1, keepdims=True)

    def to_dict(self):
        return {"type": "knn", "K": self.K, "mu": self.mu.tolist(), "sd": self.sd.tolist(),
                "Z": self.Z.tolist(), "y": self.y.tolist(), "n_classes": self.n_classes}


@dataclass
class Logistic:
    mu: np.ndarray
    sd: np.ndarray
    coef: np.ndarray
    intercept: float

    def predict_proba(self, X) -> np.ndarray:
        Z = (np.asarray(X, float) - self.mu) / self.sd
        p1 = sigmoid(Z @ self.coef + self.intercept)
        return np.column_stack([1 - p1, p1])

    def to_dict(self):
        return {"type": "logistic", "mu": self.mu.tolist(), "sd": self.sd.tolist(),
                "coef": self.coef.tolist(), "intercept": self.intercept}


@dataclass
class GaussianNB:
    priors: np.ndarray
    means: np.ndarray
    vars: np.ndarray

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        ll = -0.5 * (np.log(2 * np.pi * self.vars)[None] + (X[:, None, :] - self.means[None]) ** 2 / self.vars[None])
        with np.errstate(divide="ignore"):
            return ll.sum(axis=2) + np.log(self.priors)[None]

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        e = np.exp(jll)
        return e / e.sum(axis=1, keepdims=True)

    def to_dict(self):
        return {"type": "naive_bayes", "priors": self.priors.tolist(), "means": self.means.tolist(),
                "vars": self.vars.tolist()}


def baseline_from_dict(d: dict):
    arr = np.asarray
    if d["type"] == "knn":
        return KNN(d["K"], arr(d["mu"]), arr(d["sd"]), arr(d["Z"]), arr(d["y"], dtype=int), d["n_classes"])
    if d["type"] == "logistic":
        return Logistic(arr(d["mu"]), arr(d["sd"]), arr(d["coef"]), d["intercept"])
    return GaussianNB(arr(d["priors"]), arr(d["means"]), arr(d["vars"]))


def fit_knn(X, y, K: int = 3) -> EnsembleModel:
    X = np.asarray(X, float)
    y = np.asarray(y, int)
    if K < 1 or K > len(y):
        raise ArgumentError(f"K must lie in [1, n={len(y)}], got {K}")
    mu, sd = _standardizer(X)
    m = KNN(K, mu, sd, (X - mu) / sd, y, max(2, int(y.max()) + 1))
    return EnsembleModel("knn", [m], [1.0], {"K": K}, None, X.shape[1])


def fit_logistic(X, y, iterations: int = 1000, learning_rate: float = 0.1, l2: float = 0.0) -> EnsembleModel:
    """Batch gradient descent on the mean logistic loss over standardized features."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(np.unique(y)) < 2:
        raise ArgumentError("logistic regression needs both classes present")
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(iterations):
        r = sigmoid(Z @ w + b) - y
        w -= learning_rate * (Z.T @ r / len(y) + l2 * w)
        b -= learning_rate * float(r.mean())
    hp = {"iterations": iterations, "learning_rate": learning_rate, "l2": l2}
    return EnsembleModel("logistic", [Logistic(mu, sd, w, b)], [1.0], hp, None, X.shape[1])


def fit_naive_bayes(X, y, var_smoothing: float = 1e-9) -> EnsembleModel:
    X = np.asarray(X, float)
    y = np.asarray(y, int)
    K = max(2, int(y.max()) + 1)
    eps = var_smoothing * float(X.var(axis=0).max() or 1.0)
    priors = np.array([np.mean(y == c) for c in range(K)])
    means = np.array([X[y == c].mean(axis=0) if np.any(y == c) else np.zeros(X.shape[1]) for c in range(K)])
    vars_ = np.array([X[y == c].var(axis=0) + eps if np.any(y == c) else np.ones(X.shape[1]) for c in range(K)])
    return EnsembleModel("naive_bayes", [GaussianNB(priors, means, vars_)], [1.0],
                         {"var_smoothing": var_smoothing}, None, X.shape[1])


def fit_baseline(X, y, kind: str, **params) -> EnsembleModel:
    if kind == "knn":
        return fit_knn(X, y, **params)
    if kind == "logistic":
        return fit_logistic(X, y, **params)
    if kind == "naive_bayes":
        return fit_naive_bayes(X, y, **params)
    raise ArgumentError(f"unknown baseline {kind!r}")
