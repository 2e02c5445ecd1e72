"""Binary-relevance multilabel wrapper with label-hierarchy enforcement."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import ArgumentError, UnsupportedOperationError, ValidationError
from ..labeling import LABELS
from .baselines import fit_baseline
from .dataset import Dataset
from .ensemble import (
    EnsembleModel,
    KINDS,
    fit_adaboost,
    fit_bagging,
    fit_gradient_boosting,
    fit_tree,
)

FORMAT = "bubblecast-model"
FORMAT_VERSION = 1
ALIASES = {"xgboost": "gradient_boost", "rf": "random_forest", "decision_tree": "tree"}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        fam = ALIASES.get(self.family, self.family)
        if fam not in KINDS:
            raise ArgumentError(f"unknown model family {self.family!r}; choose from {KINDS}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", dict(self.params))

    def with_params(self, **params) -> "ModelSpec":
        return ModelSpec(self.family, {**self.params, **params}, self.seed)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params, "seed": self.seed}


def fit_model(X, y, spec: ModelSpec) -> EnsembleModel:
    """Fit one binary classifier of ``spec.family``."""
    p = dict(spec.params)
    fam = spec.family
    if fam == "tree":
        return fit_tree(X, y, **p)
    if fam in ("bagging", "random_forest"):
        return fit_bagging(X, y, seed=spec.seed, random_forest=fam == "random_forest", **p)
    if fam == "adaboost":
        return fit_adaboost(X, y, **p)
    if fam == "gradient_boost":
        return fit_gradient_boosting(X, y, **p)
    return fit_baseline(X, y, fam, **p)


def predict(model: EnsembleModel, x) -> tuple[int, np.ndarray]:
    """Class and class-probability vector for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ArgumentError("predict takes a single feature vector")
    proba = model.predict_proba(x[None, :])[0]
    return int(np.argmax(proba)), proba


@dataclass
class MultilabelModel:
    models: list
    feature_names: tuple
    spec: ModelSpec

    def predict_proba(self, X) -> np.ndarray:
        """(n, 4) positive-class probabilities before hierarchy enforcement."""
        X = self._check(X)
        return np.column_stack([m.predict_proba(X)[:, 1] for m in self.models])

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ArgumentError(f"expected {len(self.feature_names)} feature columns")
        return X

    def raw_predict(self, X) -> np.ndarray:
        X = self._check(X)
        return np.column_stack([m.predict(X) for m in self.models]).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "labels": list(LABELS),
            "spec": self.spec.to_dict(),
            "importances": feature_importance(self)[0].tolist() if all(m.is_tree_based for m in self.models) else None,
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultilabelModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ValidationError(f"not a {FORMAT} v{FORMAT_VERSION} document")
        s = d["spec"]
        return cls([EnsembleModel.from_dict(m) for m in d["models"]], tuple(d["feature_names"]),
                   ModelSpec(s["family"], s["params"], s["seed"]))


def enforce_hierarchy(raw: np.ndarray, proba: Optional[np.ndarray] = None) -> np.ndarray:
    """Make every row a valid label quadruple.

    ``is_bubble`` decides; ``not_bubble`` is its complement. A non-bubble row
    has no direction. A bubble row is up when P(up) > P(down) (falling back to
    the raw up prediction), otherwise down.
    """
    raw = np.asarray(raw).astype(bool)
    b = raw[:, 0]
    if proba is not None:
        up = proba[:, 2] > proba[:, 3]
    else:
        up = raw[:, 2] & ~raw[:, 3]
    out = np.column_stack([b, ~b, b & up, b & ~up])
    return out.astype(np.int8)


def predict_multilabel(model: MultilabelModel, X) -> np.ndarray:
    X = model._check(X)
    return enforce_hierarchy(model.raw_predict(X), model.predict_proba(X))


def fit_multilabel(data: Dataset, spec: ModelSpec) -> MultilabelModel:
    """One independent classifier per label column (binary relevance).

    A constant label column gets a constant predictor and a warning.
    """
    models = []
    for j, name in enumerate(LABELS):
        y = data.Y[:, j].astype(int)
        if len(np.unique(y)) < 2:
            warnings.warn(f"label {name!r} is constant in the training data; using a constant predictor",
                          stacklevel=2)
            models.append(EnsembleModel(spec.family, [], [], dict(spec.params), np.zeros(data.X.shape[1]),
                                        data.X.shape[1], constant=int(y[0])))
        else:
            models.append(fit_model(data.X, y, spec))
    return MultilabelModel(models, data.feature_names, spec)


def feature_importance(model: Union[MultilabelModel, EnsembleModel]) -> tuple[np.ndarray, np.ndarray]:
    """Mean-decrease-in-impurity scores averaged over labels, and 1-based ranks.

    Label models trained on a constant column carry no splits and are left out
    of the average. Ranks order by descending score; ties keep feature order.
    """
    models = model.models if isinstance(model, MultilabelModel) else [model]
    for m in models:
        if not m.is_tree_based:
            raise UnsupportedOperationError(f"feature importance is defined for tree models, not {m.kind}")
    imps = [m.importances for m in models if m.importances is not None and m.importances.sum() > 0]
    p = models[0].n_features
    if not imps:
        scores = np.zeros(p)
    else:
        scores = np.mean(imps, axis=0)
        scores = scores / scores.sum()
    return scores, rank_scores(scores)


def rank_scores(scores) -> np.ndarray:
    order = np.argsort(-np.asarray(scores), kind="stable")
    ranks = np.empty(len(order), dtype=int)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def save_model(path: Union[str, Path], model: MultilabelModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> MultilabelModel:
    return MultilabelModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
