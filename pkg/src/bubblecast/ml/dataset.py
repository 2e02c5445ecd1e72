"""Aligned feature / label matrices and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..errors import IngestError, ValidationError
from ..labeling import LABELS, check_label_invariants
from ..timeseries import parse_date, to_date64, write_csv

FEATURES = ("GDP", "BOP", "CPI", "3M T-Bill", "10Y T-Note", "U-Rate", "Sentiment")


@dataclass(frozen=True)
class Dataset:
    feature_names: tuple
    X: np.ndarray
    Y: np.ndarray
    dates: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y).astype(np.int8)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValidationError(f"X shape {X.shape} does not match {len(self.feature_names)} features")
        if Y.shape != (len(X), len(LABELS)):
            raise ValidationError(f"Y shape {Y.shape} does not match {len(X)} rows x {len(LABELS)} labels")
        if len(self.dates) != len(X):
            raise ValidationError("one date per row is required")
        if not np.all(np.isfinite(X)):
            raise ValidationError("non-finite feature values")
        check_label_invariants(Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "dates", to_date64(self.dates) if len(self.dates) else np.array([], "datetime64[D]"))

    def __len__(self):
        return len(self.X)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.feature_names, self.X[idx], self.Y[idx], self.dates[idx])

    def to_csv(self, path: Union[str, Path]) -> None:
        cols = {"date": [str(d) for d in self.dates]}
        for j, name in enumerate(self.feature_names):
            cols[name] = self.X[:, j]
        for j, name in enumerate(LABELS):
            cols[name] = self.Y[:, j]
        write_csv(path, cols, float_fmt="{:.17g}")


def read_dataset(path: Union[str, Path], feature_names: Sequence[str] | None = None) -> Dataset:
    """Load a dataset CSV: ``date``, feature columns, then the four label columns."""
    text = Path(path).read_text(encoding="utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError(f"{path}: empty file") from None
    if header[0] != "date" or tuple(header[-len(LABELS):]) != LABELS:
        raise IngestError(f"{path}: header must be date, <features>, {', '.join(LABELS)}")
    names = tuple(header[1:-len(LABELS)])
    if feature_names is not None and tuple(feature_names) != names:
        raise ValidationError(f"schema drift: dataset features {names} != expected {tuple(feature_names)}")
    dates, rows = [], []
    for i, row in enumerate(reader, start=1):
        if not row:
            continue
        try:
            dates.append(parse_date(row[0]))
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise IngestError(str(exc), row=i) from None
    arr = np.array(rows, dtype=float).reshape(-1, len(header) - 1)
    p = len(names)
    return Dataset(names, arr[:, :p], arr[:, p:].astype(int), np.array(dates, dtype="datetime64[D]"))
