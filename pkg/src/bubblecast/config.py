"""Pipeline configuration: one YAML (or JSON) file validated before any stage runs."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .bubble_detect import DetectionConfig
from .errors import ArgumentError
from .ml.dataset import FEATURES
from .ml.multilabel import ModelSpec
from .timeseries import parse_date

_TOP = {"inputs", "grid", "detection", "labeling", "model", "evaluation", "output"}


@dataclass
class LabelingConfig:
    rule: str = "threshold"
    tau: int = 6
    C: float = 0.5
    w: int = 3

    def validate(self):
        if self.rule not in ("threshold", "rolling_mean"):
            raise ArgumentError(f"labeling.rule must be 'threshold' or 'rolling_mean', got {self.rule!r}")
        if int(self.tau) < 1:
            raise ArgumentError("labeling.tau must be >= 1")
        if not (0 < float(self.C) < 1):
            raise ArgumentError("labeling.C must lie in (0, 1)")
        if int(self.w) < 1:
            raise ArgumentError("labeling.w must be >= 1")


@dataclass
class EvaluationConfig:
    k_folds: int = 5
    split: str = "stratified"
    test_fraction: float = 0.25
    seed: int = 0
    C_values: list = field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])

    def validate(self):
        if int(self.k_folds) < 2:
            raise ArgumentError("evaluation.k_folds must be >= 2")
        if self.split not in ("stratified", "chronological"):
            raise ArgumentError("evaluation.split must be 'stratified' or 'chronological'")
        if not (0 < float(self.test_fraction) < 1):
            raise ArgumentError("evaluation.test_fraction must lie in (0, 1)")
        if any(not (0 < float(c) < 1) for c in self.C_values):
            raise ArgumentError("evaluation.C_values must lie in (0, 1)")


@dataclass
class PipelineConfig:
    base_dir: Path
    pd_series: Optional[Path]
    macro: dict
    news_scored: Optional[Path]
    date_column: str
    value_column: str
    grid_start: Optional[str]
    grid_end: Optional[str]
    detection: DetectionConfig
    labeling: LabelingConfig
    model: ModelSpec
    model_grid: dict
    evaluation: EvaluationConfig
    output: Path

    @classmethod
    def from_dict(cls, d: dict, base_dir: Union[str, Path] = ".") -> "PipelineConfig":
        d = dict(d or {})
        base = Path(base_dir)
        unknown = set(d) - _TOP
        if unknown:
            raise ArgumentError(f"unknown config sections: {sorted(unknown)}")
        inputs = dict(d.get("inputs") or {})

        def path(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        macro = {str(k): path(v) for k, v in (inputs.get("macro") or {}).items()}
        bad = set(macro) - set(FEATURES)
        if bad:
            raise ArgumentError(f"unknown macro features {sorted(bad)}; expected names from {FEATURES}")
        grid = dict(d.get("grid") or {})
        for key in ("start", "end"):
            if grid.get(key) is not None:
                try:
                    parse_date(grid[key])
                except ValueError:
                    raise ArgumentError(f"grid.{key}: unparseable date {grid[key]!r}") from None
        lab = LabelingConfig(**(d.get("labeling") or {}))
        lab.validate()
        model = dict(d.get("model") or {"family": "gradient_boost"})
        spec = ModelSpec(model.get("family", "gradient_boost"), model.get("params") or {}, int(model.get("seed", 0)))
        ev = EvaluationConfig(**(d.get("evaluation") or {}))
        ev.validate()
        return cls(
            base_dir=base,
            pd_series=path(inputs.get("pd_series")),
            macro=macro,
            news_scored=path(inputs.get("news_scored")),
            date_column=inputs.get("date_column", "date"),
            value_column=inputs.get("value_column", "value"),
            grid_start=None if grid.get("start") is None else str(grid["start"]),
            grid_end=None if grid.get("end") is None else str(grid["end"]),
            detection=DetectionConfig.from_dict(d.get("detection")),
            labeling=lab,
            model=spec,
            model_grid=dict(model.get("grid") or {}),
            evaluation=ev,
            output=path(d.get("output", "out")),
        )

    def check_files(self, *names: str) -> None:
        """Raise FileNotFoundError naming the first referenced input that is missing."""
        for name in names:
            p = getattr(self, name)
            paths = p.values() if isinstance(p, dict) else [p]
            for q in paths:
                if q is not None and not Path(q).is_file():
                    raise FileNotFoundError(f"{name}: no such file {q}")


def load_config(path: Union[str, Path, None]) -> PipelineConfig:
    if path is None:
        return PipelineConfig.from_dict({}, ".")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config: no such file {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ArgumentError(f"config {p}: {exc}") from None
    if not isinstance(data, dict):
        raise ArgumentError(f"config {p}: top level must be a mapping")
    return PipelineConfig.from_dict(data, p.parent)
