"""Command-line entry point: ``bubblecast <command> --config FILE``.

Exit status is 0 on success, 2 when validated input is rejected (missing
file, malformed data, bad configuration) and 1 on any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bubble_detect import AdfSpec, DetectionConfig, adf_stat, detect, frac_index
from .config import PipelineConfig, load_config
from .errors import BubblecastError, PipelineError
from .evaluation import (
    evaluate_holdout,
    grid_search,
    importance_table,
    kfold_cv,
    metrics,
    micro_macro_curve,
    permutation_importance,
    threshold_sweep,
    write_json,
)
from .labeling import LABELS, make_labels, read_labels, rolling_mean_labels
from .ml.dataset import FEATURES, Dataset, read_dataset
from .ml.multilabel import ModelSpec, feature_importance, fit_multilabel, load_model, predict_multilabel, save_model
from .sentiment import aggregate_values, bucket_by_period, read_scored_records
from .simulate import write_fixtures
from .svg import flag_bands, line_chart
from .timeseries import Grid, TimeSeries, biweekly_grid, clip_grid, cubic_spline, load_csv, to_date64, write_csv

log = logging.getLogger("bubblecast")

INPUT_ERRORS = (BubblecastError, FileNotFoundError, ValueError)


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.exc = exc


def _out(cfg: PipelineConfig, args) -> Path:
    out = Path(args.out) if args.out else cfg.output
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    if args.seed is not None:
        cfg.detection.seed = args.seed
        cfg.evaluation.seed = args.seed
        cfg.model = ModelSpec(cfg.model.family, cfg.model.params, args.seed)
    for key in ("r0", "k", "quantile", "replications", "min_duration"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg.detection, key, v if key != "r0" else (v if v == "auto" else float(v)))
    cfg.detection.validate()
    for key in ("tau", "C", "w", "rule"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg.labeling, key, v)
    cfg.labeling.validate()
    if getattr(args, "family", None):
        cfg.model = ModelSpec(args.family, cfg.model.params if args.family == cfg.model.family else {}, cfg.model.seed)
    if getattr(args, "k_folds", None):
        cfg.evaluation.k_folds = args.k_folds
    cfg.evaluation.validate()
    return cfg


def _record_timing(out: Path, stage: str, seconds: float) -> None:
    p = out / "timings.json"
    t = json.loads(p.read_text()) if p.is_file() else {}
    t[stage] = round(seconds, 3)
    p.write_text(json.dumps(t, indent=1, sort_keys=True) + "\n")


def _read_series(path: Path, name: str) -> TimeSeries:
    return load_csv(path, "date", "value", name=name)


def biweekly_pd(cfg: PipelineConfig) -> TimeSeries:
    """The PD ratio interpolated onto the configured biweekly grid (clipped to its span)."""
    cfg.check_files("pd_series")
    if cfg.pd_series is None:
        raise FileNotFoundError("pd_series: not configured")
    src = load_csv(cfg.pd_series, cfg.date_column, cfg.value_column, name="pd_ratio")
    start = cfg.grid_start or str(src.timestamps[0])
    end = cfg.grid_end or str(src.timestamps[-1])
    grid = clip_grid(biweekly_grid(start, end), src)
    return cubic_spline(src, grid, name="pd_ratio")


def cmd_detect(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    t = time.perf_counter()
    pd_bi = biweekly_pd(cfg)
    det_cfg = cfg.detection
    T = len(pd_bi)
    r0 = det_cfg.resolve_r0(T)
    if frac_index(r0, T) >= T:
        stat = adf_stat(pd_bi.values, det_cfg.spec)
        print(f"GSADF (single full-sample window) = {stat:.6f}")
        write_json(out / "detect.json", {"gsadf": stat, "r0": r0, "T": T, "t0": T, "config": det_cfg.to_dict()})
        return 0
    result = detect(pd_bi.values, det_cfg, jobs=args.jobs)
    tr, tab, flags = result.trace, result.table, result.flags
    dates = [str(d) for d in pd_bi.timestamps]
    write_csv(out / "pd_biweekly.csv", {"date": dates, "value": pd_bi.values}, "{:.17g}")
    first = tr.first_index
    write_csv(out / "bsadf.csv", {"date": dates[first:], "bsadf": tr.stats[first:], "cv": tab.values[first:],
                                  "flag": flags[first:]}, "{:.12g}")
    write_csv(out / "flags.csv", {"date": dates[first:], "flag": flags[first:]})
    summary = {
        "T": T, "r0": r0, "t0": tr.t0, "gsadf": tr.gsadf(), "gsadf_cv": tab.gsadf_cv,
        "rejects_null": bool(tr.gsadf() > tab.gsadf_cv), "n_flagged": int(flags.sum()),
        "n_singular_windows": tr.n_singular, "episodes": [[dates[int(a)], dates[int(b)]] for a, b in flag_bands(flags)],
        "config": det_cfg.to_dict(),
    }
    write_json(out / "detect.json", summary)
    write_json(out / "critical_values.json", tab.to_dict())
    svg = line_chart(np.arange(T), {"PD ratio": pd_bi.values}, "PD ratio with detected bubble periods",
                     flag_bands(flags), (dates[0], dates[-1]))
    (out / "bsadf.svg").write_text(svg, encoding="utf-8")
    trace_svg = line_chart(np.arange(T), {"BSADF": tr.stats, f"cv {tab.quantile_level:g}": tab.values},
                           "BSADF sequence and critical values", flag_bands(flags), (dates[0], dates[-1]))
    (out / "bsadf_trace.svg").write_text(trace_svg, encoding="utf-8")
    _record_timing(out, "detect", time.perf_counter() - t)
    print(f"GSADF = {summary['gsadf']:.4f} (cv {summary['gsadf_cv']:.4f}); {summary['n_flagged']} flagged periods "
          f"in {len(summary['episodes'])} episodes -> {out}")
    return 0


def _flag_series(out: Path) -> tuple[TimeSeries, np.ndarray]:
    for name in ("flags.csv", "pd_biweekly.csv"):
        if not (out / name).is_file():
            raise FileNotFoundError(f"{out / name} missing; run `detect` first")
    flags = load_csv(out / "flags.csv", "date", "flag", name="flag")
    pd_bi = load_csv(out / "pd_biweekly.csv", "date", "value", name="pd_ratio")
    pd_sub = TimeSeries(flags.timestamps, pd_bi.values[np.isin(pd_bi.timestamps, flags.timestamps)],
                        pd_bi.frequency, "pd_ratio")
    return pd_sub, flags.values.astype(int)


def make_label_frame(cfg: PipelineConfig, out: Path):
    series, flags = _flag_series(out)
    lab = cfg.labeling
    if lab.rule == "rolling_mean":
        return rolling_mean_labels(series, flags, int(lab.w))
    return make_labels(series, flags, int(lab.tau), float(lab.C))


def cmd_label(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    lf = make_label_frame(cfg, out)
    lf.to_csv(out / "labels.csv")
    write_json(out / "labels.json", {"params": lf.params, "W": lf.W_resolved, "counts": lf.counts()})
    print(f"labels {lf.counts()} (W = {lf.W_resolved}) -> {out / 'labels.csv'}")
    return 0


def build_dataset(cfg: PipelineConfig, out: Path) -> tuple[Dataset, dict]:
    missing = [f for f in FEATURES[:-1] if f not in cfg.macro]
    if missing:
        raise PipelineError(f"macro series not configured: {missing}")
    cfg.check_files("macro")
    if (out / "labels.csv").is_file():
        lf = read_labels(out / "labels.csv")
    else:
        lf = make_label_frame(cfg, out)
        lf.to_csv(out / "labels.csv")
    dates = lf.timestamps
    cols = {}
    present = np.ones(len(dates), dtype=bool)
    for name in FEATURES[:-1]:
        src = _read_series(cfg.macro[name], name)
        inside = (dates >= src.timestamps[0]) & (dates <= src.timestamps[-1])
        vals = np.full(len(dates), np.nan)
        if inside.any():
            vals[inside] = cubic_spline(src, Grid(dates[inside]), name).values
        cols[name] = vals
        present &= inside
    sentiment_note = "scored"
    empty_periods = len(dates)
    if cfg.news_scored is not None and Path(cfg.news_scored).is_file():
        recs = read_scored_records(cfg.news_scored)
        buckets = bucket_by_period(recs, Grid(dates))
        empty_periods = sum(1 for b in buckets if b.count == 0)
        cols["Sentiment"] = aggregate_values(buckets, "average")
    else:
        warnings.warn("no scored-news file; Sentiment column set to 0", stacklevel=2)
        cols["Sentiment"] = np.zeros(len(dates))
        sentiment_note = "absent (zeros)"
    if not present.any():
        raise PipelineError("macro series and label dates do not overlap")
    X = np.column_stack([cols[f] for f in FEATURES])[present]
    data = Dataset(FEATURES, X, lf.matrix()[present], dates[present])
    info = {"rows": len(data), "dropped_missing_features": int((~present).sum()), "sentiment": sentiment_note,
            "empty_sentiment_periods": int(empty_periods)}
    return data, info


def cmd_build_dataset(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        data, info = build_dataset(cfg, out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    data.to_csv(out / "dataset.csv")
    write_json(out / "dataset.json", info)
    if info["dropped_missing_features"]:
        print(f"dropped {info['dropped_missing_features']} rows with missing features", file=sys.stderr)
    print(f"{info['rows']} rows -> {out / 'dataset.csv'}")
    return 0


def _dataset(out: Path) -> Dataset:
    if not (out / "dataset.csv").is_file():
        raise FileNotFoundError(f"{out / 'dataset.csv'} missing; run `build-dataset` first")
    return read_dataset(out / "dataset.csv")


def _importance_rows(scores, names):
    return {"feature": list(names), "importance": scores[0], "rank": scores[1]}


def cmd_train(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    data = _dataset(out)
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit_multilabel(data, cfg.model)
    save_model(out / "model.json", model)
    if all(m.is_tree_based for m in model.models):
        write_csv(out / "model_importance.csv", _importance_rows(feature_importance(model), data.feature_names))
    _record_timing(out, "train", time.perf_counter() - t)
    print(f"trained {cfg.model.family} on {len(data)} rows -> {out / 'model.json'}")
    return 0


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    data = _dataset(out)
    ev = cfg.evaluation
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if getattr(args, "grid", False) and cfg.model_grid:
            gs = grid_search(data, cfg.model, cfg.model_grid, int(ev.k_folds), int(ev.seed), args.jobs)
            write_json(out / "grid_search.json", gs.to_dict())
            _record_timing(out, f"grid_search_{cfg.model.family}", gs.wall_time)
            cfg.model = cfg.model.with_params(**gs.best_params)
        cv = kfold_cv(data, int(ev.k_folds), cfg.model, int(ev.seed), args.jobs)
        rep, pred, test = evaluate_holdout(data, cfg.model, float(ev.test_fraction), int(ev.seed),
                                           ev.split == "chronological")
        model_path = Path(args.model) if getattr(args, "model", None) else None
        if model_path is not None:
            model = load_model(model_path)
            if tuple(model.feature_names) != tuple(data.feature_names):
                raise PipelineError(f"schema drift: model features {model.feature_names} "
                                    f"!= dataset features {data.feature_names}")
            rep = metrics(predict_multilabel(model, data.X[test]), data.Y[test])
    rep.fold_scores = cv.fold_scores
    write_json(out / "cv.json", {"k": int(ev.k_folds), "seed": int(ev.seed), "spec": cfg.model.to_dict(),
                                 "fold_scores": cv.fold_scores, "mean_f1_macro": cv.mean})
    write_json(out / "metrics.json", rep.to_dict())
    (out / "metrics.txt").write_text(
        f"{cfg.model.family}: {ev.k_folds}-fold CV f1 macro = {cv.mean:.4f}\n\n" + rep.to_text(), encoding="utf-8")
    write_csv(out / "confusion.csv", {
        "label": list(LABELS),
        "tn": [int(rep.confusion[n][0, 0]) for n in LABELS],
        "fp": [int(rep.confusion[n][0, 1]) for n in LABELS],
        "fn": [int(rep.confusion[n][1, 0]) for n in LABELS],
        "tp": [int(rep.confusion[n][1, 1]) for n in LABELS],
    })
    _record_timing(out, f"evaluate_{cfg.model.family}", time.perf_counter() - t)
    print(f"{ev.k_folds}-fold CV f1 macro {cv.mean:.4f}; holdout f1 macro {rep.f1_macro:.4f} -> {out}")
    return 0


def cmd_sweep(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    data = _dataset(out)
    pd_bi = load_csv(out / "pd_biweekly.csv", "date", "value", name="pd_ratio")
    keep = np.isin(pd_bi.timestamps, data.dates)
    series = TimeSeries(pd_bi.timestamps[keep], pd_bi.values[keep], pd_bi.frequency, "pd_ratio")
    ev = cfg.evaluation
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sweep = threshold_sweep(data, series, cfg.model, [float(c) for c in ev.C_values], int(cfg.labeling.tau),
                                int(ev.seed), float(ev.test_fraction), int(cfg.labeling.w),
                                ev.split == "chronological")
    sweep.to_csv(out / "sweep.csv")
    write_json(out / "sweep.json", sweep.to_dict())
    curve = micro_macro_curve(sweep)
    write_csv(out / "micro_macro.csv", {"C": [c[0] for c in curve], "f1_micro": [c[1] for c in curve],
                                        "f1_macro": [c[2] for c in curve]}, "{:.6f}")
    svg = line_chart([c[0] for c in curve], {"micro F1": [c[1] for c in curve], "macro F1": [c[2] for c in curve]},
                     "Micro and macro F1 by threshold C", None, (f"C={curve[0][0]:g}", f"C={curve[-1][0]:g}"))
    (out / "micro_macro.svg").write_text(svg, encoding="utf-8")
    _record_timing(out, "sweep", time.perf_counter() - t)
    print(f"sweep over {len(curve)} thresholds -> {out / 'sweep.csv'}")
    return 0


IMPORTANCE_FAMILIES = {
    "XGBoost": ModelSpec("gradient_boost", {"n_estimators": 60, "learning_rate": 0.2, "depth": 3}),
    "AdaBoost": ModelSpec("adaboost", {"n_estimators": 50, "depth": 2}),
    "Random Forest": ModelSpec("random_forest", {"n_estimators": 50, "max_depth": 6}),
    "Decision Tree": ModelSpec("tree", {"max_depth": 6}),
}


def cmd_importance(cfg: PipelineConfig, args) -> int:
    out = _out(cfg, args)
    data = _dataset(out)
    scores, perm = {}, {}
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, spec in IMPORTANCE_FAMILIES.items():
            spec = ModelSpec(spec.family, spec.params, cfg.model.seed)
            model = fit_multilabel(data, spec)
            scores[name] = feature_importance(model)[0]
            perm[name] = permutation_importance(model, data, seed=cfg.model.seed, n_repeats=3)
    rows = importance_table(scores, data.feature_names)
    cols = ["feature"] + list(scores) + ["Average", "Rank"]
    write_csv(out / "importance.csv", {c: [r[c] for r in rows] for c in cols}, "{:.6f}")
    prow = importance_table(perm, data.feature_names)
    write_csv(out / "permutation_importance.csv", {c: [r[c] for r in prow] for c in cols}, "{:.6f}")
    write_json(out / "importance.json", {"mdi": rows, "permutation": prow})
    _record_timing(out, "importance", time.perf_counter() - t)
    print("rank  feature      average")
    for r in rows:
        print(f"{r['Rank']:>4}  {r['feature']:<12} {r['Average']:.4f}")
    return 0


def cmd_fixtures(cfg: PipelineConfig, args) -> int:
    target = Path(args.out or "fixtures")
    write_fixtures(target, seed=args.seed or 0)
    print(f"fixtures -> {target}")
    return 0


def cmd_run(cfg: PipelineConfig, args) -> int:
    cfg.check_files("pd_series", "macro")
    for stage, fn in (("detect", cmd_detect), ("label", cmd_label), ("build-dataset", cmd_build_dataset),
                      ("train", cmd_train), ("evaluate", cmd_evaluate)):
        try:
            fn(cfg, args)
        except INPUT_ERRORS as exc:
            raise StageError(stage, exc) from exc
    return 0


COMMANDS = {
    "detect": (cmd_detect, "date-stamp explosive episodes in the PD series"),
    "label": (cmd_label, "derive is-bubble / not-bubble / up / down labels"),
    "build-dataset": (cmd_build_dataset, "join interpolated macro series, sentiment and labels"),
    "train": (cmd_train, "fit the multilabel model"),
    "evaluate": (cmd_evaluate, "k-fold CV and held-out metrics"),
    "sweep": (cmd_sweep, "vary the labeling threshold C"),
    "importance": (cmd_importance, "feature-importance table across tree ensembles"),
    "run": (cmd_run, "detect, label, build-dataset, train and evaluate in sequence"),
    "fixtures": (cmd_fixtures, "write the synthetic fixture inputs and a config"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration (YAML or JSON)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for Monte-Carlo and CV")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory (overrides config 'output')")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bubblecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name in ("detect", "run"):
            p.add_argument("--r0", help="minimum window fraction or 'auto'")
            p.add_argument("--k", type=int, help="ADF lag order")
            p.add_argument("--quantile", type=float)
            p.add_argument("--replications", type=int)
            p.add_argument("--min-duration", dest="min_duration", type=int)
        if name in ("label", "run", "build-dataset"):
            p.add_argument("--rule", choices=["threshold", "rolling_mean"])
            p.add_argument("--tau", type=int)
            p.add_argument("--C", type=float)
            p.add_argument("--w", type=int)
        if name in ("train", "evaluate", "sweep", "run"):
            p.add_argument("--family", help="tree, bagging, random_forest, adaboost, gradient_boost, knn, ...")
        if name in ("evaluate", "run"):
            p.add_argument("--k-folds", dest="k_folds", type=int)
            p.add_argument("--grid", action="store_true", help="grid-search the model block's grid first")
            p.add_argument("--model", help="score this saved model on the held-out split")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    stage = args.command
    try:
        cfg = _apply_overrides(load_config(args.config), args) if stage != "fixtures" else None
        return COMMANDS[stage][0](cfg, args)
    except StageError as exc:
        print(f"bubblecast {exc.stage}: error: {exc.exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"bubblecast {stage}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"bubblecast {stage}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
