import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import yaml

from bubblecast import cli
from bubblecast.bubble_detect import min_window
from bubblecast.labeling import LABELS, read_labels
from bubblecast.ml import FEATURES, read_dataset
from bubblecast.sentiment import read_scored_records
from bubblecast.simulate import explosive_series
from bubblecast.timeseries import load_csv, write_csv
from oracles import biweekly_count

FAST = ["--replications", "99"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def small_fixture(tmp_path):
    """24-month span: monthly PD with a planted run-up plus monthly macro series."""
    months = np.arange(np.datetime64("2020-01"), np.datetime64("2022-02")).astype("datetime64[D]")
    dates = [str(d) for d in months]
    r = np.random.default_rng(0)
    pd = explosive_series(len(months), r, start=14, length=6, rho=1.08, y0=30)
    write_csv(tmp_path / "pd.csv", {"date": dates, "value": pd})
    macro = {}
    for i, name in enumerate(FEATURES[:-1]):
        f = f"m{i}.csv"
        write_csv(tmp_path / f, {"date": dates, "value": 5 + np.cumsum(r.normal(size=len(months)))})
        macro[name] = f
    cfg = {
        "inputs": {"pd_series": "pd.csv", "macro": macro},
        "grid": {"start": "2020-01-01", "end": "2021-12-31"},
        "detection": {"replications": 99, "seed": 0},
        "labeling": {"tau": 2, "C": 0.5},
        "model": {"family": "tree", "params": {"max_depth": 3}},
        "evaluation": {"k_folds": 3},
        "output": "out",
    }
    (tmp_path / "config.yaml").write_text(yaml.safe_dump(cfg))
    return tmp_path


class TestDetect:
    def test_bundled_outputs(self, pipeline_dir):
        out = pipeline_dir / "out"
        rows = _rows(out / "bsadf.csv")
        assert rows[0] == ["date", "bsadf", "cv", "flag"]
        flags = load_csv(out / "flags.csv", "date", "flag")
        assert flags.values.sum() >= 2
        assert len(load_csv(out / "bsadf.csv", "date", "bsadf")) == len(flags)
        ET.parse(out / "bsadf.svg")
        assert (out / "bsadf.svg").stat().st_size > 500
        summary = json.loads((out / "detect.json").read_text())
        assert summary["rejects_null"] and len(summary["episodes"]) >= 2

    def test_r0_one(self, fixture_copy, capsys):
        assert run("detect", "--config", fixture_copy / "config.yaml", "--r0", "1.0") == 0
        assert "GSADF" in capsys.readouterr().out
        assert not (fixture_copy / "out" / "bsadf.csv").exists()

    def test_missing_input(self, fixture_copy, capsys):
        (fixture_copy / "pd_ratio.csv").unlink()
        assert run("detect", "--config", fixture_copy / "config.yaml") == 2
        err = capsys.readouterr().err
        assert "detect" in err and "pd_ratio.csv" in err

    def test_missing_config(self, tmp_path, capsys):
        assert run("detect", "--config", tmp_path / "nope.yaml") == 2
        assert "nope.yaml" in capsys.readouterr().err

    def test_bad_override(self, fixture_copy, capsys):
        assert run("detect", "--config", fixture_copy / "config.yaml", "--quantile", "1.5") == 2

    def test_malformed_input(self, fixture_copy, capsys):
        p = fixture_copy / "pd_ratio.csv"
        p.write_text(p.read_text().replace("\n2001-01-01,", "\n2001-01-01,oops", 1))
        assert run("detect", "--config", fixture_copy / "config.yaml") == 2
        assert "row" in capsys.readouterr().err

    def test_internal_error_exit_1(self, fixture_copy, monkeypatch, capsys):
        def boom(*a, **k):
            raise RuntimeError("kaboom")
        monkeypatch.setattr(cli, "detect", boom)
        assert run("detect", "--config", fixture_copy / "config.yaml", *FAST) == 1
        assert "internal error" in capsys.readouterr().err


class TestBuildDataset:
    def test_row_count_and_schema(self, small_fixture, capsys):
        cfg = small_fixture / "config.yaml"
        for cmd in ("detect", "label", "build-dataset"):
            assert run(cmd, "--config", cfg) == 0
        out = small_fixture / "out"
        knots = biweekly_count("2020-01-01", "2021-12-31")
        assert knots == 48
        warmup = min_window(knots) - 1
        data = read_dataset(out / "dataset.csv")
        assert len(data) == knots - warmup
        assert _rows(out / "dataset.csv")[0] == ["date", *FEATURES, *LABELS]
        # no sentiment file configured
        assert np.all(data.X[:, -1] == 0)
        assert "Sentiment" in capsys.readouterr().err

    def test_rows_outside_macro_span_dropped(self, small_fixture):
        p = small_fixture / "m0.csv"
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-3]) + "\n")  # GDP now ends 2021-10-01
        cfg = small_fixture / "config.yaml"
        for cmd in ("detect", "build-dataset"):
            assert run(cmd, "--config", cfg) == 0
        info = json.loads((small_fixture / "out" / "dataset.json").read_text())
        data = read_dataset(small_fixture / "out" / "dataset.csv")
        assert str(data.dates[-1]) == "2021-10-01"
        assert info["dropped_missing_features"] == 5 and info["rows"] == len(data)

    def test_no_overlap(self, small_fixture, capsys):
        write_csv(small_fixture / "m0.csv", {"date": ["1990-01-01", "1990-02-01", "1990-03-01", "1990-04-01"],
                                             "value": [1.0, 2, 3, 4]})
        cfg = small_fixture / "config.yaml"
        assert run("detect", "--config", cfg) == 0
        assert run("build-dataset", "--config", cfg) == 2
        assert "overlap" in capsys.readouterr().err

    def test_missing_macro_file(self, small_fixture, capsys):
        (small_fixture / "m3.csv").unlink()
        assert run("build-dataset", "--config", small_fixture / "config.yaml") == 2
        assert "m3.csv" in capsys.readouterr().err


class TestDownstream:
    def test_artifacts_and_roundtrip(self, pipeline_dir, tmp_path):
        cfg = pipeline_dir / "config.yaml"
        out = tmp_path / "o"
        import shutil
        shutil.copytree(pipeline_dir / "out", out)
        for cmd in ("train", "evaluate", "sweep", "importance"):
            assert run(cmd, "--config", cfg, "--out", out) == 0
        for name in ("model.json", "metrics.json", "metrics.txt", "confusion.csv", "cv.json", "sweep.csv",
                     "sweep.json", "micro_macro.csv", "micro_macro.svg", "importance.csv",
                     "permutation_importance.csv"):
            assert (out / name).is_file(), name
        ET.parse(out / "micro_macro.svg")
        rows = _rows(out / "importance.csv")
        assert rows[0] == ["feature", "XGBoost", "AdaBoost", "Random Forest", "Decision Tree", "Average", "Rank"]
        for j in range(1, 5):
            assert sum(float(r[j]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-5)
        sweep = _rows(out / "sweep.csv")
        assert sweep[0][:3] == ["label", "metric", "RM"] and len(sweep) == 17
        conf = _rows(out / "confusion.csv")
        assert conf[0] == ["label", "tn", "fp", "fn", "tp"]
        read_labels(out / "labels.csv")
        read_dataset(out / "dataset.csv")
        load_csv(out / "pd_biweekly.csv")
        read_scored_records(pipeline_dir / "news_scored.csv")

    def test_rerun_byte_identical(self, pipeline_dir, tmp_path):
        cfg = pipeline_dir / "config.yaml"
        outs = []
        for i, jobs in enumerate((1, 2)):
            out = tmp_path / f"o{i}"
            import shutil
            shutil.copytree(pipeline_dir / "out", out)
            assert run("evaluate", "--config", cfg, "--out", out, "--jobs", jobs) == 0
            outs.append(out)
        for name in ("metrics.json", "cv.json", "confusion.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_schema_drift(self, pipeline_dir, tmp_path, capsys):
        import shutil
        out = tmp_path / "o"
        shutil.copytree(pipeline_dir / "out", out)
        cfg = pipeline_dir / "config.yaml"
        assert run("train", "--config", cfg, "--out", out, "--family", "tree") == 0
        doc = json.loads((out / "model.json").read_text())
        doc["feature_names"][0] = "Real GDP"
        (out / "model.json").write_text(json.dumps(doc))
        assert run("evaluate", "--config", cfg, "--out", out, "--model", out / "model.json") == 2
        assert "schema drift" in capsys.readouterr().err

    def test_missing_dataset(self, fixture_copy, capsys):
        assert run("train", "--config", fixture_copy / "config.yaml") == 2
        assert "build-dataset" in capsys.readouterr().err


def test_fixtures_command_reproduces_bundle(tmp_path, bundled_dir):
    assert run("fixtures", "--out", tmp_path / "fx") == 0
    for f in bundled_dir.iterdir():
        if f.suffix in (".csv", ".json", ".yaml"):
            assert (tmp_path / "fx" / f.name).read_bytes() == f.read_bytes(), f.name


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for cmd in ("detect", "build-dataset", "label", "train", "evaluate", "sweep", "importance"):
        assert cmd in text
