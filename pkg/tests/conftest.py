import shutil
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bundled_dir() -> Path:
    return Path(str(resources.files("bubblecast") / "data"))


@pytest.fixture
def fixture_copy(tmp_path, bundled_dir) -> Path:
    """Writable copy of the bundled fixtures (config paths are relative)."""
    dst = tmp_path / "fx"
    shutil.copytree(bundled_dir, dst)
    return dst


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory, bundled_dir) -> Path:
    """Bundled fixtures after detect, label and build-dataset (shared, treat read-only)."""
    from bubblecast.cli import main

    dst = tmp_path_factory.mktemp("pipeline") / "fx"
    shutil.copytree(bundled_dir, dst)
    cfg = str(dst / "config.yaml")
    for cmd in ("detect", "label", "build-dataset"):
        assert main([cmd, "--config", cfg]) == 0
    return dst


@pytest.fixture(scope="session")
def bundled_dataset(pipeline_dir):
    from bubblecast.ml import read_dataset

    return read_dataset(pipeline_dir / "out" / "dataset.csv")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
