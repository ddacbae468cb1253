"""Shared fixtures: one small rendered dataset and one short training run.

Both are session-scoped; synthesis and training are the slow parts of the
suite, so every module reuses the same artifacts. Also echoes the
acceptance-gate verdicts into the terminal summary.
"""

import sys

import pytest

from hakws.dataset import DatasetConfig
from hakws.experiments import build_synthetic_dataset
from hakws.harness import TrainConfig, train


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """(root, config, records): 12 classes, 1 utt per class and split."""
    root = tmp_path_factory.mktemp("tinyds")
    config = DatasetConfig(seed=5, train_per_class=1, val_per_class=1,
                           test_per_class=1, train_snrs=(5.0,),
                           val_snrs=(5.0,), test_snrs=(0.0, 9.0),
                           workers=2)
    records = build_synthetic_dataset(config, root)
    return root, config, records


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory, tiny_dataset):
    """(train config, RunResult) for a 2-epoch single-seed run."""
    root, _, records = tiny_dataset
    out_dir = tmp_path_factory.mktemp("run")
    config = TrainConfig(epochs=2, warmup_epochs=1, batch_size=100,
                         seeds=(0,), mics=("iec",), tau=1.0,
                         data_dir=str(root), out_dir=str(out_dir))
    result = train(config, records)[0]
    return config, result


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") \
        or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance gates")
    for index, label, passed in sorted(results):
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] gate {index:2d}: {label}")
