from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

TINY_INI = """\
[data]
source = synthetic
n_classes = 6
n_subjects = 4
windows_per_class = 12
window_length = 64
holdout_fraction = 0.25

[tasks]
n_tasks = 3

[train]
mode = no_distill
epochs_per_task = 1
classifier_epochs = 2
batch_size = 8
replay_batch_size = 4

[model]
filters = 4, 6
kernels = 5, 3
hidden_dim = 8
projection_dim = 4

[run]
seed = 0
replay_fraction = 0.1
baseline_seeds = 2
"""


@pytest.fixture
def tiny_ini(tmp_path) -> Path:
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI)
    return p


@pytest.fixture
def wisdm_fixture() -> Path:
    return DATA / "wisdm_fixture.txt"


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
