import os

import numpy as np
import pytest

from indagg import backend

BACKENDS = backend.available()

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record(criterion, passed, detail):
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return backend.load(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20141027)


@pytest.fixture(scope="session")
def quick_dirs(tmp_path_factory):
    """Quick-profile pipeline runs for both families, each done twice."""
    from indagg.experiment import ExperimentConfig, run_experiment

    out = {}
    for fam in "AB":
        for run in (1, 2):
            d = tmp_path_factory.mktemp(f"quick{fam}{run}")
            report = run_experiment(ExperimentConfig.quick(fam, out_dir=str(d)))
            out[fam, run] = (str(d), report)
    return out


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def artifact_names(directory):
    return sorted(n for n in os.listdir(directory) if n != "timings.json")
