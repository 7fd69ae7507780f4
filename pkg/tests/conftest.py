import numpy as np
import pytest

from nonlocal_decay.grid import GridSpec
from nonlocal_decay.kernels import make_standard_kernel, verify_hypothesis_J


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def box1d():
    grid = GridSpec(1, 16.0, 256)
    J = make_standard_kernel("box", 1.0, 0.5, grid)
    return J, verify_hypothesis_J(J, 1.0)


def gaussian(grid, width=1.0, center=0.0, amplitude=1.0):
    return grid.sample(lambda *x: amplitude * np.exp(-sum((xi - center) ** 2 for xi in x) / (2 * width**2)))


@pytest.fixture(scope="session")
def catalog_run(tmp_path_factory):
    """Every bundled config run once through the CLI: name -> (exit code, out dir)."""
    from nonlocal_decay.cli import catalog_names, main

    root = tmp_path_factory.mktemp("catalog")
    runs = {}
    for name in catalog_names():
        out = root / name
        runs[name] = (main(["run", "--config", name, "--out", str(out)]), out)
    return runs


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
