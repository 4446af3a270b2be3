from pathlib import Path

import numpy as np
import pytest

from psizeta.powers import build_family
from psizeta.spec_io import load_spec
from psizeta.symbols import CosphereGrid, symbol_from_function
from psizeta.verify import perturbed_abs_symbol

SPECS = Path(__file__).resolve().parents[1] / "specs"

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def specs_dir():
    return SPECS


@pytest.fixture(scope="session")
def abs_cos_symbol():
    return perturbed_abs_symbol()


@pytest.fixture(scope="session")
def abs_cos_family(abs_cos_symbol):
    return build_family(abs_cos_symbol)


@pytest.fixture(scope="session")
def abs_family():
    return build_family(load_spec(SPECS / "absD.json").to_symbol())


def scalar_multiplier(grid, value=1.0, K=4):
    """``value * |xi|`` on ``grid``."""
    eye = np.eye(grid.fiber_dim)
    return symbol_from_function(1, [lambda x, u: value * np.ones(x.shape[:-1])[..., None, None] * eye], grid, truncation=K)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid1():
    return CosphereGrid(1, 8)
