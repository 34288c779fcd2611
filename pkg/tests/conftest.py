import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from chj.grid import FluidState, GridSpec  # noqa: E402

ACCEPTANCE_LINES = {}


def random_state(grid: GridSpec, rng, amp=0.1) -> FluidState:
    """Small-amplitude perturbation of the rest state."""
    f = amp * rng.standard_normal((4,) + grid.shape)
    f[0] += 1.0
    return FluidState(grid, *f)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
