import sys

import numpy as np
import pytest

from mlabel.grid import Grid
from mlabel.potentials import Envelope, Euclidean, RegularizerSpec, exact_embedding, potts
from mlabel.solvers import SaddleProblem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_potts_problem(rng, dims=(4, 4), l=3, envelope=False, lam=1.0, scale=1.0):
    grid = Grid(dims)
    s = scale * rng.standard_normal((grid.n, l))
    if envelope:
        reg = RegularizerSpec(Envelope(potts(l)), lam)
    else:
        reg = RegularizerSpec(Euclidean(exact_embedding("potts", l)), lam)
    return SaddleProblem(grid, s, reg)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
