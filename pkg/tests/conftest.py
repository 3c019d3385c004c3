import numpy as np
import pytest

from peakshape.align import AlignConfig
from peakshape.core import FunctionSample, FunctionSet, Grid
from peakshape.ppd import PpdConfig
from peakshape.shapefit import FitConfig
from peakshape.simulate import generate, make_scenario, scenario_signal

SHORT_LAMBDAS = (0.0, 0.02, 0.05, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid():
    return Grid(100)


@pytest.fixture
def small_grid():
    return Grid(40)


@pytest.fixture
def bimodal(grid):
    return scenario_signal(1, grid)


@pytest.fixture
def fast_align():
    return AlignConfig(lam=0.0, max_iter=5, tol=1e-3)


@pytest.fixture
def short_ppd():
    return PpdConfig(lambda_grid=SHORT_LAMBDAS)


@pytest.fixture
def fast_fit():
    return FitConfig(K=6, restarts=1, max_evals=2000)


@pytest.fixture
def small_scenario(small_grid):
    scn = make_scenario(1, small_grid, n=8, seed=3)
    data, g_true = generate(scn)
    return scn, data, g_true


def copies(g: FunctionSample, n: int) -> FunctionSet:
    return FunctionSet(g.grid, tuple(g for _ in range(n)))


def write_table(path, t, columns):
    lines = ["t," + ",".join(columns)]
    for i, ti in enumerate(t):
        lines.append(",".join(repr(float(v)) for v in [ti, *(columns[c][i] for c in columns)]))
    path.write_text("\n".join(lines) + "\n")
    return path
