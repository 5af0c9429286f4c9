import numpy as np
import pytest

from singulib.construct import assemble_inner, solve_correction
from singulib.model import build_model
from singulib.nonlinearity import TransformF, make
from singulib.shoot import extend


class Pipeline:
    def __init__(self, spec, B):
        self.nl = make(spec)
        self.t = TransformF(self.nl)
        self.m = build_model(B)
        self.c = solve_correction(self.t, self.m)
        self.inner = assemble_inner(self.t, self.m, self.c)
        self.p = extend(self.nl, self.inner, r0=0.05)


@pytest.fixture(scope="session")
def model2():
    return Pipeline({"family": "model", "B": 2}, 2)


@pytest.fixture(scope="session")
def power21():
    return Pipeline({"family": "power_exp", "q": 2, "r": 1}, 2)


@pytest.fixture(scope="session")
def iter1():
    return Pipeline({"family": "iter_exp", "q": 1}, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
