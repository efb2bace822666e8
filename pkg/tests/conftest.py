import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

from issma.comms import Constellation, complex_normal  # noqa: E402
from issma.pathmetric import DetectionProblem  # noqa: E402
from issma.priors import PriorStats  # noqa: E402


def random_problem(rng, N, Q=2, L=None, sigma2=0.5, prior_scale=2.0):
    """A triangularized problem with random channel, symbols, noise and priors."""
    L = N if L is None else L
    c = Constellation.qam(Q)
    H = complex_normal(rng, (L, N))
    s = rng.integers(0, c.size, N)
    y_o = H @ c.points[s] + complex_normal(rng, L, sigma2)
    llr = prior_scale * rng.standard_normal((N, Q))
    prob = DetectionProblem.from_channel(H, y_o, sigma2, PriorStats.from_llrs(llr, c), c)
    return prob, H, y_o, llr, s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


def record_criterion(line):
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
