import numpy as np
import pytest

from cure_sieve.likelihood import Constraints
from cure_sieve.optimizer import FitConfig, fit
from cure_sieve.simulate import Scenario, gen_dataset
from cure_sieve.splines import KnotSequence, build_knots

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def ks3():
    return KnotSequence(order=3, tau=4.0, interior=(0.7, 1.6, 2.9))


@pytest.fixture(scope="session")
def sim_fit():
    """One H1/light dataset of n=500 with its converged fit."""
    sc = Scenario("h1", "light", 500)
    data = gen_dataset(sc, np.random.default_rng(11))
    times = data.knot_times()
    ks = build_knots(times, times.size, 3, 4.0)
    cons = Constraints.default(data, ks)
    res = fit(data, ks, cons, FitConfig(seed=5))
    return data, res
