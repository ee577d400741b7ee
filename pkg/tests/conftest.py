import numpy as np
import pytest

from distdetect.core import SignalModel
from distdetect.scenarios import TYPE1, TYPE2, ScenarioPreset, build_scenario


@pytest.fixture
def type1():
    return TYPE1


@pytest.fixture
def type2():
    return TYPE2


@pytest.fixture(scope="session")
def clustered():
    return build_scenario(ScenarioPreset("clustered"))


@pytest.fixture(scope="session")
def mixed():
    return build_scenario(ScenarioPreset("mixed"))


def random_belief(rng, m, zero_prob=0.0):
    b = rng.dirichlet(np.ones(m))
    if zero_prob:
        mask = rng.random(m) < zero_prob
        if mask.all():
            mask[rng.integers(m)] = False
        b = np.where(mask, 0.0, b)
        b /= b.sum()
    return b


def random_model(rng, m, signals=2):
    return SignalModel(tuple(f"s{k}" for k in range(signals)), rng.dirichlet(np.ones(signals), size=m))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
