import sys

import pytest
from hypothesis import settings

from gwlimits.gw import GaussianMeasure
from gwlimits.rng import make_rng
from gwlimits.symmat import random_spd

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(12345)


def random_gaussian(d, rng, cond=10.0):
    return GaussianMeasure(rng.standard_normal(d), random_spd(d, rng, cond))


@pytest.fixture
def pair(rng):
    return random_gaussian(3, rng), random_gaussian(3, rng)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k][0])
