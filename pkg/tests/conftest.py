import math

import numpy as np
import pytest

from zrp import ExactModel, ModelSpec, RateFunction

LINEAR = RateFunction.power(1.0)
SQRT = RateFunction.power(0.5)
POW07 = RateFunction.power(0.7)
CONST = RateFunction.power(0.0)


def mf(rate, n, m, **kw):
    return ModelSpec(rate, n, m, **kw)


def point(n, m, site=0):
    x = np.zeros(n, dtype=np.int64)
    x[site] = m
    return x


def binomial_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)


@pytest.fixture(scope="session")
def exact_cache():
    cache = {}

    def get(rate, n, m, geometry=None):
        key = (rate, n, m, None if geometry is None else geometry.name)
        if key not in cache:
            cache[key] = ExactModel(ModelSpec(rate, n, m), geometry)
        return cache[key]

    return get


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
