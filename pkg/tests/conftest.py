import math

import numpy as np
import pytest

from ahcmc import ambient, s2grid

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    prev = ACCEPTANCE_RESULTS.get(number)
    if prev is not None:
        ok = ok and prev[0]
        detail = prev[1] + "; " + detail
    ACCEPTANCE_RESULTS[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def p2(z):
    return 0.5 * (3 * z**2 - 1)


def p3(z):
    return 0.5 * (5 * z**3 - 3 * z)


@pytest.fixture(scope="session")
def grid24():
    return s2grid.build_grid(24)


@pytest.fixture(scope="session")
def grid16():
    return s2grid.build_grid(16)


@pytest.fixture(scope="session")
def tau_a():
    return ambient.MassAspect.from_function(lambda x, y, z: 2 + 0.5 * p2(z), 4)


@pytest.fixture(scope="session")
def tau_c():
    return ambient.MassAspect.from_function(lambda x, y, z: 2 + 0.5 * p2(z) + 0.25 * p3(z), 4)


@pytest.fixture(scope="session")
def spec_a(tau_a):
    return ambient.AmbientMetricSpec(tau_a)


@pytest.fixture(scope="session")
def spec_c(tau_c):
    return ambient.AmbientMetricSpec(tau_c)


@pytest.fixture(scope="session")
def spec_two():
    return ambient.AmbientMetricSpec(ambient.MassAspect.constant(2.0))


@pytest.fixture(scope="session")
def q_term():
    prof = s2grid.from_triples([{"l": 0, "m": 0, "value": 1.0}, {"l": 2, "m": 1, "value": 0.5}])
    return ambient.QTerm(0.7, prof, ("rr", "tt", "rt"))


def coth(x):
    return 1.0 / math.tanh(x)


def rng(seed=0):
    return np.random.default_rng(seed)
