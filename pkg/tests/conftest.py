import time

import pytest

from attractor_sos.attractor import approximate
from attractor_sos.domain import Annulus, Box, SemialgebraicSet
from attractor_sos.poly import PolynomialMap
from attractor_sos.system import DynamicalSystem

HENON_FIELD = ["2/3*(1 + y) - 2.1*x^2", "0.45*x"]
LORENZ_FIELD = ["10*(y - x)", "x*(28 - z) - y", "x*y - 8/3*z"]
VDP_FIELD = ["2*y", "-0.8*x - 10*(x^2 - 0.21)*y"]


def henon(alpha=0.05):
    f = PolynomialMap.parse(HENON_FIELD, ["x", "y"])
    return DynamicalSystem("discrete", f, alpha, ("x", "y"))


def lorenz(beta=1.0):
    f = PolynomialMap.parse(LORENZ_FIELD, ["x", "y", "z"])
    return DynamicalSystem("continuous", f, beta, ("x", "y", "z"))


def vanderpol(beta=0.05):
    f = PolynomialMap.parse(VDP_FIELD, ["x", "y"])
    return DynamicalSystem("continuous", f, beta, ("x", "y"))


def unit_box_set():
    return SemialgebraicSet.from_domain(Box((-1.0, -1.0), (1.0, 1.0)))


def lorenz_set():
    return SemialgebraicSet.from_domain(Box((-25.0, -35.0, -5.0), (25.0, 35.0, 55.0)))


def annulus_set():
    return SemialgebraicSet.from_domain(Annulus((0.0, 0.0), 0.4, 2.0))


@pytest.fixture(scope="session")
def henon_runs():
    """Hénon tightenings for k = 4, 6, 8, 10, solved once per session."""
    return {k: approximate(henon(), unit_box_set(), k, seed=7) for k in (4, 6, 8, 10)}


@pytest.fixture(scope="session")
def lorenz_run():
    start = time.perf_counter()
    run = approximate(lorenz(), lorenz_set(), 8, seed=7)
    run.elapsed = time.perf_counter() - start
    return run


@pytest.fixture(scope="session")
def vanderpol_run():
    return approximate(vanderpol(), annulus_set(), 12, seed=7)
