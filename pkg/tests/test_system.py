import math

import numpy as np
import pytest

from attractor_sos.domain import Box, SemialgebraicSet
from attractor_sos.poly import PolynomialMap
from attractor_sos.system import (DivergenceError, DynamicalSystem, LeftDomainError, integrate,
                                  iterate_map, sample_attractor, step_rk4)

from conftest import HENON_FIELD, LORENZ_FIELD, annulus_set, henon, unit_box_set, vanderpol


def decay():
    return PolynomialMap.parse(["-x"], ["x"])


def rotation():
    return PolynomialMap.parse(["y", "-x"], ["x", "y"])


def test_discount_ranges_enforced():
    f = PolynomialMap.parse(HENON_FIELD, ["x", "y"])
    with pytest.raises(ValueError, match=r"\(0, 1\)"):
        DynamicalSystem("discrete", f, 1.5)
    with pytest.raises(ValueError, match="> 0"):
        DynamicalSystem("continuous", f, 0.0)
    with pytest.raises(ValueError):
        DynamicalSystem("sometimes", f, 0.5)


def test_fingerprint_ignores_discount():
    assert henon(0.05).fingerprint() == henon(0.3).fingerprint()
    assert henon().fingerprint() != vanderpol().fingerprint()


def test_rk4_linear_decay():
    x = integrate(decay(), [1.0], 1e-3, 1000)
    assert x[0] == pytest.approx(math.exp(-1), abs=1e-6)


def test_rk4_single_step_agrees_with_integrate():
    f = rotation()
    assert np.array_equal(step_rk4(f, [0.3, -0.2], 0.01), integrate(f, [0.3, -0.2], 0.01, 1))


def test_rk4_harmonic_period():
    steps = 6283
    dt = 2 * math.pi / steps
    x = integrate(rotation(), [1.0, 0.0], dt, steps)
    assert np.allclose(x, [1.0, 0.0], atol=1e-6)


def test_rk4_lorenz_stays_bounded():
    f = PolynomialMap.parse(LORENZ_FIELD, ["x", "y", "z"])
    worst = [0.0]

    def track(i, x):
        worst[0] = max(worst[0], float(np.abs(x).max()))

    integrate(f, [1.0, 1.0, 1.0], 1e-3, 100_000, record=track)
    assert worst[0] < 60


def test_rk4_convergence_order():
    errs = []
    for dt in (0.1, 0.05, 0.025):
        x = integrate(decay(), [1.0], dt, int(round(2 / dt)))
        errs.append(abs(x[0] - math.exp(-2)))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(3.7 <= r <= 4.3 for r in rates), rates


def test_time_reversal_returns_to_start():
    f = PolynomialMap.parse(["y - 0.3*x^2", "-x + 0.2*x*y"], ["x", "y"])
    back = PolynomialMap(tuple(-c for c in f))
    x0 = np.array([0.4, -0.3])
    x1 = integrate(f, x0, 1e-3, 1000)
    assert np.allclose(integrate(back, x1, 1e-3, 1000), x0, atol=1e-6)


def test_rk4_rejects_bad_step_and_reports_divergence():
    with pytest.raises(ValueError):
        step_rk4(decay(), [1.0], 0.0)
    blowup = PolynomialMap.parse(["x^3"], ["x"])
    with pytest.raises(DivergenceError):
        integrate(blowup, [10.0], 0.1, 1000)


def test_henon_single_step():
    f = PolynomialMap.parse(HENON_FIELD, ["x", "y"])
    traj = iterate_map(f, [0.0, 0.0], 1)
    assert np.allclose(traj[1], [2 / 3, 0.0], atol=1e-15)


def test_identity_map_constant_sequence():
    traj = iterate_map(PolynomialMap.identity(2), [0.3, 0.7], 5)
    assert len(traj) == 6 and all(np.array_equal(x, traj[0]) for x in traj)


def test_henon_orbit_stays_in_unit_box():
    f = PolynomialMap.parse(HENON_FIELD, ["x", "y"])
    traj = np.array(iterate_map(f, [0.1, 0.1], 10_000))[100:]
    assert np.all(np.abs(traj) <= 1)


def test_iterate_map_truncates_outside_bounds():
    f = PolynomialMap.parse(["2*x", "y"], ["x", "y"])
    traj = iterate_map(f, [0.3, 0.0], 10, bounds=unit_box_set())
    assert len(traj) == 3 and traj[-1][0] == pytest.approx(1.2)


def test_sample_attractor_henon():
    s = sample_attractor(henon(), unit_box_set(), (0.1, 0.1), 1000, 100_000)
    assert s.points.shape == (100_000, 2)
    assert unit_box_set().contains_many(s.points).all()
    assert s.burn_in_dropped == 1000 and s.step == 1.0


def test_sample_attractor_vanderpol_limit_cycle():
    s = sample_attractor(vanderpol(), annulus_set(), (1.5, 0.0), 50_000, 10_000, 1e-3, 10)
    r = np.linalg.norm(s.points, axis=1)
    # a closed curve: bounded away from the hole, winding around the origin
    assert r.min() > 0.4
    angles = np.unwrap(np.arctan2(s.points[:, 1], s.points[:, 0]))
    assert abs(angles[-1] - angles[0]) > 2 * math.pi
    assert s.step == pytest.approx(1e-2)


def test_sample_attractor_stable_fixed_point():
    sys_ = DynamicalSystem("continuous", PolynomialMap.parse(["-x", "-y"], ["x", "y"]), 1.0)
    s = sample_attractor(sys_, unit_box_set(), (0.5, 0.5), 20_000, 100, 1e-3)
    assert np.abs(s.points).max() < 1e-6


def test_sample_attractor_is_deterministic():
    a = sample_attractor(vanderpol(), annulus_set(), (1.0, 0.0), 1000, 500, 1e-3, 3)
    b = sample_attractor(vanderpol(), annulus_set(), (1.0, 0.0), 1000, 500, 1e-3, 3)
    assert np.array_equal(a.points, b.points)


def test_sample_attractor_errors():
    X = unit_box_set()
    with pytest.raises(ValueError):
        sample_attractor(henon(), X, (2.0, 0.0), 10, 10)
    with pytest.raises(ValueError):
        sample_attractor(henon(), X, (0.1, 0.1), 0, 10)
    tight = SemialgebraicSet.from_domain(Box((-0.5, -0.5), (0.5, 0.5)))
    with pytest.raises(LeftDomainError):
        sample_attractor(henon(), tight, (0.1, 0.1), 1, 100)


def test_trajectory_csv(tmp_path):
    s = sample_attractor(henon(), unit_box_set(), (0.1, 0.1), 10, 4)
    path = tmp_path / "traj.csv"
    s.to_csv(path, ["x", "y"])
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y" and len(lines) == 5
    assert np.allclose(np.loadtxt(path, delimiter=",", skiprows=1), s.points, rtol=0, atol=0)
