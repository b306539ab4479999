import math

import numpy as np
import pytest

from attractor_sos.domain import (Annulus, Ball, Box, SamplingError, SemialgebraicSet,
                                  ensure_ball_constraint, inequality_mismatch, lebesgue_moments,
                                  sample_uniform)
from attractor_sos.poly import parse_polynomial

XY = ["x", "y"]


def P(text):
    return parse_polynomial(text, XY)


def test_domain_validation():
    with pytest.raises(ValueError):
        Box((1.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        Ball((0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        Annulus((0.0, 0.0), 2.0, 1.0)


def test_ball_constraint_appended_for_box():
    s = SemialgebraicSet(2, (P("1 - x^2"), P("1 - y^2")), Box((-1, -1), (1, 1)))
    out = ensure_ball_constraint(s)
    assert len(out.inequalities) == 3
    assert out.inequalities[-1] == P("2 - x^2 - y^2")


def test_ball_constraint_present_for_ball():
    s = SemialgebraicSet(2, (P("4 - x^2 - y^2"),), Ball((0, 0), 2))
    assert ensure_ball_constraint(s) is s


def test_ball_constraint_present_for_annulus():
    s = SemialgebraicSet(2, (P("x^2 + y^2 - 0.16"), P("4 - x^2 - y^2")),
                         Annulus((0, 0), 0.4, 2))
    assert ensure_ball_constraint(s) is s


def test_from_domain_inequalities_describe_the_domain():
    for dom in (Box((-1, -2), (3, 1)), Ball((0.5, 0), 1.5), Annulus((0, 0), 0.4, 2)):
        s = SemialgebraicSet.from_domain(dom)
        assert inequality_mismatch(s, 10_000, seed=1) == 0.0


def test_mismatch_detects_carved_subset():
    s = SemialgebraicSet.from_domain(Box((-1, -1), (1, 1)), [P("x")])
    assert inequality_mismatch(s, 4000, seed=0) > 0.2


def test_moment_examples():
    assert lebesgue_moments(Box((-1, -1), (1, 1)), 0)[(0, 0)] == 4.0
    disk = lebesgue_moments(Ball((0, 0), 1), 2)
    assert disk[(0, 0)] == pytest.approx(math.pi, rel=1e-14)
    assert disk[(2, 0)] == pytest.approx(math.pi / 4, rel=1e-14)


def test_moment_vector_layout():
    mv = lebesgue_moments(Box((0, 0, 0), (1, 2, 3)), 4)
    assert len(mv) == math.comb(7, 3)
    assert mv.values[0] == 6.0
    assert mv[(1, 0, 0)] == pytest.approx(3.0)


def test_ball_odd_moments_exactly_zero():
    mv = lebesgue_moments(Ball((0, 0, 0), 1.3), 6)
    for e, v in zip(mv.basis, mv.values):
        if any(a % 2 for a in e):
            assert v == 0.0


def test_annulus_is_outer_minus_inner():
    ann = lebesgue_moments(Annulus((0.2, -0.1), 0.4, 2), 6).values
    outer = lebesgue_moments(Ball((0.2, -0.1), 2), 6).values
    inner = lebesgue_moments(Ball((0.2, -0.1), 0.4), 6).values
    assert np.array_equal(ann, outer - inner)


def test_off_center_ball_matches_shifted_polynomial():
    # int over B(c, R) of x^2 = int over B(0, R) of (y + c)^2 = m2 + c^2 m0
    c, R = 0.7, 1.1
    mv = lebesgue_moments(Ball((c, 0.0), R), 2)
    m0, m2 = math.pi * R ** 2, math.pi * R ** 4 / 4
    assert mv[(2, 0)] == pytest.approx(m2 + c * c * m0, rel=1e-13)
    assert mv[(1, 0)] == pytest.approx(c * m0, rel=1e-13)


def test_moments_reject_negative_degree():
    with pytest.raises(ValueError):
        lebesgue_moments(Box((0,), (1,)), -1)


@pytest.mark.parametrize("dom", [Box((-1, 0), (2, 1)), Ball((0.3, 0.0), 1.0),
                                 Annulus((0, 0), 0.4, 2)])
def test_moments_match_monte_carlo(dom):
    n_samples = 200_000
    pts = sample_uniform(dom, n_samples, seed=11)
    mv = lebesgue_moments(dom, 4)
    vol = dom.volume()
    for e, exact in zip(mv.basis, mv.values):
        vals = vol * np.prod(pts ** np.array(e), axis=1)
        se = vals.std(ddof=1) / math.sqrt(n_samples)
        assert abs(vals.mean() - exact) <= 4 * se + 1e-12, e


def test_contains_examples():
    ann = SemialgebraicSet.from_domain(Annulus((0, 0), 0.4, 2))
    assert ann.contains((1.0, 0.0))
    assert not ann.contains((0.0, 0.0))
    box = SemialgebraicSet.from_domain(Box((-1, -1), (1, 1)))
    assert box.contains((1.0, 1.0))
    with pytest.raises(ValueError):
        box.contains((0.0,))


def test_contains_agrees_with_analytic_membership():
    for dom in (Box((-1, -1), (1, 1)), Ball((0, 0), 1), Annulus((0, 0), 0.4, 2)):
        s = SemialgebraicSet.from_domain(dom)
        pts = np.random.default_rng(3).uniform(-2.5, 2.5, size=(10_000, 2))
        assert np.array_equal(s.contains_many(pts), dom.contains(pts))


def test_sample_box_reproducible():
    box = Box((-1, -1), (1, 1))
    a = sample_uniform(box, 3, seed=5)
    assert a.shape == (3, 2) and np.array_equal(a, sample_uniform(box, 3, seed=5))
    assert box.contains(a).all()


def test_sample_ball_mean_is_centered():
    pts = sample_uniform(Ball((0, 0), 1), 100_000, seed=2)
    assert abs(pts[:, 0].mean()) < 0.01


def test_sample_annulus_respects_radii():
    pts = sample_uniform(Annulus((0, 0), 0.4, 2), 10_000, seed=4)
    r2 = (pts ** 2).sum(axis=1)
    assert len(pts) == 10_000
    assert np.all((r2 >= 0.16) & (r2 <= 4))


def test_sampling_refuses_thin_domains():
    with pytest.raises(SamplingError):
        sample_uniform(Annulus((0, 0), 0.999, 1.0), 10, seed=0)
