import math

import numpy as np
import pytest

from attractor_sos.attractor import CERTIFIED, AttractorApproximation, certify
from attractor_sos.domain import Box, SemialgebraicSet
from attractor_sos.poly import Polynomial, PolynomialMap, monomial_basis, parse_polynomial
from attractor_sos.sdp import SdpSolution, SdpStatus, residuals, solve
from attractor_sos.sos import (TRACE_SLACK, CompileError, RecoveryError, TighteningError,
                               build_tightening, compile_to_sdp, constraint_residuals,
                               gram_polynomial, recover_solution, sos_feasibility)
from attractor_sos.system import DynamicalSystem

from conftest import henon, lorenz, lorenz_set, unit_box_set


def decay_system(beta=1.0):
    return DynamicalSystem("continuous", PolynomialMap.parse(["-x"], ["x"]), beta, ("x",))


def interval():
    return SemialgebraicSet(1, (parse_polynomial("1 - x^2", ["x"]),), Box((-1.0,), (1.0,)))


def toy_point(prog, beta):
    """v1 = 1, v2 = 0, w = 2 with the matching constant Gram entries."""
    n_basis = len(prog.decision_bases["w"])
    coeffs = {"v1": np.eye(n_basis)[0], "v2": np.zeros(n_basis), "w": 2 * np.eye(n_basis)[0]}
    grams = {}
    for con in prog.constraints:
        for slot in con.slots:
            grams[(con.name, slot.slot)] = np.zeros((slot.matrix_order, slot.matrix_order))
    grams[("ii", "t0")][0, 0] = 2.0
    grams[("iii", "r0")][0, 0] = beta
    return coeffs, grams


# -- program structure -----------------------------------------------------------------

def test_lorenz_structure():
    prog = build_tightening(lorenz(), lorenz_set(), 8)
    assert [c.name for c in prog.constraints] == ["i", "ii", "iii", "iv"]
    deg = {c.name: (c.raw_degree, c.target_degree) for c in prog.constraints}
    assert deg["i"] == deg["ii"] == (8, 8)
    assert deg["iii"] == deg["iv"] == (9, 10)
    assert prog.n_decision == 3 * math.comb(11, 3) == 495


def test_henon_target_degree():
    prog = build_tightening(henon(), unit_box_set(), 8)
    assert prog.constraint("iii").target_degree == prog.constraint("iv").target_degree == 16


def test_henon_k4_block_orders():
    c = compile_to_sdp(build_tightening(henon(), unit_box_set(), 4))
    order = dict(zip(c.blocks, c.problem.block_sizes))
    assert order[("i", "q0")] == order[("ii", "t0")] == math.comb(4, 2) == 6
    assert order[("iii", "r0")] == order[("iv", "s0")] == math.comb(6, 2) == 15


def test_multiplier_degrees_fit_budget():
    prog = build_tightening(lorenz(), lorenz_set(), 8)
    for con in prog.constraints:
        for slot in con.slots:
            half = max(sum(e) for e in slot.basis)
            assert 2 * half + slot.multiplier.degree <= con.target_degree
            # maximal: one more degree would overflow the budget
            assert 2 * (half + 1) + slot.multiplier.degree > con.target_degree


def test_objective_uses_moments_of_w_only():
    prog = build_tightening(henon(), unit_box_set(), 4, scale=False)
    assert set(prog.objective) == {"w"}
    assert prog.objective["w"][0] == 4.0


def test_ball_constraint_added_to_program():
    prog = build_tightening(henon(), unit_box_set(), 4, scale=False)
    assert len(prog.X_scaled.inequalities) == len(unit_box_set().inequalities) + 1


@pytest.mark.parametrize("k", [3, 0])
def test_rejects_bad_degree(k):
    with pytest.raises(TighteningError):
        build_tightening(henon(), unit_box_set(), k)


def test_rejects_missing_inequalities_and_bad_bound():
    empty = SemialgebraicSet(2, (), Box((-1, -1), (1, 1)))
    with pytest.raises(TighteningError):
        build_tightening(henon(), empty, 4)
    with pytest.raises(TighteningError):
        build_tightening(henon(), unit_box_set(), 4, gram_trace_bound=0.0)


# -- compilation -----------------------------------------------------------------------

def test_sos_square_compiles_to_one_block():
    c = compile_to_sdp(sos_feasibility(parse_polynomial("x^2 + 2*x + 1", ["x"])))
    assert c.problem.block_sizes == (2,) and c.problem.m == 3 and c.problem.n_free == 0
    blocks, free = c.embed({}, {("p", "sigma0"): np.array([[1.0, 1.0], [1.0, 1.0]])})
    eq, eig = residuals(c.problem, blocks, free)
    assert eq <= 1e-15 and eig >= -1e-15


def test_rows_are_normalised_and_trace_row_appended():
    c = compile_to_sdp(build_tightening(henon(), unit_box_set(), 4))
    p = c.problem
    assert c.blocks[-1] == TRACE_SLACK and p.block_sizes[-1] == 1
    sq = np.zeros(p.m)
    np.add.at(sq, p.a_row, p.a_val ** 2 * np.where(p.a_i == p.a_j, 1.0, 2.0))
    np.add.at(sq, p.f_row, p.f_val ** 2)
    assert np.allclose(np.sqrt(sq[:-1]), 1.0)
    assert p.b[-1] == 1e3


def test_unbounded_variant_has_no_slack_block():
    c = compile_to_sdp(build_tightening(henon(), unit_box_set(), 4, gram_trace_bound=None))
    assert TRACE_SLACK not in c.blocks


def test_toy_feasible_point_round_trips():
    beta = 0.7
    prog = build_tightening(decay_system(beta), interval(), 2, scale=False)
    c = compile_to_sdp(prog)
    coeffs, grams = toy_point(prog, beta)
    assert max(constraint_residuals(prog, coeffs, grams).values()) == 0.0
    blocks, free = c.embed(coeffs, grams)
    eq, eig = residuals(c.problem, blocks, free)
    assert eq <= 1e-15 and eig >= 0
    assert all(np.array_equal(c.decision_values(free)[k], v) for k, v in coeffs.items())
    back = c.gram_values(blocks)
    assert all(np.array_equal(back[key], grams[key]) for key in grams)


def test_toy_point_certifies_exactly():
    beta = 0.7
    prog = build_tightening(decay_system(beta), interval(), 2, scale=False)
    c = compile_to_sdp(prog)
    coeffs, grams = toy_point(prog, beta)
    blocks, free = c.embed(coeffs, grams)
    sol = SdpSolution(blocks, free, c.problem.objective(blocks, free), SdpStatus.OPTIMAL,
                      0.0, 0.0, 0.0)
    a = AttractorApproximation.from_solution(c, sol)
    assert a.d_k == pytest.approx(4.0)  # integral of w = 2 over [-1, 1]
    rec = certify(a, c, sol, sample_count=500, seed=1)
    assert rec.verdict == CERTIFIED and rec.equality_residual == 0.0


def test_recovery_refuses_unsolved_status():
    c = compile_to_sdp(sos_feasibility(parse_polynomial("-1 - x^2", ["x"])))
    sol = solve(c.problem)
    with pytest.raises(RecoveryError):
        recover_solution(c, sol)


def test_gram_identity_reproduces_polynomial():
    c = compile_to_sdp(sos_feasibility(parse_polynomial("x^2 + 2*x + 1", ["x"])))
    sol = solve(c.problem)
    rec = recover_solution(c, sol)
    slot = c.program.slots()[0]
    p = gram_polynomial(slot, rec.grams[("p", "sigma0")])
    target = parse_polynomial("x^2 + 2*x + 1", ["x"])
    assert all(abs(p.coefficient(e) - target.coefficient(e)) <= 1e-9
               for e in monomial_basis(1, 2))


def test_solved_henon_satisfies_program(henon_runs):
    run = henon_runs[4]
    rec = recover_solution(run.compiled, run.solution)
    res = constraint_residuals(run.compiled.program, rec.coefficients, rec.grams)
    assert max(res.values()) <= 1e-9
    # the SDP objective matches the moment functional of w
    assert rec.objective == pytest.approx(run.approximation.moment_objective(), rel=1e-9)


def test_recovered_polynomials_are_unscaled(lorenz_run):
    c = lorenz_run.compiled
    rec = recover_solution(c, lorenz_run.solution)
    pts = np.random.default_rng(0).uniform([-25, -35, -5], [25, 35, 55], size=(50, 3))
    scaled = c.program.scaling.to_scaled(pts)
    for name in ("v1", "v2", "w"):
        a = rec.decision[name].eval_many(pts)
        b = rec.decision_scaled[name].eval_many(scaled)
        assert np.allclose(a, b, rtol=1e-8, atol=1e-8 * np.abs(b).max())


def test_feasible_point_embeds_at_next_degree(henon_runs):
    run = henon_runs[4]
    rec = recover_solution(run.compiled, run.solution)
    prog6 = build_tightening(henon(), unit_box_set(), 6)
    n6 = len(prog6.decision_bases["w"])
    coeffs = {k: np.pad(v, (0, n6 - len(v))) for k, v in rec.coefficients.items()}
    grams = {}
    for con in prog6.constraints:
        for slot in con.slots:
            G = np.zeros((slot.matrix_order, slot.matrix_order))
            old = rec.grams.get((con.name, slot.slot))
            if old is not None:
                G[:len(old), :len(old)] = old
            grams[(con.name, slot.slot)] = G
    res4 = max(constraint_residuals(run.compiled.program, rec.coefficients, rec.grams).values())
    res6 = max(constraint_residuals(prog6, coeffs, grams).values())
    assert res6 <= max(res4, 1e-12) * 10
    # total Gram trace is unchanged, so the padded point also respects the trace cap
    assert sum(np.trace(G) for G in grams.values()) == \
        pytest.approx(sum(np.trace(G) for G in rec.grams.values()))


def test_scaling_covariance(henon_runs):
    run = henon_runs[4]
    prog = run.compiled.program
    rec = recover_solution(run.compiled, run.solution)
    base = constraint_residuals(prog, rec.coefficients, rec.grams)
    one = np.eye(len(prog.decision_bases["w"]))[0]
    m = 5.0
    coeffs = {"v1": m * rec.coefficients["v1"], "v2": m * rec.coefficients["v2"],
              "w": m * (rec.coefficients["w"] - one) + one}
    grams = {k: m * G for k, G in rec.grams.items()}
    scaled = constraint_residuals(prog, coeffs, grams)
    for name in ("i", "iii", "iv"):
        assert scaled[name] == pytest.approx(m * base[name], rel=1e-6, abs=1e-12)
    # scaling keeps every multiplier PSD, so feasibility is preserved
    assert all(np.linalg.eigvalsh(G)[0] >= m * np.linalg.eigvalsh(rec.grams[k])[0] - 1e-12
               for k, G in grams.items())


def test_compile_rejects_inconsistent_linear_map():
    prog = build_tightening(henon(), unit_box_set(), 4)
    con = prog.constraint("ii")
    con.linear["w"] = con.linear["w"][:-1]
    with pytest.raises(CompileError):
        compile_to_sdp(prog)


def test_polynomial_from_program_constraint():
    prog = build_tightening(decay_system(0.5), interval(), 2, scale=False)
    coeffs = {"v1": np.array([0.0, 0.0, 1.0]), "v2": np.zeros(3), "w": np.zeros(3)}
    lhs = prog.constraint("iii").polynomial(coeffs)
    # beta*x^2 - (2x)(-x) = 2.5 x^2
    assert lhs == Polynomial(1, {(2,): 2.5})
