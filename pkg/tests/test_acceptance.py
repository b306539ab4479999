"""End-to-end acceptance checks on the bundled examples.

Each check prints one ``PASS`` or ``FAIL`` line (visible with ``pytest -s``)
before asserting, so a run doubles as a short report.
"""

import json

import numpy as np
import pytest

from attractor_sos.attractor import CERTIFIED, CERTIFIED_WITH_MARGIN, estimate_volume
from attractor_sos.cli import EXIT_OK, bundled_config, load_config, main
from attractor_sos.domain import Annulus, Ball, Box, lebesgue_moments, sample_uniform
from attractor_sos.poly import monomial_basis
from attractor_sos.sdp import SdpStatus, solve
from attractor_sos.system import sample_attractor

from conftest import annulus_set, henon, lorenz, lorenz_set, unit_box_set, vanderpol
from test_sdp import eigen_problem, min_t, min_trace, sos_problem

SLACK = 1e-6
VOLUME_SAMPLES = 100_000


def report(label, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else ""))
    assert ok, f"{label}: {detail}"


def bundled_runs(henon_runs, lorenz_run, vanderpol_run):
    """(name, approximation) for every degree configured in the bundled files."""
    out = [(f"henon k={k}", henon_runs[k].approximation)
           for k in load_config(bundled_config("henon")).degrees]
    return out + [("lorenz k=8", lorenz_run.approximation),
                  ("vanderpol k=12", vanderpol_run.approximation)]


def test_objective_decreases_with_degree(henon_runs):
    d = [henon_runs[k].approximation.d_k for k in (4, 6, 8)]
    ok = all(a >= b - SLACK * max(1.0, abs(b)) for a, b in zip(d, d[1:]))
    report("1 Henon d_4 >= d_6 >= d_8", ok, ", ".join(f"{x:.6g}" for x in d))


def test_sampled_attractors_are_contained(henon_runs, lorenz_run):
    pts = sample_attractor(henon(), unit_box_set(), (0.1, 0.1), 1000, 100_000).points
    bad = 0
    for k in (4, 6, 8, 10):
        a = henon_runs[k].approximation
        bad += int(np.sum((a.w_values(pts) < 1 - SLACK) | (a.v_min_values(pts) < -SLACK)))
    report("2 Henon orbit (1e5 points) inside Y_k and X_k", bad == 0, f"{bad} failures")

    pts = sample_attractor(lorenz(), lorenz_set(), (1.0, 1.0, 20.0), 50_000, 10_000,
                           1e-3, 10).points
    a = lorenz_run.approximation
    bad = int(np.sum((a.w_values(pts) < 1 - SLACK) | (a.v_min_values(pts) < -SLACK)))
    report("2 Lorenz trajectory (1e4 points) inside Y_k and X_k", bad == 0, f"{bad} failures")


def test_xk_implies_yk(henon_runs, lorenz_run, vanderpol_run):
    for name, a in bundled_runs(henon_runs, lorenz_run, vanderpol_run):
        pts = sample_uniform(a.X.moment_domain, VOLUME_SAMPLES, 11)
        bad = int(np.sum(a.member_xk_many(pts) & ~a.member_yk_many(pts)))
        report(f"3 {name}: X_k implies Y_k", bad == 0, f"{bad} counterexamples")


def test_volume_chain(henon_runs, lorenz_run, vanderpol_run):
    for name, a in bundled_runs(henon_runs, lorenz_run, vanderpol_run):
        dom = a.X.moment_domain
        y = estimate_volume(a.member_yk_many, dom, VOLUME_SAMPLES, 7)
        x = estimate_volume(a.member_xk_many, dom, VOLUME_SAMPLES, 7)
        ok = (a.d_k >= y.volume_estimate - 3 * y.standard_error
              and y.volume_estimate >= x.volume_estimate - 3 * max(x.standard_error,
                                                                  y.standard_error))
        report(f"4 {name}: d_k >= vol(Y_k) >= vol(X_k)", ok,
               f"{a.d_k:.6g} / {y.volume_estimate:.6g} / {x.volume_estimate:.6g}")


def test_vanderpol_limit_cycle(vanderpol_run):
    a = vanderpol_run.approximation
    xs = np.linspace(-2, 2, 400)
    grid = np.array(np.meshgrid(xs, xs, indexing="ij")).reshape(2, -1).T
    r = np.linalg.norm(grid, axis=1)
    hole = r < 0.4
    ok = (not a.member_xk_many(grid)[hole].any() and not a.member_yk_many(grid)[hole].any()
          and a.member_xk_many(grid)[~hole].any())
    report("5 Van der Pol grid shows the hole", ok)

    cfg = load_config(bundled_config("vanderpol")).simulate
    pts = sample_attractor(vanderpol(), annulus_set(), cfg.initial, cfg.burn_in, cfg.count,
                           cfg.dt, cfg.stride).points
    inside = np.mean((a.w_values(pts) >= 1 - SLACK) & (a.v_min_values(pts) >= -SLACK))
    report("5 Van der Pol limit cycle contained", inside == 1.0, f"{100 * inside:.2f}%")

    limit = 3.84 * np.pi
    for region, member in (("Y_k", a.member_yk_many), ("X_k", a.member_xk_many)):
        v = estimate_volume(member, a.X.moment_domain, VOLUME_SAMPLES, 7)
        ok = v.volume_estimate + 3 * v.standard_error < limit
        report(f"5 Van der Pol vol({region}) below the annulus area", ok,
               f"{v.volume_estimate:.4f} +- {v.standard_error:.4f} vs {limit:.4f}")


def test_solver_suite():
    C, eig = eigen_problem()
    cases = [("min t", min_t(), 0.0), ("min trace", min_trace(), 1.0),
             ("lowest eigenvalue", eig, float(np.linalg.eigvalsh(C)[0]))]
    for name, p, want in cases:
        sol = solve(p)
        err = abs(sol.objective_value - want)
        report(f"6 solver: {name}", sol.status == SdpStatus.OPTIMAL and err <= 1e-7,
               f"error {err:.2e}")
    report("6 SOS: (x+1)^2 is SOS", solve(sos_problem("x^2 + 2*x + 1").problem).status
           == SdpStatus.OPTIMAL)
    report("6 SOS: -1 - x^2 is not SOS", solve(sos_problem("-1 - x^2").problem).status
           == SdpStatus.PRIMAL_INFEASIBLE)


@pytest.mark.parametrize("name,domain", [
    ("box", Box((-1.0, 0.0), (2.0, 0.5))),
    ("ball", Ball((0.0, 0.0), 1.5)),
    ("annulus", Annulus((0.3, -0.2), 0.5, 1.2)),
])
def test_moments_against_monte_carlo(name, domain):
    n_samples = 1_000_000
    exact = lebesgue_moments(domain, 6)
    pts = sample_uniform(domain, n_samples, 3)
    vol = domain.volume()
    worst = 0.0
    for i, e in enumerate(monomial_basis(2, 6)):
        vals = vol * np.prod(pts ** np.array(e), axis=1)
        se = vals.std(ddof=1) / np.sqrt(n_samples)
        # rounding floor: the constant monomial has a (numerically) zero standard error
        dev = max(0.0, abs(vals.mean() - exact.values[i]) - 1e-12 * vol)
        worst = max(worst, dev / se if se > 0 else (0.0 if dev == 0 else np.inf))
    report(f"7 {name} moments up to degree 6 within 3 SE", worst <= 3.0,
           f"worst {worst:.2f} SE")
    if name == "ball":
        odd = [exact[e] for e in monomial_basis(2, 6) if any(a % 2 for a in e)]
        report("7 centred ball odd moments are exactly zero", all(v == 0.0 for v in odd))


def test_lorenz_time(lorenz_run):
    v = lorenz_run.approximation.certification.verdict
    ok = lorenz_run.elapsed <= 120 and v in (CERTIFIED, CERTIFIED_WITH_MARGIN)
    report("8 Lorenz k=8 solved within 120 s", ok, f"{lorenz_run.elapsed:.1f} s, {v}")


def test_solve_is_deterministic(tmp_path):
    docs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.json"
        assert main(["solve", "--config", "henon", "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        doc.pop("timestamp")
        docs.append(json.dumps(doc, sort_keys=True))
    report("9 repeated solves give identical documents", docs[0] == docs[1])
