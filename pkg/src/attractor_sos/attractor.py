"""Outer approximations of a global attractor and the queries built on them.

``Y_k = {x in X : w(x) >= 1}`` and ``X_k = {x in X : min(v1(x), v2(x)) >= 0}``
both contain the attractor; ``X_k`` is contained in ``Y_k``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import (MomentDomain, SemialgebraicSet, ensure_ball_constraint, lebesgue_moments,
                     sample_uniform)
from .poly import Polynomial
from .sdp import SdpSolution, SolverSettings, solve
from .sos import (DEFAULT_TRACE_BOUND, CompiledSdp, build_tightening, compile_to_sdp,
                  constraint_residuals, recover_solution)
from .system import DynamicalSystem

CERTIFIED = "Certified"
CERTIFIED_WITH_MARGIN = "CertifiedWithMargin"
REJECTED = "Rejected"

EQUALITY_TOL = 1e-6
EIGENVALUE_TOL = 1e-7
SAMPLE_TOL = 1e-6
# largest sampled violation still reported as CertifiedWithMargin
MAX_MARGIN = 1e-4

_CHUNK = 100_000


class CertificationError(ValueError):
    """The solution handed to :func:`certify` does not belong to the program."""


class IntersectionError(ValueError):
    """Approximations of different systems or state sets cannot be intersected."""


@dataclass(frozen=True)
class CertificationRecord:
    equality_residual: float
    min_gram_eigenvalue: float
    sampled_constraint_min: float
    verdict: str
    margin: Optional[float] = None
    sample_count: int = 0
    seed: Optional[int] = None

    @property
    def accepted(self) -> bool:
        return self.verdict in (CERTIFIED, CERTIFIED_WITH_MARGIN)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "margin": self.margin,
            "equality_residual": self.equality_residual,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "sampled_constraint_min": self.sampled_constraint_min,
            "sample_count": self.sample_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CertificationRecord":
        return cls(float(d["equality_residual"]), float(d["min_gram_eigenvalue"]),
                   float(d["sampled_constraint_min"]), str(d["verdict"]),
                   None if d.get("margin") is None else float(d["margin"]),
                   int(d.get("sample_count", 0)), d.get("seed"))


def classify(equality_residual: float, min_gram_eigenvalue: float,
             sampled_constraint_min: float) -> Tuple[str, Optional[float]]:
    """Verdict and margin for the three certification measures."""
    if (equality_residual <= EQUALITY_TOL and min_gram_eigenvalue >= -EIGENVALUE_TOL
            and sampled_constraint_min >= -SAMPLE_TOL):
        return CERTIFIED, None
    eps = max(SAMPLE_TOL, -sampled_constraint_min)
    if math.isfinite(eps) and eps <= MAX_MARGIN:
        return CERTIFIED_WITH_MARGIN, eps
    return REJECTED, None


@dataclass(frozen=True)
class RegionQueryResult:
    volume_estimate: float
    standard_error: float
    sample_count: int
    seed: int

    def to_dict(self) -> dict:
        return {"volume_estimate": self.volume_estimate, "standard_error": self.standard_error,
                "sample_count": self.sample_count, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class AttractorApproximation:
    """Solved triple ``(v1, v2, w)`` of a degree-``k`` tightening, in original coordinates."""

    fingerprint: str
    X: SemialgebraicSet
    k: int
    discount: float
    v1: Polynomial
    v2: Polynomial
    w: Polynomial
    d_k: float
    certification: Optional[CertificationRecord] = None
    variables: Tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.X.dim

    @classmethod
    def from_solution(cls, compiled: CompiledSdp, sol: SdpSolution,
                      allow_inexact: bool = False) -> "AttractorApproximation":
        prog = compiled.program
        if prog.system is None or prog.X is None:
            raise ValueError("program was not built by build_tightening")
        rec = recover_solution(compiled, sol, allow_inexact=allow_inexact)
        return cls(prog.system.fingerprint(), prog.X, prog.degree_bound, prog.system.discount,
                   rec.v1, rec.v2, rec.w, rec.objective, None, prog.system.variables)

    def with_certification(self, record: CertificationRecord) -> "AttractorApproximation":
        return AttractorApproximation(self.fingerprint, self.X, self.k, self.discount,
                                      self.v1, self.v2, self.w, self.d_k, record, self.variables)

    def _points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, expected {self.dim}")
        return pts

    def w_values(self, points) -> np.ndarray:
        return self.w.eval_many(self._points(points))

    def v_min_values(self, points) -> np.ndarray:
        pts = self._points(points)
        return np.minimum(self.v1.eval_many(pts), self.v2.eval_many(pts))

    def member_yk_many(self, points) -> np.ndarray:
        pts = self._points(points)
        return self.X.contains_many(pts) & (self.w.eval_many(pts) >= 1.0)

    def member_xk_many(self, points) -> np.ndarray:
        pts = self._points(points)
        return self.X.contains_many(pts) & (self.v_min_values(pts) >= 0.0)

    def moment_objective(self) -> float:
        """``integral of w over X``, recomputed from exact moments."""
        mom = lebesgue_moments(self.X.moment_domain, max(self.w.degree, 0))
        return float(self.w.coefficients(mom.basis) @ mom.values)


def _vector(a: AttractorApproximation, x) -> np.ndarray:
    v = np.asarray(x, dtype=float).ravel()
    if v.shape[0] != a.dim:
        raise ValueError(f"point has length {v.shape[0]}, expected {a.dim}")
    return v


def member_Yk(a: AttractorApproximation, x) -> bool:
    """``x in X`` and ``w(x) >= 1``, evaluated without tolerance."""
    v = _vector(a, x)
    return bool(a.X.contains(v) and a.w(v) >= 1.0)


def member_Xk(a: AttractorApproximation, x) -> bool:
    """``x in X`` and ``min(v1(x), v2(x)) >= 0``, evaluated without tolerance."""
    v = _vector(a, x)
    return bool(a.X.contains(v) and min(a.v1(v), a.v2(v)) >= 0.0)


# -- certification -------------------------------------------------------------------

def sample_set(X: SemialgebraicSet, count: int, seed: int) -> np.ndarray:
    """Uniform points of the moment domain that also satisfy every inequality of ``X``."""
    pts = sample_uniform(X.moment_domain, count, seed)
    return pts[X.contains_many(pts)]


def certify(a: AttractorApproximation, compiled: CompiledSdp, sol: SdpSolution,
            X: Optional[SemialgebraicSet] = None, sample_count: int = 10_000,
            seed: int = 0) -> CertificationRecord:
    """Residual, eigenvalue and sampling checks of a solved tightening.

    The four constraint identities are re-expanded from the recovered Gram
    matrices, every Gram block is eigen-checked, and the four constraint
    polynomials are evaluated at ``sample_count`` uniform points of ``X``.
    """
    prog = compiled.program
    if len(sol.block_values) != compiled.problem.n_blocks or \
            np.shape(sol.free_values) != (compiled.problem.n_free,):
        raise CertificationError("solution shape does not match the compiled program")
    if prog.system is None or prog.system.fingerprint() != a.fingerprint or prog.degree_bound != a.k:
        raise CertificationError("approximation and program describe different tightenings")
    X = a.X if X is None else X
    if X.dim != a.dim:
        raise CertificationError("state set dimension does not match")
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")

    rec = recover_solution(compiled, sol, allow_inexact=True)
    eq = max(constraint_residuals(prog, rec.coefficients, rec.grams).values(), default=0.0)
    eigs = [np.linalg.eigvalsh(G)[0] for G in rec.grams.values()]
    min_eig = float(min(eigs)) if eigs else math.inf

    pts = sample_set(X, sample_count, seed)
    sampled = math.inf
    if len(pts):
        local = prog.scaling.to_scaled(pts) if prog.scaling is not None else pts
        for con in prog.constraints:
            sampled = min(sampled, float(con.polynomial(rec.coefficients).eval_many(local).min()))
    verdict, margin = classify(eq, min_eig, sampled)
    return CertificationRecord(float(eq), min_eig, sampled, verdict, margin, int(sample_count), seed)


# -- solving pipeline ----------------------------------------------------------------

@dataclass
class TighteningRun:
    approximation: AttractorApproximation
    compiled: CompiledSdp
    solution: SdpSolution

    @property
    def status(self) -> str:
        return self.solution.status.value


def approximate(sys: DynamicalSystem, X: SemialgebraicSet, k: int,
                settings: Optional[SolverSettings] = None, certify_samples: int = 10_000,
                seed: int = 0, scale: bool = True,
                gram_trace_bound: Optional[float] = DEFAULT_TRACE_BOUND) -> TighteningRun:
    """Build, compile, solve, recover and certify one tightening."""
    compiled = compile_to_sdp(build_tightening(sys, X, k, scale=scale,
                                               gram_trace_bound=gram_trace_bound))
    sol = solve(compiled.problem, settings or SolverSettings())
    approx = AttractorApproximation.from_solution(compiled, sol, allow_inexact=True)
    record = certify(approx, compiled, sol, X, certify_samples, seed)
    return TighteningRun(approx.with_certification(record), compiled, sol)


# -- set operations and queries ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Intersection:
    """Conjunction of ``X_k`` memberships of several approximations."""

    members: Tuple[AttractorApproximation, ...]

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def __call__(self, x) -> bool:
        return all(member_Xk(a, x) for a in self.members)

    def contains_many(self, points) -> np.ndarray:
        out = None
        for a in self.members:
            hit = a.member_xk_many(points)
            out = hit if out is None else out & hit
        return out


def intersect(approximations: Sequence[AttractorApproximation]) -> Intersection:
    """Membership in every ``X_k``; discounts may differ, systems and ``X`` may not."""
    items = tuple(approximations)
    if not items:
        raise IntersectionError("nothing to intersect")
    first = items[0]
    # the redundant enclosing-ball constraint does not change the point set
    X0 = ensure_ball_constraint(first.X)
    for a in items[1:]:
        if a.fingerprint != first.fingerprint:
            raise IntersectionError("approximations belong to different systems")
        if ensure_ball_constraint(a.X) != X0:
            raise IntersectionError("approximations use different state sets")
    return Intersection(items)


def _predicate(membership) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(membership, "contains_many"):
        return membership.contains_many
    return membership


def estimate_volume(membership, domain: MomentDomain, sample_count: int,
                    seed: int) -> RegionQueryResult:
    """Monte Carlo volume of ``{x in domain : membership(x)}``.

    ``membership`` maps an ``(N, n)`` array to ``N`` booleans (or has a
    ``contains_many`` method doing so). The points come from one generator
    seeded with ``seed`` and are evaluated in fixed chunks, so the result does
    not depend on how the evaluation is split.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    pred = _predicate(membership)
    pts = sample_uniform(domain, sample_count, seed)
    hits = 0
    for start in range(0, sample_count, _CHUNK):
        chunk = pts[start:start + _CHUNK]
        flags = np.asarray(pred(chunk), dtype=bool)
        if flags.shape != (len(chunk),):
            raise ValueError("membership must return one boolean per point")
        hits += int(flags.sum())
    vol = domain.volume()
    frac = hits / sample_count
    return RegionQueryResult(vol * frac, vol * math.sqrt(frac * (1 - frac) / sample_count),
                             sample_count, seed)


@dataclass
class GridResult:
    """Row-major grid: the first listed axis varies slowest."""

    points: np.ndarray
    w: np.ndarray
    v_min: np.ndarray
    in_X: np.ndarray
    member_yk: np.ndarray
    member_xk: np.ndarray
    shape: Tuple[int, ...] = ()

    def rows(self):
        for i in range(len(self.points)):
            yield (self.points[i], self.w[i], self.v_min[i], self.in_X[i],
                   self.member_yk[i], self.member_xk[i])

    def to_csv(self, path, variables: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh, variables)

    def write_csv(self, fh, variables: Sequence[str]) -> None:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(list(variables) + ["w", "min_v", "in_X", "member_Yk", "member_Xk"])
        for pt, w, vm, inx, yk, xk in self.rows():
            out.writerow([repr(float(c)) for c in pt] + [repr(float(w)), repr(float(vm)),
                                                         int(inx), int(yk), int(xk)])


def grid_evaluate(a: AttractorApproximation,
                  axes: Sequence[Tuple[int, float, float, int]],
                  slice_values: Optional[Mapping[int, float]] = None) -> GridResult:
    """Evaluate ``w``, ``min(v1, v2)`` and both memberships on a tensor grid.

    ``axes`` lists ``(dimension, min, max, count)`` for one to three
    dimensions; every other dimension takes its value from ``slice_values``.
    """
    slice_values = dict(slice_values or {})
    if not 1 <= len(axes) <= 3:
        raise ValueError("a grid has one to three axes")
    dims = [int(ax[0]) for ax in axes]
    if len(set(dims)) != len(dims):
        raise ValueError("grid axes must be distinct dimensions")
    for d in dims + list(slice_values):
        if not 0 <= int(d) < a.dim:
            raise ValueError(f"dimension {d} out of range for a {a.dim}-dimensional system")
    if set(dims) & set(slice_values):
        raise ValueError("a dimension cannot be both a grid axis and a slice")
    missing = set(range(a.dim)) - set(dims) - set(int(d) for d in slice_values)
    if missing:
        raise ValueError(f"dimensions {sorted(missing)} need a slice value")
    lines = []
    for d, lo, hi, count in axes:
        if int(count) < 2:
            raise ValueError("every grid axis needs at least 2 points")
        lines.append(np.linspace(float(lo), float(hi), int(count)))
    mesh = np.meshgrid(*lines, indexing="ij")
    n_pts = mesh[0].size
    pts = np.empty((n_pts, a.dim))
    for d, m in zip(dims, mesh):
        pts[:, d] = m.ravel()
    for d, v in slice_values.items():
        pts[:, int(d)] = float(v)
    w = a.w_values(pts)
    vmin = a.v_min_values(pts)
    in_x = a.X.contains_many(pts)
    return GridResult(pts, w, vmin, in_x, in_x & (w >= 1.0), in_x & (vmin >= 0.0),
                      tuple(len(line) for line in lines))
