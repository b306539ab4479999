"""Sum-of-squares tightenings and their lowering to block SDPs.

A program is a set of decision polynomials, a linear objective on their
coefficients, and constraints of the form::

    L(decision) + constant  =  sigma_0 + sum_i sigma_i * p_i

with every ``sigma`` a sum of squares, written as ``basis' G basis`` for a PSD
Gram matrix ``G``. Compilation matches coefficients monomial by monomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import (Annulus, Ball, Box, MomentDomain, SemialgebraicSet, _as_ball_constraint,
                     _ball_covers, ensure_ball_constraint, lebesgue_moments)
from .poly import (Composer, Exponent, Polynomial, PolynomialMap, affine_substitute,
                   lie_derivative, monomial_basis)
from .sdp import SdpProblem, SdpSolution, SdpStatus
from .system import DynamicalSystem

DECISION_NAMES = ("v1", "v2", "w")
CONSTRAINT_NAMES = ("i", "ii", "iii", "iv")
SLOT_PREFIX = {"i": "q", "ii": "t", "iii": "r", "iv": "s"}


class TighteningError(ValueError):
    pass


class CompileError(RuntimeError):
    pass


@dataclass(frozen=True)
class GramStructure:
    constraint: str
    slot: str
    multiplier: Polynomial
    basis: Tuple[Exponent, ...]

    @property
    def matrix_order(self) -> int:
        return len(self.basis)


@dataclass
class SosConstraint:
    name: str
    raw_degree: int
    target_degree: int
    # decision name -> (len(target basis), len(decision basis)) coefficient map
    linear: Dict[str, np.ndarray]
    constant: Polynomial
    slots: List[GramStructure]

    @property
    def basis(self) -> List[Exponent]:
        return monomial_basis(self.constant.dim, self.target_degree)

    def polynomial(self, decision: Dict[str, np.ndarray]) -> Polynomial:
        """The left-hand side evaluated at given decision coefficients."""
        vec = np.zeros(len(self.basis))
        for name, mat in self.linear.items():
            vec = vec + mat @ decision[name]
        return Polynomial.from_coefficients(self.constant.dim, self.basis, vec) + self.constant


@dataclass(frozen=True)
class AffineScaling:
    """``x = center + scale * u`` (diagonal scale)."""

    center: Tuple[float, ...]
    scale: Tuple[float, ...]

    @property
    def jacobian(self) -> float:
        return float(np.prod(self.scale))

    def to_scaled(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.array(self.center)) / np.array(self.scale)

    def to_original(self, points) -> np.ndarray:
        return np.array(self.center) + np.array(self.scale) * np.asarray(points, dtype=float)

    def pull_back(self, p: Polynomial) -> Polynomial:
        """Express ``p(x)`` in scaled coordinates ``u``."""
        return affine_substitute(p, self.center, self.scale)

    def push_forward(self, p: Polynomial) -> Polynomial:
        """Express a polynomial in ``u`` back in original coordinates ``x``."""
        c, s = np.array(self.center), np.array(self.scale)
        return affine_substitute(p, -c / s, 1.0 / s)

    def field(self, sys: DynamicalSystem) -> PolynomialMap:
        comps = []
        for i, fi in enumerate(sys.field):
            g = self.pull_back(fi)
            if not sys.is_continuous:
                g = g - self.center[i]
            comps.append(g * (1.0 / self.scale[i]))
        return PolynomialMap(tuple(comps))

    def domain(self, d: MomentDomain) -> MomentDomain:
        c, s = np.array(self.center), np.array(self.scale)
        if isinstance(d, Box):
            return Box(tuple((np.array(d.lower) - c) / s), tuple((np.array(d.upper) - c) / s))
        if not np.allclose(s, s[0], rtol=0, atol=0):
            raise ValueError("balls and annuli need isotropic scaling")
        center = tuple((np.array(d.center) - c) / s)
        if isinstance(d, Ball):
            return Ball(center, d.radius / s[0])
        return Annulus(center, d.inner_radius / s[0], d.outer_radius / s[0])

    @classmethod
    def identity(cls, n: int) -> "AffineScaling":
        return cls((0.0,) * n, (1.0,) * n)

    @classmethod
    def unit_box(cls, d: MomentDomain) -> "AffineScaling":
        box = d.bounding_box()
        return cls(tuple(float(v) for v in box.center), tuple(float(v) for v in box.half_widths))


@dataclass
class SosProgram:
    dim: int
    degree_bound: int
    decision_bases: Dict[str, List[Exponent]]
    constraints: List[SosConstraint]
    objective: Dict[str, np.ndarray]
    objective_scale: float = 1.0
    system: Optional[DynamicalSystem] = None
    X: Optional[SemialgebraicSet] = None
    X_scaled: Optional[SemialgebraicSet] = None
    scaling: Optional[AffineScaling] = None
    field_scaled: Optional[PolynomialMap] = None
    # bound on the summed traces of all Gram matrices (None: unbounded)
    gram_trace_bound: Optional[float] = None

    @property
    def n_decision(self) -> int:
        return sum(len(b) for b in self.decision_bases.values())

    def slots(self) -> List[GramStructure]:
        return [s for c in self.constraints for s in c.slots]

    def constraint(self, name: str) -> SosConstraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)


DEFAULT_TRACE_BOUND = 1e3
TRACE_SLACK = ("trace", "slack")


def _even_up(d: int) -> int:
    return d + (d % 2)


def _slots_for(constraint: str, D: int, inequalities: Sequence[Polynomial], n: int,
               prefix: str) -> List[GramStructure]:
    one = Polynomial.constant(n, 1.0)
    slots = [GramStructure(constraint, f"{prefix}0", one, tuple(monomial_basis(n, D // 2)))]
    for i, p in enumerate(inequalities, start=1):
        half = (D - p.degree) // 2
        if half < 0:
            continue
        slots.append(GramStructure(constraint, f"{prefix}{i}", p, tuple(monomial_basis(n, half))))
    return slots


def _linear_map(images: Sequence[Polynomial], basis: Sequence[Exponent]) -> np.ndarray:
    index = {e: i for i, e in enumerate(basis)}
    out = np.zeros((len(basis), len(images)))
    for col, img in enumerate(images):
        for e, c in img.items():
            row = index.get(e)
            if row is None:
                raise CompileError(f"monomial {e} exceeds the constraint's degree budget")
            out[row, col] = c
    return out


def scaled_set(X: SemialgebraicSet, scaling: AffineScaling) -> SemialgebraicSet:
    """Map ``X`` to scaled coordinates, keeping an enclosing ball constraint."""
    dom = scaling.domain(X.moment_domain)
    kept = []
    for p in X.inequalities:
        q = scaling.pull_back(p)
        hit = _as_ball_constraint(p)
        if hit is not None and _ball_covers(hit[0], hit[1], X.moment_domain) \
                and _as_ball_constraint(q) is None:
            # covering ball that turned into an ellipsoid: redundant, replaced below
            continue
        kept.append(q)
    return ensure_ball_constraint(SemialgebraicSet(X.dim, tuple(kept), dom))


def build_tightening(sys: DynamicalSystem, X: SemialgebraicSet, k: int,
                     scale: bool = True,
                     gram_trace_bound: Optional[float] = DEFAULT_TRACE_BOUND) -> SosProgram:
    """Degree-``k`` SOS tightening of the dual LP for ``sys`` on ``X``.

    ``gram_trace_bound`` caps the summed trace of all Gram matrices. The
    unbounded tightening often has no minimiser (the optimal value is only
    approached as coefficients grow without bound), which stalls interior-point
    solvers; the cap restores a minimiser. Any feasible point of the capped
    program is feasible for the uncapped one, so every guarantee on ``Y_k`` and
    ``X_k`` is kept, and with a common cap ``d_k`` stays non-increasing in ``k``.
    """
    if gram_trace_bound is not None and not gram_trace_bound > 0:
        raise TighteningError("gram_trace_bound must be positive")
    if k % 2:
        raise TighteningError(f"degree bound k must be even, got {k}")
    deg_f = sys.field.degree
    if k < max(2, deg_f):
        raise TighteningError(f"degree bound k={k} is below max(2, deg f = {deg_f})")
    if not X.inequalities:
        raise TighteningError("X needs at least one inequality")
    if X.dim != sys.dim:
        raise TighteningError("system and state set dimensions differ")
    X = ensure_ball_constraint(X)
    n = sys.dim
    scaling = AffineScaling.unit_box(X.moment_domain) if scale else AffineScaling.identity(n)
    Xs = scaled_set(X, scaling) if scale else X
    f = scaling.field(sys) if scale else sys.field
    disc = sys.discount

    basis_k = monomial_basis(n, k)
    monos = [Polynomial.monomial(e) for e in basis_k]
    I = np.eye(len(basis_k))

    if sys.is_continuous:
        raw = k + deg_f - 1
        lie = [lie_derivative(m, f) for m in monos]
        img3 = [disc * m - d for m, d in zip(monos, lie)]
        img4 = [disc * m + d for m, d in zip(monos, lie)]
    else:
        raw = k * deg_f
        comp = Composer(f)
        circ = [comp(m) for m in monos]
        img3 = [m - disc * c for m, c in zip(monos, circ)]
        img4 = [c - disc * m for m, c in zip(monos, circ)]
    D3 = _even_up(max(raw, k))
    ineq = list(Xs.inequalities)

    def pad(D):
        # embed R[x]_k into the coefficient space of degree D
        return np.vstack([I, np.zeros((math.comb(n + D, n) - len(basis_k), len(basis_k)))])

    zero = Polynomial.zero(n)
    basis_D3 = monomial_basis(n, D3)
    constraints = [
        SosConstraint("i", k, k, {"v1": -I, "v2": -I, "w": I},
                      Polynomial.constant(n, -1.0), _slots_for("i", k, ineq, n, "q")),
        SosConstraint("ii", k, k, {"w": I}, zero, _slots_for("ii", k, ineq, n, "t")),
        SosConstraint("iii", raw, D3, {"v1": _linear_map(img3, basis_D3)}, zero,
                      _slots_for("iii", D3, ineq, n, "r")),
        SosConstraint("iv", raw, D3, {"v2": _linear_map(img4, basis_D3)}, zero,
                      _slots_for("iv", D3, ineq, n, "s")),
    ]
    moments = lebesgue_moments(Xs.moment_domain, k)
    return SosProgram(
        dim=n, degree_bound=k,
        decision_bases={name: basis_k for name in DECISION_NAMES},
        constraints=constraints,
        objective={"w": moments.values},
        objective_scale=scaling.jacobian,
        system=sys, X=X, X_scaled=Xs, scaling=scaling, field_scaled=f,
        gram_trace_bound=None if gram_trace_bound is None else float(gram_trace_bound))


def sos_feasibility(p: Polynomial, inequalities: Sequence[Polynomial] = ()) -> SosProgram:
    """Program with no decision variables asking whether ``p`` is in the quadratic module."""
    n = p.dim
    D = _even_up(max(p.degree, 0))
    slots = _slots_for("p", D, inequalities, n, "sigma")
    return SosProgram(dim=n, degree_bound=D, decision_bases={},
                      constraints=[SosConstraint("p", p.degree, D, {}, p, slots)],
                      objective={})


# -- compilation -----------------------------------------------------------------------

def _gram_rows(slot: GramStructure, index: Dict[Exponent, int]):
    """Entries (row, i, j, value) of ``- sum_{i<=j} G_ij * coeff(b_i b_j p)``."""
    rows, ii, jj, vals = [], [], [], []
    basis = slot.basis
    mult = list(slot.multiplier.items())
    for i, bi in enumerate(basis):
        for j in range(i, len(basis)):
            bij = tuple(a + c for a, c in zip(bi, basis[j]))
            for g, pg in mult:
                e = tuple(a + c for a, c in zip(bij, g))
                row = index.get(e)
                if row is None:
                    raise CompileError(
                        f"slot {slot.slot} produces monomial {e} outside the target basis")
                rows.append(row)
                ii.append(i)
                jj.append(j)
                vals.append(-pg)
    return rows, ii, jj, vals


@dataclass
class CompiledSdp:
    problem: SdpProblem
    program: SosProgram
    free_slices: Dict[str, slice]
    blocks: List[Tuple[str, str]]
    row_offsets: Dict[str, int]
    # each coefficient-matching row of ``problem`` is this row of the program divided by row_norms
    row_norms: Optional[np.ndarray] = None

    def decision_values(self, free: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: np.asarray(free[sl], dtype=float) for name, sl in self.free_slices.items()}

    def gram_values(self, blocks: Sequence[np.ndarray]) -> Dict[Tuple[str, str], np.ndarray]:
        out = {}
        for key, G in zip(self.blocks, blocks):
            if key == TRACE_SLACK:
                continue
            G = np.asarray(G, dtype=float)
            out[key] = np.triu(G) + np.triu(G, 1).T
        return out

    def embed(self, decision: Dict[str, np.ndarray],
              grams: Dict[Tuple[str, str], np.ndarray]) -> Tuple[List[np.ndarray], np.ndarray]:
        """Inverse of recovery: place decision coefficients and Grams into SDP variables."""
        free = np.zeros(self.problem.n_free)
        for name, sl in self.free_slices.items():
            free[sl] = decision[name]
        blocks = [np.asarray(grams[key], dtype=float) for key in self.blocks if key != TRACE_SLACK]
        bound = self.program.gram_trace_bound
        if bound is not None:
            blocks.append(np.array([[bound - sum(float(np.trace(G)) for G in blocks)]]))
        return blocks, free


def compile_to_sdp(prog: SosProgram) -> CompiledSdp:
    """Lower ``prog`` to a block SDP (one PSD block per slot, one free var per coefficient)."""
    free_slices, offset = {}, 0
    for name, basis in prog.decision_bases.items():
        free_slices[name] = slice(offset, offset + len(basis))
        offset += len(basis)
    n_free = offset

    a_row, a_blk, a_i, a_j, a_val = [], [], [], [], []
    f_row, f_var, f_val = [], [], []
    b_parts, row_offsets, block_keys, sizes = [], {}, [], []
    row0 = 0
    for con in prog.constraints:
        basis = con.basis
        index = {e: i for i, e in enumerate(basis)}
        row_offsets[con.name] = row0
        touched = np.zeros(len(basis), dtype=bool)
        rhs = -con.constant.coefficients(basis) if not con.constant.is_zero() else np.zeros(len(basis))
        b_parts.append(rhs)
        for name, mat in con.linear.items():
            if mat.shape != (len(basis), len(prog.decision_bases[name])):
                raise CompileError(f"linear map for {name} in {con.name} has wrong shape")
            r, c = np.nonzero(mat)
            f_row.extend(r + row0)
            f_var.extend(c + free_slices[name].start)
            f_val.extend(mat[r, c])
            touched[r] = True
        for slot in con.slots:
            rows, ii, jj, vals = _gram_rows(slot, index)
            k = len(sizes)
            sizes.append(slot.matrix_order)
            block_keys.append((con.name, slot.slot))
            a_row.extend(np.array(rows, dtype=int) + row0)
            a_blk.extend([k] * len(rows))
            a_i.extend(ii)
            a_j.extend(jj)
            a_val.extend(vals)
            touched[rows] = True
        if not touched.all():
            missing = basis[int(np.argmin(touched))]
            raise CompileError(f"monomial {missing} of constraint {con.name} "
                               "appears in no equality term")
        row0 += len(basis)

    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    a_row, a_val = np.array(a_row, dtype=int), np.array(a_val, dtype=float)
    f_row, f_val = np.array(f_row, dtype=int), np.array(f_val, dtype=float)
    a_i, a_j = np.array(a_i, dtype=int), np.array(a_j, dtype=int)
    # unit-norm rows, so the absolute equality residual is a relative one
    sq = np.zeros(row0)
    np.add.at(sq, a_row, a_val ** 2 * np.where(a_i == a_j, 1.0, 2.0))
    np.add.at(sq, f_row, f_val ** 2)
    norms = np.sqrt(sq)
    a_val, f_val, b = a_val / norms[a_row], f_val / norms[f_row], b / norms

    if prog.gram_trace_bound is not None and sizes:
        k = len(sizes)
        diag = np.concatenate([np.arange(s) for s in sizes + [1]])
        a_row = np.concatenate([a_row, np.full(len(diag), row0)])
        a_blk = list(a_blk) + [blk for blk, s in enumerate(sizes + [1]) for _ in range(s)]
        a_i, a_j = np.concatenate([a_i, diag]), np.concatenate([a_j, diag])
        a_val = np.concatenate([a_val, np.ones(len(diag))])
        b = np.append(b, prog.gram_trace_bound)
        norms = np.append(norms, 1.0)
        sizes.append(1)
        block_keys.append(TRACE_SLACK)

    c_free = np.zeros(n_free)
    for name, vec in prog.objective.items():
        c_free[free_slices[name]] = vec
    problem = SdpProblem(tuple(sizes), n_free, b,
                         a_row, a_blk, a_i, a_j, a_val, f_row, f_var, f_val, c_free=c_free)
    return CompiledSdp(problem, prog, free_slices, block_keys, row_offsets, norms)


# -- recovery ------------------------------------------------------------------------

class RecoveryError(RuntimeError):
    pass


@dataclass
class RecoveredSolution:
    """Decision polynomials in original and scaled coordinates plus Gram matrices."""

    decision: Dict[str, Polynomial]
    decision_scaled: Dict[str, Polynomial]
    coefficients: Dict[str, np.ndarray]
    grams: Dict[Tuple[str, str], np.ndarray]
    objective: float

    @property
    def v1(self):
        return self.decision.get("v1")

    @property
    def v2(self):
        return self.decision.get("v2")

    @property
    def w(self):
        return self.decision.get("w")


ACCEPTED = (SdpStatus.OPTIMAL,)


def recover_solution(c: CompiledSdp, sol: SdpSolution, allow_inexact: bool = False) -> RecoveredSolution:
    """Assemble decision polynomials and Gram matrices from an SDP solution.

    ``allow_inexact`` also accepts ``MaxIterations`` and ``NumericalTrouble``
    iterates (for diagnostics; certification decides whether they are usable).
    """
    ok = ACCEPTED + ((SdpStatus.MAX_ITERATIONS, SdpStatus.NUMERICAL_TROUBLE) if allow_inexact else ())
    if sol.status not in ok:
        raise RecoveryError(f"SDP status {sol.status.value} is not a solved status")
    prog = c.program
    coeffs = c.decision_values(np.asarray(sol.free_values))
    scaled = {name: Polynomial.from_coefficients(prog.dim, prog.decision_bases[name], vec)
              for name, vec in coeffs.items()}
    if prog.scaling is not None:
        original = {name: prog.scaling.push_forward(p) for name, p in scaled.items()}
    else:
        original = dict(scaled)
    objective = sum(float(vec @ coeffs[name]) for name, vec in prog.objective.items())
    return RecoveredSolution(original, scaled, coeffs, c.gram_values(sol.block_values),
                             prog.objective_scale * objective)


def gram_polynomial(slot: GramStructure, G: np.ndarray) -> Polynomial:
    """``basis' G basis`` expanded (without the multiplier)."""
    n = slot.multiplier.dim
    terms: Dict[Exponent, float] = {}
    for i, bi in enumerate(slot.basis):
        for j, bj in enumerate(slot.basis):
            e = tuple(a + c for a, c in zip(bi, bj))
            terms[e] = terms.get(e, 0.0) + float(G[i, j])
    return Polynomial(n, terms)


def constraint_residuals(prog: SosProgram, coeffs: Dict[str, np.ndarray],
                         grams: Dict[Tuple[str, str], np.ndarray]) -> Dict[str, float]:
    """Coefficient inf-norm of ``lhs - sum sigma_i p_i`` for every constraint, re-expanded."""
    out = {}
    for con in prog.constraints:
        lhs = con.polynomial(coeffs)
        rhs = Polynomial.zero(prog.dim)
        for slot in con.slots:
            rhs = rhs + gram_polynomial(slot, grams[(con.name, slot.slot)]) * slot.multiplier
        diff = lhs - rhs
        out[con.name] = max((abs(c) for _, c in diff.items()), default=0.0)
    return out
