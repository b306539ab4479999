"""Primal-dual interior-point method for :class:`SdpProblem`.

Infeasible path-following with Nesterov-Todd scaling and a Mehrotra
predictor-corrector. Free variables enter the Newton system directly, which is
solved through the Schur complement on the equality multipliers followed by a
small dense system for the free variables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.linalg as sla

from .problem import SdpProblem, SdpSolution, SdpStatus, SolverSettings, residuals

log = logging.getLogger(__name__)

_INFEAS_TOL = 1e-8
_MIN_STEP = 1e-10


class _NumericalTrouble(Exception):
    pass


@dataclass
class _Block:
    size: int
    rows: np.ndarray          # constraint rows touching this block
    dense: np.ndarray         # (len(rows), s, s) symmetric constraint matrices
    flat: np.ndarray          # same, reshaped (len(rows), s*s)
    C: np.ndarray


def _prepare(p: SdpProblem, row_scale: np.ndarray) -> List[_Block]:
    blocks = []
    for k, s in enumerate(p.block_sizes):
        op = p.block_operator(k)
        rows = np.unique(op.nonzero()[0])
        sub = op[rows].toarray() * row_scale[rows, None]
        dense = sub.reshape(len(rows), s, s)
        blocks.append(_Block(s, rows, dense, sub, p.objective_block(k)))
    return blocks


def _chol(X):
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise _NumericalTrouble("lost positive definiteness") from exc


def _nt_scaling(X, S):
    """Return (r, rti, lam) with r' S r = diag(lam) = rti' X rti and rti = r^{-T}."""
    L1 = _chol(X)
    L2 = _chol(S)
    U, lam, Vt = np.linalg.svd(L2.T @ L1)
    if lam.min() <= 0:
        raise _NumericalTrouble("degenerate scaling point")
    isq = 1.0 / np.sqrt(lam)
    r = (L1 @ Vt.T) * isq
    rti = (L2 @ U) * isq
    return r, rti, lam


def _max_step(L, D):
    """Largest t with L L' + t D PSD (capped at a large value)."""
    Linv_D = sla.solve_triangular(L, D, lower=True)
    T = sla.solve_triangular(L, Linv_D.T, lower=True)
    ev = np.linalg.eigvalsh((T + T.T) / 2)[0]
    return 1e30 if ev >= 0 else -1.0 / ev


def _sym(A):
    return (A + A.T) / 2


def solve(p: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve ``p``; numerical failure is reported through the status."""
    s = settings or SolverSettings()
    m, nf = p.m, p.n_free

    A_free = p.free_operator().toarray()
    row_sq = (A_free ** 2).sum(axis=1)
    for k in range(p.n_blocks):
        op = p.block_operator(k)
        row_sq += np.asarray(op.multiply(op).sum(axis=1)).ravel()
    row_norm = np.sqrt(row_sq)
    row_scale = 1.0 / np.maximum(row_norm, 1e-300)
    blocks = _prepare(p, row_scale)
    Af = A_free * row_scale[:, None]
    # free variables are rescaled to unit column norm: x = col_scale * x_scaled
    col_scale = 1.0 / np.maximum(np.sqrt((Af ** 2).sum(axis=0)), 1e-300) if nf else np.ones(0)
    Af = Af * col_scale[None, :]
    b = p.b * row_scale
    cf = p.c_free * col_scale

    def A_op(Xs):
        out = np.zeros(m)
        for blk, X in zip(blocks, Xs):
            out[blk.rows] += blk.flat @ X.ravel()
        return out

    def At_op(y):
        return [(blk.flat.T @ y[blk.rows]).reshape(blk.size, blk.size) for blk in blocks]

    # starting point: scaled identities
    norm_b = np.linalg.norm(b)
    norm_c = np.sqrt(sum(np.sum(blk.C ** 2) for blk in blocks) + cf @ cf)
    X, S = [], []
    for blk in blocks:
        n_k = blk.size
        a_norms = np.sqrt((blk.flat ** 2).sum(axis=1)) if len(blk.rows) else np.zeros(1)
        xi = max(10.0, np.sqrt(n_k), np.sqrt(n_k) * np.max((1 + np.abs(b[blk.rows])) / (1 + a_norms))
                 if len(blk.rows) else 0.0)
        eta = max(10.0, np.sqrt(n_k), float(a_norms.max()), np.linalg.norm(blk.C))
        X.append(s.initial_point_scale * xi * np.eye(n_k))
        S.append(s.initial_point_scale * eta * np.eye(n_k))
    x = np.zeros(nf)
    y = np.zeros(m)
    N = sum(blk.size for blk in blocks)
    null = _NullSpace(Af)

    history = []
    status = SdpStatus.MAX_ITERATIONS
    it = 0
    small_steps = 0

    def measures():
        rp = b - A_op(X) - Af @ x
        AtY = At_op(y)
        Rd = [blk.C - a - Sk for blk, a, Sk in zip(blocks, AtY, S)]
        rf = cf - Af.T @ y
        pobj = sum(np.sum(blk.C * Xk) for blk, Xk in zip(blocks, X)) + cf @ x
        dobj = b @ y
        comp = sum(np.sum(Xk * Sk) for Xk, Sk in zip(X, S))
        pinf = np.linalg.norm(rp) / (1 + norm_b)
        dinf = np.sqrt(sum(np.sum(R ** 2) for R in Rd) + rf @ rf) / (1 + norm_c)
        scale = 1 + abs(pobj) + abs(dobj)
        # relative complementarity; |pobj - dobj| is not used because with large
        # multipliers it is dominated by y'rp long before rp is visibly nonzero
        gap = comp / scale
        return rp, Rd, rf, AtY, pobj, dobj, comp, pinf, dinf, gap

    try:
        for it in range(s.max_iterations + 1):
            rp, Rd, rf, AtY, pobj, dobj, comp, pinf, dinf, gap = measures()
            eq_abs = float(np.max(np.abs(rp / row_scale))) if m else 0.0
            history.append(dict(iteration=it, pobj=float(pobj), dobj=float(dobj),
                                pinf=float(pinf), dinf=float(dinf),
                                gap=float(comp / (1 + abs(pobj) + abs(dobj)))))
            if s.verbose:
                log.info("it %3d pobj %+.8e dobj %+.8e pinf %.1e dinf %.1e gap %.1e",
                         it, pobj, dobj, pinf, dinf, gap)
            if eq_abs <= s.tol_eq and pinf <= s.tol_eq and dinf <= s.tol_psd and gap <= s.tol_gap:
                status = SdpStatus.OPTIMAL
                break
            verdict = _infeasibility(blocks, Af, b, cf, X, x, y, AtY, A_op)
            if verdict is not None:
                status = verdict
                break
            if it == s.max_iterations:
                break
            mu = comp / N

            scal = [_nt_scaling(Xk, Sk) for Xk, Sk in zip(X, S)]
            W = [r @ r.T for r, _, _ in scal]
            kkt = _Kkt(blocks, scal, null, m)

            def raw_direction(rp_, Rd_, rf_, Rc_):
                G = [r @ Rc @ r.T - Wk @ Rdk @ Wk
                     for (r, _, _), Rc, Wk, Rdk in zip(scal, Rc_, W, Rd_)]
                h = rp_ - A_op(G)
                dy, dx = kkt.solve(h, rf_)
                AtdY = At_op(dy)
                dS = [Rdk - a for Rdk, a in zip(Rd_, AtdY)]
                dX = [_sym(Gk + Wk @ a @ Wk) for Gk, Wk, a in zip(G, W, AtdY)]
                return dX, dx, dy, dS

            def direction(Rc_tilde, refine=2):
                dX, dx, dy, dS = raw_direction(rp, Rd, rf, Rc_tilde)
                for _ in range(refine):
                    # residuals of the full Newton system, including the scaled
                    # complementarity rows that the reduced solve cannot see
                    e1 = rp - A_op(dX) - Af @ dx
                    e2 = [Rdk - a - dSk for Rdk, a, dSk in zip(Rd, At_op(dy), dS)]
                    e3 = rf - Af.T @ dy
                    e4 = [Rc - _sym(rti.T @ dXk @ rti + r.T @ dSk @ r)
                          for (r, rti, _), Rc, dXk, dSk in zip(scal, Rc_tilde, dX, dS)]
                    cX, cx, cy, cS = raw_direction(e1, e2, e3, e4)
                    dX = [a + c for a, c in zip(dX, cX)]
                    dS = [a + c for a, c in zip(dS, cS)]
                    dx, dy = dx + cx, dy + cy
                return dX, dx, dy, dS

            def steps(dX, dS):
                ap = min(_max_step(_chol(Xk), D) for Xk, D in zip(X, dX))
                ad = min(_max_step(_chol(Sk), D) for Sk, D in zip(S, dS))
                return ap, ad

            # predictor
            dXa, dxa, dya, dSa = direction([-np.diag(lam) for _, _, lam in scal])
            ap, ad = steps(dXa, dSa)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = sum(np.sum((Xk + ap * dXk) * (Sk + ad * dSk))
                         for Xk, dXk, Sk, dSk in zip(X, dXa, S, dSa)) / N
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

            # corrector
            Rcs = []
            for (r, rti, lam), dXk, dSk in zip(scal, dXa, dSa):
                dxt = rti.T @ dXk @ rti
                dst = r.T @ dSk @ r
                H = sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - _sym(dxt @ dst)
                Rcs.append(2.0 * H / (lam[:, None] + lam[None, :]))
            dX, dx, dy, dS = direction(Rcs)
            ap, ad = steps(dX, dS)
            gamma = 0.9 + 0.09 * min(1.0, ap, ad)
            ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)

            X = [_sym(Xk + ap * dXk) for Xk, dXk in zip(X, dX)]
            x = x + ap * dx
            y = y + ad * dy
            S = [_sym(Sk + ad * dSk) for Sk, dSk in zip(S, dS)]

            history[-1].update(step_primal=float(ap), step_dual=float(ad), sigma=float(sigma))
            if s.verbose:
                log.info("      steps %.3f %.3f sigma %.2e", ap, ad, sigma)
            small_steps = small_steps + 1 if max(ap, ad) < _MIN_STEP else 0
            if small_steps >= 3:
                status = SdpStatus.NUMERICAL_TROUBLE
                break
    except _NumericalTrouble as exc:
        log.debug("numerical trouble: %s", exc)
        status = SdpStatus.NUMERICAL_TROUBLE

    x = x * col_scale
    eq, min_eig = residuals(p, X, x)
    pobj = p.objective(X, x)
    y_unscaled = y * row_scale
    dobj = float(p.b @ y_unscaled)
    comp = sum(np.sum(Xk * Sk) for Xk, Sk in zip(X, S))
    return SdpSolution(
        block_values=X, free_values=x, objective_value=float(pobj), status=status,
        equality_inf_norm=eq, min_block_eigenvalue=min_eig,
        duality_gap=float(comp / (1 + abs(pobj) + abs(dobj))),
        dual_values=y_unscaled, dual_objective=dobj, iterations=it, history=history)


class _Kkt:
    """Factorised Newton system ``[[M, Af], [Af', 0]] [dy; dx] = [h; rf]``.

    Solved by the null-space method: ``Af = Q1 R`` and ``Q2`` spans the
    orthogonal complement, so only ``Q2' M Q2`` needs a Cholesky factor.
    """

    def __init__(self, blocks, scal, null, m):
        M = np.zeros((m, m))
        for blk, (r, _, _) in zip(blocks, scal):
            if not len(blk.rows):
                continue
            # Gram matrix of the scaled constraints r' A_i r
            F = np.matmul(np.matmul(r.T, blk.dense), r).reshape(len(blk.rows), -1)
            M[np.ix_(blk.rows, blk.rows)] += F @ F.T
        self.M = (M + M.T) / 2
        self.null = null
        Mr = null.Q2.T @ self.M @ null.Q2 if null.nf else self.M
        Mr = (Mr + Mr.T) / 2
        d = np.sqrt(np.maximum(np.diag(Mr), 1e-300))
        self.d = d
        Ms = Mr / d[:, None] / d[None, :]
        reg = 0.0
        while True:
            try:
                self.chol = sla.cho_factor(Ms + reg * np.eye(len(d)), lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg = 1e-14 if reg == 0 else reg * 100
                if reg > 1e-6:
                    raise _NumericalTrouble("Schur complement is singular")

    def _solve_once(self, h, rf):
        nl = self.null
        if nl.nf:
            a = sla.solve_triangular(nl.R, rf, trans="T", check_finite=False)
            y1 = nl.Q1 @ a
            rhs = nl.Q2.T @ (h - self.M @ y1)
        else:
            y1 = 0.0
            rhs = h
        z = sla.cho_solve(self.chol, rhs / self.d, check_finite=False) / self.d
        if not nl.nf:
            return z, np.zeros(0)
        dy = y1 + nl.Q2 @ z
        dx = sla.solve_triangular(nl.R, nl.Q1.T @ (h - self.M @ dy), check_finite=False)
        return dy, dx

    def solve(self, h, rf, refine=1):
        dy, dx = self._solve_once(h, rf)
        Af = self.null.Af
        for _ in range(refine):
            r1 = h - self.M @ dy - Af @ dx
            r2 = rf - Af.T @ dy
            ey, ex = self._solve_once(r1, r2)
            dy, dx = dy + ey, dx + ex
        if not (np.all(np.isfinite(dy)) and np.all(np.isfinite(dx))):
            raise _NumericalTrouble("non-finite Newton direction")
        return dy, dx


class _NullSpace:
    """QR of the free-variable columns."""

    def __init__(self, Af):
        self.Af = Af
        self.nf = Af.shape[1]
        if not self.nf:
            return
        Q, R = np.linalg.qr(Af, mode="complete")
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-12 * max(diag.max(), 1.0):
            raise _NumericalTrouble("free-variable columns are linearly dependent")
        self.Q1 = Q[:, :self.nf]
        self.Q2 = Q[:, self.nf:]
        self.R = R[:self.nf]


def _infeasibility(blocks, Af, b, cf, X, x, y, AtY, A_op):
    """Check normalised Farkas certificates built from the current iterate."""
    by = float(b @ y)
    if by > 0:
        yb = y / by
        free_res = np.linalg.norm(Af.T @ yb) if Af.shape[1] else 0.0
        neg = 0.0
        for a in AtY:
            ev = np.linalg.eigvalsh(-a / by)[0]
            neg = max(neg, -ev)
        if by > 1e6 and free_res <= _INFEAS_TOL and neg <= _INFEAS_TOL:
            return SdpStatus.PRIMAL_INFEASIBLE
    cx = sum(np.sum(blk.C * Xk) for blk, Xk in zip(blocks, X)) + float(cf @ x)
    if cx < 0:
        scale = -cx
        res = np.linalg.norm(A_op(X) + Af @ x) / scale
        if scale > 1e6 and res <= _INFEAS_TOL:
            return SdpStatus.DUAL_INFEASIBLE
    return None
