"""Block-diagonal SDP data with free variables.

The primal problem is::

    minimize    sum_j <C_j, X_j> + c_free' x
    subject to  sum_j <A_rj, X_j> + a_free_r' x = b_r     for every row r
                X_j PSD,  x free.

Matrix coefficients are stored once per unordered index pair with ``i <= j``.
An entry ``(i, j, v)`` with ``i < j`` stands for the symmetric matrix having
``v`` at both ``(i, j)`` and ``(j, i)``, so it contributes ``2 v X_ij`` to
``<A, X>`` (the SDPA convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp


class SdpStatus(str, Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(frozen=True)
class SolverSettings:
    """Stopping tolerances are relative to ``1 + norm`` of the data.

    ``tol_eq`` bounds the primal equality residual, ``tol_psd`` the dual
    residual, ``tol_gap`` the relative duality gap.
    """

    tol_eq: float = 1e-8
    tol_psd: float = 1e-8
    tol_gap: float = 1e-8
    max_iterations: int = 200
    initial_point_scale: float = 1.0
    verbose: bool = False

    def __post_init__(self):
        for name in ("tol_eq", "tol_psd", "tol_gap", "initial_point_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def _coo(arrays, dtypes):
    return tuple(np.asarray(a, dtype=t) for a, t in zip(arrays, dtypes))


@dataclass(frozen=True, eq=False)
class SdpProblem:
    block_sizes: Tuple[int, ...]
    n_free: int
    b: np.ndarray
    # constraint entries on PSD blocks: (row, block, i, j, value), i <= j
    a_row: np.ndarray
    a_blk: np.ndarray
    a_i: np.ndarray
    a_j: np.ndarray
    a_val: np.ndarray
    # constraint entries on free variables: (row, var, value)
    f_row: np.ndarray
    f_var: np.ndarray
    f_val: np.ndarray
    # objective
    c_blk: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    c_i: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    c_j: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    c_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_free: Optional[np.ndarray] = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("block_sizes", tuple(int(s) for s in self.block_sizes))
        set_("b", np.asarray(self.b, dtype=float).ravel())
        ints, flt = np.int64, float
        a = _coo((self.a_row, self.a_blk, self.a_i, self.a_j, self.a_val),
                 (ints, ints, ints, ints, flt))
        i, j = np.minimum(a[2], a[3]), np.maximum(a[2], a[3])
        a = (a[0], a[1], i, j, a[4])
        a = _merge(a, key_len=4)
        for k, v in zip(("a_row", "a_blk", "a_i", "a_j", "a_val"), a):
            set_(k, v)
        f = _merge(_coo((self.f_row, self.f_var, self.f_val), (ints, ints, flt)), key_len=2)
        for k, v in zip(("f_row", "f_var", "f_val"), f):
            set_(k, v)
        c = _coo((self.c_blk, self.c_i, self.c_j, self.c_val), (ints, ints, ints, flt))
        c = (c[0], np.minimum(c[1], c[2]), np.maximum(c[1], c[2]), c[3])
        c = _merge(c, key_len=3)
        for k, v in zip(("c_blk", "c_i", "c_j", "c_val"), c):
            set_(k, v)
        cf = np.zeros(self.n_free) if self.c_free is None else np.asarray(self.c_free, dtype=float)
        set_("c_free", cf)
        self._validate()

    def _validate(self):
        m = self.m
        if any(s < 1 for s in self.block_sizes):
            raise ValueError("block orders must be positive")
        if self.c_free.shape != (self.n_free,):
            raise ValueError("c_free must have one entry per free variable")
        if len(self.a_row) and (self.a_row.min() < 0 or self.a_row.max() >= m):
            raise ValueError("constraint row out of range")
        if len(self.f_row) and (self.f_row.min() < 0 or self.f_row.max() >= m):
            raise ValueError("constraint row out of range")
        if len(self.f_var) and (self.f_var.min() < 0 or self.f_var.max() >= self.n_free):
            raise ValueError("free variable index out of range")
        sizes = np.array(self.block_sizes)
        for blk, i, j in ((self.a_blk, self.a_i, self.a_j), (self.c_blk, self.c_i, self.c_j)):
            if len(blk):
                if blk.min() < 0 or blk.max() >= len(sizes):
                    raise ValueError("block index out of range")
                if i.min() < 0 or np.any(j >= sizes[blk]):
                    raise ValueError("matrix index out of range")
        used = np.zeros(m, dtype=bool)
        used[self.a_row[self.a_val != 0]] = True
        used[self.f_row[self.f_val != 0]] = True
        if not used.all():
            raise ValueError(f"constraint {int(np.argmin(used))} references no variable")

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    # -- linear operators (full symmetric expansion) ----------------------------
    def block_operator(self, k: int) -> sp.csr_matrix:
        """Sparse ``(m, s*s)`` matrix with ``A(X)_r = row_r . vec(X_k)`` (row-major vec)."""
        s = self.block_sizes[k]
        sel = self.a_blk == k
        r, i, j, v = self.a_row[sel], self.a_i[sel], self.a_j[sel], self.a_val[sel]
        off = i != j
        rows = np.concatenate([r, r[off]])
        cols = np.concatenate([i * s + j, (j * s + i)[off]])
        vals = np.concatenate([v, v[off]])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.m, s * s))

    def free_operator(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.f_val, (self.f_row, self.f_var)), shape=(self.m, self.n_free))

    def objective_block(self, k: int) -> np.ndarray:
        s = self.block_sizes[k]
        out = np.zeros((s, s))
        sel = self.c_blk == k
        i, j, v = self.c_i[sel], self.c_j[sel], self.c_val[sel]
        np.add.at(out, (i, j), v)
        off = i != j
        np.add.at(out, (j[off], i[off]), v[off])
        return out

    def apply(self, blocks: Sequence[np.ndarray], free) -> np.ndarray:
        """``A(X) + A_free x`` evaluated entry by entry from the stored triplets."""
        out = np.zeros(self.m)
        if len(self.a_row):
            xv = np.empty(len(self.a_row))
            for k in range(self.n_blocks):
                sel = self.a_blk == k
                xv[sel] = np.asarray(blocks[k])[self.a_i[sel], self.a_j[sel]]
            mult = np.where(self.a_i == self.a_j, 1.0, 2.0)
            np.add.at(out, self.a_row, mult * self.a_val * xv)
        if len(self.f_row):
            np.add.at(out, self.f_row, self.f_val * np.asarray(free, dtype=float)[self.f_var])
        return out

    def objective(self, blocks: Sequence[np.ndarray], free) -> float:
        total = float(self.c_free @ np.asarray(free, dtype=float)) if self.n_free else 0.0
        for k, i, j, v in zip(self.c_blk, self.c_i, self.c_j, self.c_val):
            total += v * blocks[k][i, j] * (1.0 if i == j else 2.0)
        return total

    def scaled_objective(self, factor: float) -> "SdpProblem":
        return SdpProblem(self.block_sizes, self.n_free, self.b,
                          self.a_row, self.a_blk, self.a_i, self.a_j, self.a_val,
                          self.f_row, self.f_var, self.f_val,
                          self.c_blk, self.c_i, self.c_j, self.c_val * factor,
                          self.c_free * factor)


def _merge(arrays, key_len):
    """Sum duplicate keys, drop exact zeros, sort lexicographically by key."""
    keys, vals = arrays[:key_len], arrays[key_len]
    if len(vals) == 0:
        return arrays
    order = np.lexsort(tuple(reversed(keys)))
    keys = [k[order] for k in keys]
    vals = vals[order]
    stacked = np.stack(keys, axis=1)
    new = np.ones(len(vals), dtype=bool)
    new[1:] = np.any(stacked[1:] != stacked[:-1], axis=1)
    group = np.cumsum(new) - 1
    summed = np.zeros(group[-1] + 1)
    np.add.at(summed, group, vals)
    keys = [k[new] for k in keys]
    keep = summed != 0.0
    return tuple([k[keep] for k in keys] + [summed[keep]])


@dataclass
class SdpSolution:
    block_values: List[np.ndarray]
    free_values: np.ndarray
    objective_value: float
    status: SdpStatus
    equality_inf_norm: float
    min_block_eigenvalue: float
    duality_gap: float
    dual_values: Optional[np.ndarray] = None
    dual_objective: float = float("nan")
    iterations: int = 0
    history: List[dict] = field(default_factory=list)

    @property
    def residuals(self) -> Tuple[float, float, float]:
        return self.equality_inf_norm, self.min_block_eigenvalue, self.duality_gap


def residuals(p: SdpProblem, blocks: Sequence[np.ndarray], free) -> Tuple[float, float]:
    """Recompute ``(max_r |A_r(X) - b_r|, min block eigenvalue)`` from scratch."""
    if len(blocks) != p.n_blocks:
        raise ValueError(f"expected {p.n_blocks} blocks, got {len(blocks)}")
    for k, (X, s) in enumerate(zip(blocks, p.block_sizes)):
        if np.shape(X) != (s, s):
            raise ValueError(f"block {k} has shape {np.shape(X)}, expected {(s, s)}")
    free = np.asarray(free, dtype=float).ravel()
    if free.shape != (p.n_free,):
        raise ValueError(f"expected {p.n_free} free values, got {free.shape}")
    eq = float(np.max(np.abs(p.apply(blocks, free) - p.b))) if p.m else 0.0
    # symmetrise from the upper triangle, which is what the constraints read
    eigs = [np.linalg.eigvalsh(np.triu(X) + np.triu(X, 1).T)[0] for X in blocks]
    return eq, float(min(eigs)) if eigs else float("inf")


def solution_residuals(p: SdpProblem, sol: SdpSolution) -> Tuple[float, float]:
    return residuals(p, sol.block_values, sol.free_values)
