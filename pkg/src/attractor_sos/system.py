"""Polynomial dynamical systems and trajectory simulation."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .domain import SemialgebraicSet
from .poly import PolynomialMap

CONTINUOUS = "continuous"
DISCRETE = "discrete"


class DivergenceError(RuntimeError):
    """A trajectory produced a non-finite state."""


class LeftDomainError(RuntimeError):
    """A kept trajectory point left the state set."""


@dataclass(frozen=True)
class DynamicalSystem:
    """``dx/dt = f(x)`` with discount ``beta > 0`` or ``x+ = f(x)`` with ``0 < alpha < 1``."""

    time_kind: str
    field: PolynomialMap
    discount: float
    variables: tuple = ()

    def __post_init__(self):
        if self.time_kind not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"time_kind must be {CONTINUOUS!r} or {DISCRETE!r}")
        d = float(self.discount)
        object.__setattr__(self, "discount", d)
        if self.time_kind == CONTINUOUS and not d > 0:
            raise ValueError(f"continuous-time discount beta must be > 0, got {d}")
        if self.time_kind == DISCRETE and not 0 < d < 1:
            raise ValueError(f"discrete-time discount alpha must lie in (0, 1), got {d}")
        if not self.variables:
            from .poly import default_names
            object.__setattr__(self, "variables", tuple(default_names(self.field.dim)))
        else:
            object.__setattr__(self, "variables", tuple(self.variables))
        if len(self.variables) != self.field.dim:
            raise ValueError("one variable name per state dimension is required")

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def is_continuous(self) -> bool:
        return self.time_kind == CONTINUOUS

    def fingerprint(self) -> str:
        """Hash of the time kind and the field (discount excluded)."""
        h = hashlib.sha256()
        h.update(self.time_kind.encode())
        for comp in self.field:
            h.update(comp.to_string(self.variables).encode())
            h.update(b";")
        return h.hexdigest()[:16]


@dataclass
class TrajectorySample:
    points: np.ndarray
    burn_in_dropped: int
    step: float

    def to_csv(self, path, variables: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(variables))
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])


def _check_finite(x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DivergenceError("trajectory diverged (non-finite state)")
    return x


def step_rk4(f: PolynomialMap, x, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return _check_finite(out)


class _FastField:
    """Evaluates a polynomial map at one point with precomputed monomial tables."""

    def __init__(self, f: PolynomialMap):
        exps = sorted({e for comp in f for e in comp.terms})
        self.exps = np.array(exps, dtype=int).reshape(len(exps), f.dim)
        idx = {e: i for i, e in enumerate(exps)}
        self.coef = np.zeros((f.dim, len(exps)))
        for r, comp in enumerate(f):
            for e, c in comp.items():
                self.coef[r, idx[e]] = c

    def __call__(self, x: np.ndarray) -> np.ndarray:
        mono = np.prod(x[None, :] ** self.exps, axis=1)
        return self.coef @ mono


def integrate(f: PolynomialMap, x0, dt: float, steps: int,
              record: Optional[Callable[[int, np.ndarray], None]] = None) -> np.ndarray:
    """Fixed-step RK4 for ``steps`` steps; returns the final state."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = _FastField(f)
    x = np.array(x0, dtype=float)
    h2, h6 = 0.5 * dt, dt / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            k1 = g(x)
            k2 = g(x + h2 * k1)
            k3 = g(x + h2 * k2)
            k4 = g(x + dt * k3)
            x = x + h6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"trajectory diverged at step {i + 1}")
            if record is not None:
                record(i, x)
    return x


def iterate_map(f: PolynomialMap, x, steps: int,
                bounds: Optional[SemialgebraicSet] = None) -> List[np.ndarray]:
    """``[x, f(x), ..., f^steps(x)]``, truncated once a point leaves ``bounds``."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    g = _FastField(f)
    x = np.array(x, dtype=float)
    out = [x]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            x = g(x)
            if not np.all(np.isfinite(x)):
                raise DivergenceError("map iteration diverged")
            out.append(x)
            if bounds is not None and not bounds.contains(x):
                break
    return out


def _check_inside(X: SemialgebraicSet, pts: np.ndarray, what: str) -> None:
    inside = X.contains_many(pts)
    if not inside.all():
        first = int(np.argmin(inside))
        raise LeftDomainError(f"{what} point {first} ({pts[first]}) lies outside X")


def sample_attractor(sys: DynamicalSystem, X: SemialgebraicSet, x0, burn_in: int,
                     count: int, dt: float = 1e-3, stride: int = 1) -> TrajectorySample:
    """Simulate ``burn_in + count`` steps from ``x0`` and keep the last ``count``.

    For continuous systems one kept point is recorded every ``stride`` RK4
    steps of size ``dt`` (``burn_in`` counts RK4 steps).
    """
    x0 = np.asarray(x0, dtype=float)
    if not X.contains(x0):
        raise ValueError(f"initial point {x0} is not in X")
    if burn_in < 1 or count < 1:
        raise ValueError("burn_in and count must be >= 1")
    if sys.is_continuous:
        if not dt > 0:
            raise ValueError("dt must be positive")
        x = integrate(sys.field, x0, dt, burn_in)
        kept = np.empty((count, sys.dim))

        def keep(i, state):
            if (i + 1) % stride == 0:
                kept[(i + 1) // stride - 1] = state

        integrate(sys.field, x, dt, count * stride, record=keep)
        _check_inside(X, kept, "kept trajectory")
        return TrajectorySample(kept, burn_in, dt * stride)
    traj = iterate_map(sys.field, x0, burn_in + count - 1)
    if len(traj) < burn_in + count:
        raise DivergenceError("map iteration ended early")
    kept = np.array(traj[burn_in:])
    _check_inside(X, kept, "kept trajectory")
    return TrajectorySample(kept, burn_in, 1.0)
