"""State sets: basic semialgebraic descriptions plus closed-form moment domains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import List, Sequence, Tuple

import numpy as np

from .poly import Exponent, Polynomial, monomial_basis


@dataclass(frozen=True)
class Box:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    kind = "box"

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"box needs lower < upper componentwise, got {lo}, {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.lower) + np.array(self.upper)) / 2

    @property
    def half_widths(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / 2

    @property
    def enclosing_radius(self) -> float:
        return float(np.linalg.norm(self.half_widths))

    def volume(self) -> float:
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    def bounding_box(self) -> "Box":
        return self

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= np.array(self.lower)) & (pts <= np.array(self.upper)), axis=1)


@dataclass(frozen=True)
class Ball:
    center: Tuple[float, ...]
    radius: float

    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.center:
            raise ValueError("ball center must be nonempty")
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def enclosing_radius(self) -> float:
        return self.radius

    def volume(self) -> float:
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius ** n

    def bounding_box(self) -> Box:
        c = np.array(self.center)
        return Box(tuple(c - self.radius), tuple(c + self.radius))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.sum((pts - np.array(self.center)) ** 2, axis=1) <= self.radius ** 2


@dataclass(frozen=True)
class Annulus:
    center: Tuple[float, ...]
    inner_radius: float
    outer_radius: float

    kind = "annulus"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "inner_radius", float(self.inner_radius))
        object.__setattr__(self, "outer_radius", float(self.outer_radius))
        if not self.center:
            raise ValueError("annulus center must be nonempty")
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("annulus needs 0 < inner_radius < outer_radius, got "
                             f"{self.inner_radius}, {self.outer_radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def enclosing_radius(self) -> float:
        return self.outer_radius

    def volume(self) -> float:
        return (Ball(self.center, self.outer_radius).volume()
                - Ball(self.center, self.inner_radius).volume())

    def bounding_box(self) -> Box:
        return Ball(self.center, self.outer_radius).bounding_box()

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        r2 = np.sum((pts - np.array(self.center)) ** 2, axis=1)
        return (r2 >= self.inner_radius ** 2) & (r2 <= self.outer_radius ** 2)


MomentDomain = Box | Ball | Annulus


def domain_center(domain: MomentDomain) -> np.ndarray:
    if isinstance(domain, Box):
        return domain.center
    return np.array(domain.center)


def domain_inequalities(domain: MomentDomain) -> List[Polynomial]:
    """The natural inequality description ``p_i >= 0`` of a moment domain."""
    n = domain.dim
    xs = [Polynomial.variable(n, i) for i in range(n)]
    if isinstance(domain, Box):
        return [(xs[i] - lo) * (hi - xs[i])
                for i, (lo, hi) in enumerate(zip(domain.lower, domain.upper))]
    c = domain.center
    sq = sum(((xs[i] - c[i]) ** 2 for i in range(n)), Polynomial.zero(n))
    if isinstance(domain, Ball):
        return [domain.radius ** 2 - sq]
    return [sq - domain.inner_radius ** 2, domain.outer_radius ** 2 - sq]


@dataclass(frozen=True)
class SemialgebraicSet:
    """``{x : p_i(x) >= 0 for all i}`` together with the same set in closed form."""

    dim: int
    inequalities: Tuple[Polynomial, ...]
    moment_domain: MomentDomain = field(compare=True)

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        if self.moment_domain.dim != self.dim:
            raise ValueError("moment domain dimension does not match the set")
        for p in self.inequalities:
            if p.dim != self.dim:
                raise ValueError(f"inequality {p} has dim {p.dim}, expected {self.dim}")

    @classmethod
    def from_domain(cls, domain: MomentDomain, extra: Sequence[Polynomial] = ()) -> "SemialgebraicSet":
        return cls(domain.dim, tuple(domain_inequalities(domain)) + tuple(extra), domain)

    def contains(self, point) -> bool:
        return contains(self, point)

    def contains_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for p in self.inequalities:
            ok &= p.eval_many(pts) >= 0
        return ok


def contains(s: SemialgebraicSet, point) -> bool:
    x = np.asarray(point, dtype=float).ravel()
    if x.shape[0] != s.dim:
        raise ValueError(f"point has length {x.shape[0]}, expected {s.dim}")
    return all(p(x) >= 0 for p in s.inequalities)


def _as_ball_constraint(p: Polynomial):
    """Return (center, R) if ``p == R^2 - |x - c|^2``, else None."""
    n = p.dim
    if p.degree != 2:
        return None
    center = np.zeros(n)
    for e, coef in p.items():
        deg = sum(e)
        if deg == 2:
            if max(e) != 2 or coef != -1.0:
                return None
        elif deg == 1:
            center[e.index(1)] = coef / 2.0
    for i in range(n):
        e = tuple(2 if j == i else 0 for j in range(n))
        if p.coefficient(e) != -1.0:
            return None
    r2 = p.coefficient((0,) * n) + float(center @ center)
    if r2 <= 0:
        return None
    return center, math.sqrt(r2)


def _ball_covers(center, radius, domain: MomentDomain) -> bool:
    tol = 1e-12 * max(1.0, radius)
    if isinstance(domain, Box):
        far = np.maximum(np.abs(np.array(domain.lower) - center),
                         np.abs(np.array(domain.upper) - center))
        return float(np.linalg.norm(far)) <= radius + tol
    dist = float(np.linalg.norm(np.array(domain.center) - center))
    return dist + domain.enclosing_radius <= radius + tol


def ensure_ball_constraint(s: SemialgebraicSet) -> SemialgebraicSet:
    """Append ``R^2 - |x - c|^2 >= 0`` unless an enclosing ball constraint exists."""
    for p in s.inequalities:
        hit = _as_ball_constraint(p)
        if hit is not None and _ball_covers(hit[0], hit[1], s.moment_domain):
            return s
    d = s.moment_domain
    c = domain_center(d)
    # squared radius computed directly so the box case stays exact
    r2 = float(np.sum(d.half_widths ** 2)) if isinstance(d, Box) else d.enclosing_radius ** 2
    n = s.dim
    sq = sum(((Polynomial.variable(n, i) - float(c[i])) ** 2 for i in range(n)),
             Polynomial.zero(n))
    return SemialgebraicSet(n, s.inequalities + (r2 - sq,), d)


# -- moments -----------------------------------------------------------------------

@dataclass(frozen=True)
class MomentVector:
    dim: int
    max_degree: int
    values: np.ndarray

    @property
    def basis(self) -> List[Exponent]:
        return monomial_basis(self.dim, self.max_degree)

    def __getitem__(self, e: Exponent) -> float:
        return float(self.values[self.basis.index(tuple(e))])

    def __len__(self):
        return len(self.values)


def _box_moment(lower, upper, e) -> float:
    out = 1.0
    for lo, hi, a in zip(lower, upper, e):
        out *= (hi ** (a + 1) - lo ** (a + 1)) / (a + 1)
    return out


def _centered_ball_moment(n: int, radius: float, e) -> float:
    if any(a % 2 for a in e):
        return 0.0
    total = sum(e)
    logv = (total + n) * math.log(radius) + sum(math.lgamma((a + 1) / 2) for a in e) \
        - math.lgamma((total + n) / 2 + 1)
    return math.exp(logv)


def _ball_moment(center, radius, e) -> float:
    n = len(e)
    if not any(center):
        return _centered_ball_moment(n, radius, e)
    # (y + c)^a expanded binomially around the centre
    total = 0.0
    for b in product(*(range(a + 1) for a in e)):
        if any(bi % 2 for bi in b):
            continue
        w = 1.0
        for a, bi, ci in zip(e, b, center):
            w *= math.comb(a, bi) * ci ** (a - bi)
        if w:
            total += w * _centered_ball_moment(n, radius, b)
    return total


def lebesgue_moments(domain: MomentDomain, max_degree: int) -> MomentVector:
    """Exact moments ``int_X x^a dx`` for all ``|a| <= max_degree`` in graded-lex order."""
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    basis = monomial_basis(domain.dim, max_degree)
    if isinstance(domain, Box):
        vals = [_box_moment(domain.lower, domain.upper, e) for e in basis]
    elif isinstance(domain, Ball):
        vals = [_ball_moment(domain.center, domain.radius, e) for e in basis]
    elif isinstance(domain, Annulus):
        vals = [_ball_moment(domain.center, domain.outer_radius, e)
                - _ball_moment(domain.center, domain.inner_radius, e) for e in basis]
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    return MomentVector(domain.dim, max_degree, np.array(vals))


# -- sampling ----------------------------------------------------------------------

class SamplingError(RuntimeError):
    pass


def sample_uniform(domain: MomentDomain, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. uniform points on ``domain`` as a ``(count, n)`` array."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    box = domain.bounding_box()
    lo, hi = np.array(box.lower), np.array(box.upper)
    if isinstance(domain, Box):
        return lo + (hi - lo) * rng.random((count, domain.dim))
    rate = domain.volume() / box.volume()
    if rate < 0.01:
        raise SamplingError(f"rejection acceptance rate {rate:.3g} is below 1%")
    out = []
    have = 0
    while have < count:
        batch = max(64, int(1.2 * (count - have) / rate))
        pts = lo + (hi - lo) * rng.random((batch, domain.dim))
        pts = pts[domain.contains(pts)]
        out.append(pts)
        have += len(pts)
    return np.concatenate(out)[:count]


def inequality_mismatch(s: SemialgebraicSet, count: int = 2000, seed: int = 0) -> float:
    """Fraction of bounding-box samples where the inequalities and the domain disagree."""
    box = s.moment_domain.bounding_box()
    pad = 0.1 * (np.array(box.upper) - np.array(box.lower))
    wide = Box(tuple(np.array(box.lower) - pad), tuple(np.array(box.upper) + pad))
    pts = sample_uniform(wide, count, seed)
    return float(np.mean(s.contains_many(pts) != s.moment_domain.contains(pts)))
