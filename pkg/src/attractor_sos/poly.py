"""Sparse multivariate polynomials over float coefficients.

Terms are stored as ``{exponent tuple: coefficient}``. Iteration, printing and
every coefficient vector produced by this package use graded-lexicographic
order: total degree first, then lexicographic with ``x_1`` as the most
significant variable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

Exponent = Tuple[int, ...]


def grlex_key(e: Exponent):
    """Sort key realising graded-lex order."""
    return (sum(e), tuple(-a for a in e))


@lru_cache(maxsize=None)
def _basis_cached(n: int, d: int) -> Tuple[Exponent, ...]:
    out = []
    for deg in range(d + 1):
        block = []
        for combo in combinations_with_replacement(range(n), deg):
            e = [0] * n
            for i in combo:
                e[i] += 1
            block.append(tuple(e))
        block.sort(key=grlex_key)
        out.extend(block)
    return tuple(out)


def monomial_basis(n: int, d: int) -> List[Exponent]:
    """All exponents of total degree <= d in graded-lex order.

    The result has ``comb(n + d, n)`` entries.
    """
    if n < 1 or d < 0:
        raise ValueError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
    return list(_basis_cached(n, d))


def exponents_of_degree(n: int, d: int) -> List[Exponent]:
    return [e for e in _basis_cached(n, d) if sum(e) == d]


class Polynomial:
    """Immutable sparse polynomial in ``dim`` variables."""

    __slots__ = ("dim", "_terms", "_hash")

    def __init__(self, dim: int, terms: Mapping[Exponent, float] | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        clean: Dict[Exponent, float] = {}
        if terms:
            for e, c in terms.items():
                e = tuple(int(a) for a in e)
                if len(e) != dim:
                    raise ValueError(f"exponent {e} does not have length {dim}")
                if any(a < 0 for a in e):
                    raise ValueError(f"negative exponent {e}")
                c = float(c)
                if c != 0.0:
                    clean[e] = clean.get(e, 0.0) + c
            clean = {e: c for e, c in clean.items() if c != 0.0}
        self.dim = dim
        self._terms = dict(sorted(clean.items(), key=lambda t: grlex_key(t[0])))
        self._hash = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def _raw(cls, dim: int, terms: Dict[Exponent, float]) -> "Polynomial":
        # trusted path: terms already canonical except for ordering
        p = cls.__new__(cls)
        p.dim = dim
        p._terms = dict(sorted(((e, c) for e, c in terms.items() if c != 0.0),
                               key=lambda t: grlex_key(t[0])))
        p._hash = None
        return p

    @classmethod
    def zero(cls, dim: int) -> "Polynomial":
        return cls(dim)

    @classmethod
    def constant(cls, dim: int, value: float) -> "Polynomial":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def variable(cls, dim: int, index: int) -> "Polynomial":
        e = [0] * dim
        e[index] = 1
        return cls(dim, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, exponent: Sequence[int], coeff: float = 1.0) -> "Polynomial":
        return cls(len(exponent), {tuple(exponent): coeff})

    @classmethod
    def from_coefficients(cls, dim: int, basis: Sequence[Exponent],
                          coeffs: Iterable[float]) -> "Polynomial":
        return cls(dim, dict(zip(basis, coeffs)))

    # -- accessors ---------------------------------------------------------
    @property
    def terms(self) -> Dict[Exponent, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, e: Exponent) -> float:
        return self._terms.get(tuple(e), 0.0)

    def coefficients(self, basis: Sequence[Exponent]) -> np.ndarray:
        """Coefficient vector over ``basis``; raises if a term falls outside."""
        index = {e: i for i, e in enumerate(basis)}
        out = np.zeros(len(basis))
        for e, c in self._terms.items():
            if e not in index:
                raise ValueError(f"term {e} not in the supplied basis")
            out[index[e]] = c
        return out

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dim, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dim == other.dim and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dim, tuple(self._terms.items())))
        return self._hash

    # -- arithmetic --------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.dim, float(other))
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial._raw(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.dim, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = float(other)
            return Polynomial._raw(self.dim, {e: c * other for e, c in self._terms.items()})
        other = self._coerce(other)
        out: Dict[Exponent, float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial._raw(self.dim, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self * (1.0 / float(other))
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        result = Polynomial.constant(self.dim, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- calculus and evaluation --------------------------------------------
    def diff(self, i: int) -> "Polynomial":
        out = {}
        for e, c in self._terms.items():
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = c * e[i]
        return Polynomial._raw(self.dim, out)

    def __call__(self, point) -> float:
        return evaluate(self, point)

    def eval_many(self, points) -> np.ndarray:
        """Evaluate at each row of an ``(m, dim)`` array."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have {pts.shape[1]} columns, expected {self.dim}")
        if not self._terms:
            return np.zeros(pts.shape[0])
        exps = np.array(list(self._terms.keys()), dtype=int)
        coeffs = np.array(list(self._terms.values()))
        maxdeg = exps.max(axis=0)
        out = np.zeros(pts.shape[0])
        # per-variable power tables keep this O(terms * points)
        powers = [np.vander(pts[:, i], int(maxdeg[i]) + 1, increasing=True)
                  for i in range(self.dim)]
        for row, c in zip(exps, coeffs):
            term = np.full(pts.shape[0], c)
            for i, a in enumerate(row):
                if a:
                    term = term * powers[i][:, a]
            out += term
        return out

    # -- printing ------------------------------------------------------------
    def to_string(self, variables: Sequence[str] | None = None) -> str:
        names = list(variables) if variables else default_names(self.dim)
        if not self._terms:
            return "0"
        parts = []
        for e, c in self._terms.items():
            factors = []
            for name, a in zip(names, e):
                if a == 1:
                    factors.append(name)
                elif a > 1:
                    factors.append(f"{name}^{a}")
            mag = abs(c)
            if factors:
                body = "*".join(factors) if mag == 1.0 else repr(mag) + "*" + "*".join(factors)
            else:
                body = repr(mag)
            if not parts:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)

    def __str__(self):
        return self.to_string()

    def __repr__(self):
        return f"Polynomial({self.dim}, {self.to_string()!r})"


def default_names(n: int) -> List[str]:
    if n <= 3:
        return ["x", "y", "z"][:n]
    return [f"x{i + 1}" for i in range(n)]


@dataclass(frozen=True)
class PolynomialMap:
    """A polynomial map R^n -> R^n (vector field or discrete map)."""

    components: Tuple[Polynomial, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("a polynomial map needs at least one component")
        n = comps[0].dim
        if any(c.dim != n for c in comps):
            raise ValueError("components must share one dimension")
        if len(comps) != n:
            raise ValueError(f"map has {len(comps)} components but dimension {n}")

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    def __call__(self, point) -> np.ndarray:
        return np.array([evaluate(c, point) for c in self.components])

    def eval_many(self, points) -> np.ndarray:
        return np.stack([c.eval_many(points) for c in self.components], axis=1)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    @classmethod
    def identity(cls, n: int) -> "PolynomialMap":
        return cls(tuple(Polynomial.variable(n, i) for i in range(n)))

    @classmethod
    def parse(cls, texts: Sequence[str], variables: Sequence[str]) -> "PolynomialMap":
        return cls(tuple(parse_polynomial(t, variables) for t in texts))


# -- operations ----------------------------------------------------------------

def poly_arith(a: Polynomial, b: Polynomial, op: str) -> Polynomial:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown operation {op!r}")


class _PowerCache:
    """Lazily computed powers of each component of a map."""

    def __init__(self, f: PolynomialMap):
        self.f = f
        self.cache: List[Dict[int, Polynomial]] = [
            {0: Polynomial.constant(f.dim, 1.0), 1: c} for c in f.components]

    def power(self, i: int, k: int) -> Polynomial:
        table = self.cache[i]
        if k not in table:
            table[k] = self.power(i, k - 1) * self.f.components[i]
        return table[k]


class Composer:
    """Composes many polynomials with one fixed map, sharing monomial images."""

    def __init__(self, f: PolynomialMap):
        self.f = f
        self._powers = _PowerCache(f)
        self._mono: Dict[Exponent, Polynomial] = {(0,) * f.dim: Polynomial.constant(f.dim, 1.0)}

    def monomial_image(self, e: Exponent) -> Polynomial:
        """``x^e`` evaluated at ``f(x)``, expanded."""
        e = tuple(e)
        hit = self._mono.get(e)
        if hit is not None:
            return hit
        # peel off the last nonzero variable so prefixes get reused
        j = max(i for i, a in enumerate(e) if a)
        rest = list(e)
        rest[j] = 0
        rest = tuple(rest)
        img = self.monomial_image(rest) * self._powers.power(j, e[j])
        self._mono[e] = img
        return img

    def __call__(self, v: Polynomial) -> Polynomial:
        if v.dim != self.f.dim:
            raise ValueError(f"dimension mismatch: {v.dim} vs {self.f.dim}")
        out: Dict[Exponent, float] = {}
        for e, c in v.items():
            for e2, c2 in self.monomial_image(e).items():
                out[e2] = out.get(e2, 0.0) + c * c2
        return Polynomial._raw(v.dim, out)


def compose(v: Polynomial, f: PolynomialMap) -> Polynomial:
    """Return ``v(f(x))`` fully expanded."""
    return Composer(f)(v)


def lie_derivative(v: Polynomial, f: PolynomialMap) -> Polynomial:
    """Return ``grad(v) . f``."""
    if v.dim != f.dim:
        raise ValueError(f"dimension mismatch: {v.dim} vs {f.dim}")
    out = Polynomial.zero(v.dim)
    for i, fi in enumerate(f.components):
        d = v.diff(i)
        if not d.is_zero():
            out = out + d * fi
    return out


def evaluate(p: Polynomial, point) -> float:
    x = np.asarray(point, dtype=float).ravel()
    if x.shape[0] != p.dim:
        raise ValueError(f"point has length {x.shape[0]}, expected {p.dim}")
    total = 0.0
    for e, c in p.items():
        term = c
        for xi, a in zip(x, e):
            if a:
                term *= xi ** a
        total += term
    return float(total)


def affine_substitute(p: Polynomial, center, scale) -> Polynomial:
    """Return ``p(center + scale * u)`` as a polynomial in ``u`` (diagonal scale)."""
    n = p.dim
    comps = tuple(
        Polynomial(n, {tuple(int(j == i) for j in range(n)): float(scale[i]),
                       (0,) * n: float(center[i])})
        for i in range(n))
    return compose(p, PolynomialMap(comps))


# -- parsing -----------------------------------------------------------------------

class PolynomialSyntaxError(ValueError):
    """Raised for malformed polynomial text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}" +
                         (f" in {text!r}" if text else ""))


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))")


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolynomialSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if kind == "op" and value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := unary (('*'|'/') unary)*
    # unary  := ('+'|'-') unary | power
    # power  := atom ('^' integer)?
    # atom   := number | name | '(' expr ')'

    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.vars = {name: i for i, name in enumerate(variables)}
        self.n = len(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise PolynomialSyntaxError(message, tok[2], self.text)

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            self.error("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op_tok = self.take()
            q = self.unary()
            if op_tok[1] == "*":
                p = p * q
            else:
                if q.degree > 0:
                    raise PolynomialSyntaxError("division by a non-constant expression",
                                                op_tok[2], self.text)
                c = q.coefficient((0,) * self.n)
                if c == 0.0:
                    raise PolynomialSyntaxError("division by zero", op_tok[2], self.text)
                p = p / c
        return p

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            p = self.unary()
            return -p if tok[1] == "-" else p
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            tok = self.peek()
            if tok[0] == "op" and tok[1] in ("+", "-"):
                self.take()
                sign = -1 if tok[1] == "-" else 1
                tok = self.peek()
            if tok[0] != "num":
                self.error("exponent must be a nonnegative integer literal")
            self.take()
            value = float(tok[1])
            if sign < 0 and value != 0:
                self.error("negative exponent", tok)
            if value != int(value) or not re.fullmatch(r"\d+", tok[1]):
                self.error("non-integer exponent", tok)
            base = base ** int(value)
        return base

    def atom(self):
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            return Polynomial.constant(self.n, float(value))
        if kind == "name":
            if value not in self.vars:
                raise PolynomialSyntaxError(f"unknown variable {value!r}", pos, self.text)
            return Polynomial.variable(self.n, self.vars[value])
        if kind == "op" and value == "(":
            p = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return p
        self.error("expected a number, variable or '('", tok)


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse ``text`` over the ordered variable names into canonical form.

    Supports ``+ - * /`` (division by constants only), ``^`` or ``**`` with
    nonnegative integer exponents, parentheses and decimal literals.
    """
    if not variables:
        raise ValueError("at least one variable name is required")
    if len(set(variables)) != len(variables):
        raise ValueError(f"duplicate variable names in {list(variables)}")
    return _Parser(text, variables).parse()


def num_monomials(n: int, d: int) -> int:
    return math.comb(n + d, n)
