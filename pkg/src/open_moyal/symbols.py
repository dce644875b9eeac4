"""
Polynomial Weyl symbols in one degree of freedom.

A symbol is a sparse polynomial in (q, p) with complex coefficients. The star
product is evaluated through its bidifferential expansion, which terminates
for polynomials, so every operation here is exact up to floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

#: coefficients below this magnitude are dropped after arithmetic
PRUNE_TOL = 1e-30

Monomial = tuple[int, int]
Number = Union[int, float, complex]


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ValueError(f"phase point must be finite, got ({self.q}, {self.p})")


@dataclass(frozen=True)
class StarAlgebra:
    """Context carrying the value of hbar shared by a family of symbols."""

    hbar: float = 1.0

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    def symbol(self, terms: Mapping[Monomial, Number]) -> PolySymbol:
        return PolySymbol(terms, self)

    def const(self, c: Number) -> PolySymbol:
        return PolySymbol({(0, 0): c}, self)

    def monomial(self, a: int, b: int, c: Number = 1.0) -> PolySymbol:
        return PolySymbol({(a, b): c}, self)

    @property
    def q(self) -> PolySymbol:
        return self.monomial(1, 0)

    @property
    def p(self) -> PolySymbol:
        return self.monomial(0, 1)

    @property
    def zero(self) -> PolySymbol:
        return PolySymbol({}, self)


def _canonical(terms: Mapping[Monomial, Number]) -> dict[Monomial, complex]:
    out = {}
    for (a, b), c in terms.items():
        if a < 0 or b < 0:
            raise ValueError(f"negative exponent in monomial {(a, b)}")
        c = complex(c)
        if abs(c) >= PRUNE_TOL:
            out[(int(a), int(b))] = c
    return out


class PolySymbol:
    """Immutable sparse polynomial ``sum c_ab q^a p^b``.

    Arithmetic (``+``, ``-``, scalar ``*``) is the ordinary commutative one;
    use :func:`star_product` for the operator product.
    """

    __slots__ = ("_terms", "algebra")

    def __init__(self, terms: Mapping[Monomial, Number], algebra: StarAlgebra):
        object.__setattr__(self, "_terms", _canonical(terms))
        object.__setattr__(self, "algebra", algebra)

    def __setattr__(self, name, value):
        raise AttributeError("PolySymbol is immutable")

    @property
    def terms(self) -> dict[Monomial, complex]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((a + b for a, b in self._terms), default=-1)

    def coeff(self, a: int, b: int) -> complex:
        return self._terms.get((a, b), 0j)

    def is_zero(self) -> bool:
        return not self._terms

    def is_real(self, tol: float = 0.0) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def real(self) -> PolySymbol:
        return PolySymbol({k: c.real for k, c in self._terms.items()}, self.algebra)

    def _check(self, other: PolySymbol):
        if self.algebra != other.algebra:
            raise ValueError(
                f"symbols from different algebras (hbar={self.algebra.hbar} "
                f"vs hbar={other.algebra.hbar})"
            )

    def _lift(self, other) -> PolySymbol:
        if isinstance(other, PolySymbol):
            self._check(other)
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return self.algebra.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0j) + c
        return PolySymbol(out, self.algebra)

    __radd__ = __add__

    def __neg__(self):
        return PolySymbol({k: -c for k, c in self._terms.items()}, self.algebra)

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return PolySymbol({k: c * other for k, c in self._terms.items()}, self.algebra)
        if isinstance(other, PolySymbol):
            self._check(other)
            out: dict[Monomial, complex] = {}
            for (a, b), c in self._terms.items():
                for (a2, b2), c2 in other._terms.items():
                    key = (a + a2, b + b2)
                    out[key] = out.get(key, 0j) + c * c2
            return PolySymbol(out, self.algebra)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * (1.0 / other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, PolySymbol):
            return NotImplemented
        return self.algebra == other.algebra and self._terms == other._terms

    def __hash__(self):
        return hash((self.algebra, frozenset(self._terms.items())))

    def allclose(self, other: PolySymbol, atol: float = 0.0, rtol: float = 0.0) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        for k in keys:
            x, y = self.coeff(*k), other.coeff(*k)
            if abs(x - y) > atol + rtol * max(abs(x), abs(y)):
                return False
        return True

    def diff(self, dq: int = 0, dp: int = 0) -> PolySymbol:
        out = {}
        for (a, b), c in self._terms.items():
            if a >= dq and b >= dp:
                out[(a - dq, b - dp)] = c * _falling(a, dq) * _falling(b, dp)
        return PolySymbol(out, self.algebra)

    def __call__(self, q, p):
        return evaluate(self, q, p)

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for (a, b), c in sorted(self._terms.items()):
            cs = f"{c.real:g}" if c.imag == 0 else f"({c.real:g}{c.imag:+g}j)"
            parts.append(f"{cs} * q^{a} p^{b}")
        return " + ".join(parts)

    def __repr__(self):
        return f"PolySymbol({self}, hbar={self.algebra.hbar})"


def _falling(n: int, k: int) -> int:
    """n (n-1) ... (n-k+1)."""
    out = 1
    for i in range(k):
        out *= n - i
    return out


def _bidiff(A: PolySymbol, B: PolySymbol, k: int) -> dict[Monomial, complex]:
    """Order-k term ``sum_j C(k,j) (-1)^j (d_q^{k-j} d_p^j A)(d_p^{k-j} d_q^j B)``."""
    out: dict[Monomial, complex] = {}
    for (a, b), ca in A._terms.items():
        for (c, d), cb in B._terms.items():
            for j in range(k + 1):
                r = k - j  # q-derivatives on A, p-derivatives on B
                if r > a or j > b or r > d or j > c:
                    continue
                w = math.comb(k, j) * (-1) ** j
                w *= _falling(a, r) * _falling(b, j) * _falling(d, r) * _falling(c, j)
                key = (a - r + c - j, b - j + d - r)
                out[key] = out.get(key, 0j) + w * ca * cb
    return out


def _max_order(A: PolySymbol, B: PolySymbol) -> int:
    return max(min(A.degree, B.degree), 0)


def star_product(A: PolySymbol, B: PolySymbol) -> PolySymbol:
    """Moyal star product ``A * B``.

    Uses ``A(q + i hbar/2 d_p, p - i hbar/2 d_q) B`` expanded in powers of hbar;
    the series stops at the smaller of the two total degrees.
    """
    A._check(B)
    h = A.algebra.hbar
    out: dict[Monomial, complex] = {}
    for k in range(_max_order(A, B) + 1):
        pref = (0.5j * h) ** k / math.factorial(k)
        for key, c in _bidiff(A, B, k).items():
            out[key] = out.get(key, 0j) + pref * c
    return PolySymbol(out, A.algebra)


def moyal_bracket(A: PolySymbol, B: PolySymbol) -> PolySymbol:
    """``(A*B - B*A) / (i hbar)``.

    Even orders cancel identically, so only odd orders are summed. This avoids
    the O(hbar) cancellation of forming both star products and subtracting.
    """
    A._check(B)
    h = A.algebra.hbar
    out: dict[Monomial, complex] = {}
    for k in range(1, _max_order(A, B) + 1, 2):
        pref = (-1) ** ((k - 1) // 2) * (0.5 * h) ** (k - 1) / math.factorial(k)
        for key, c in _bidiff(A, B, k).items():
            out[key] = out.get(key, 0j) + pref * c
    return PolySymbol(out, A.algebra)


def poisson_bracket(A: PolySymbol, B: PolySymbol) -> PolySymbol:
    A._check(B)
    return A.diff(dq=1) * B.diff(dp=1) - A.diff(dp=1) * B.diff(dq=1)


def evaluate(A: PolySymbol, q, p=None):
    """Value of ``A`` at a phase point, or elementwise on arrays ``q``, ``p``."""
    if isinstance(q, PhasePoint):
        q, p = q.q, q.p
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    total = np.zeros(np.broadcast(q, p).shape, dtype=complex)
    for (a, b), c in A._terms.items():
        total = total + c * q**a * p**b
    return total[()] if total.ndim == 0 else total
