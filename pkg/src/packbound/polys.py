"""Exact sparse arithmetic for trivariate polynomials in (h, v, w).

A polynomial is a mapping from exponent triples (e_h, e_v, e_w) to exact
rational coefficients (fractions.Fraction); zero coefficients are never
stored, so structural equality is true polynomial identity.  Floats are
dyadic rationals, so converting incoming float data to Fraction is exact
and nothing in this module ever rounds.

The module also provides the seven base polynomials used to assemble
certificate monomials, and the graded basis of (h, v)-symmetric polynomials
w^a * (hv)^b * (h+v)^c with a + 2b + c <= d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

Exponent = Tuple[int, int, int]
Number = Union[int, float, Fraction]

#: Total degrees of the seven base polynomials, in index order 1..7.
BASE_DEGREES = (2, 1, 2, 1, 2, 1, 0)


def _frac(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(x)


@dataclass(frozen=True)
class GeometricParams:
    """Geometric parameters (r, R) of one problem instance, with 0 < r < R.

    Both are substituted numerically (as exact rationals) into the base
    polynomials at construction time; they are never kept symbolic.
    """

    r: float
    R: float

    def __post_init__(self) -> None:
        if not (self.r > 0 and math.isfinite(self.r) and math.isfinite(self.R)):
            raise ValueError(f"r must be positive and finite, got r={self.r}")
        if not self.r < self.R:
            raise ValueError(f"require 0 < r < R, got r={self.r}, R={self.R}")

    @property
    def r2(self) -> Fraction:
        return _frac(self.r) ** 2

    @property
    def R2(self) -> Fraction:
        return _frac(self.R) ** 2


class Polynomial:
    """Sparse trivariate polynomial with exact rational coefficients.

    Immutable by convention: no method mutates `terms` after construction.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Exponent, Number] | None = None):
        clean: Dict[Exponent, Fraction] = {}
        if terms:
            for expo, coeff in terms.items():
                q = _frac(coeff)
                if q != 0:
                    clean[(int(expo[0]), int(expo[1]), int(expo[2]))] = q
        self.terms = clean

    # ---- constructors ----

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @classmethod
    def constant(cls, c: Number) -> "Polynomial":
        return cls({(0, 0, 0): c})

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        idx = {"h": 0, "v": 1, "w": 2}[name]
        expo = [0, 0, 0]
        expo[idx] = 1
        return cls({tuple(expo): 1})

    # ---- ring operations ----

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = dict(self.terms)
        for expo, coeff in other.terms.items():
            out[expo] = out.get(expo, Fraction(0)) + coeff
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        out: Dict[Exponent, Fraction] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                expo = (ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2])
                out[expo] = out.get(expo, Fraction(0)) + ca * cb
        return Polynomial(out)

    def scale(self, factor: Number) -> "Polynomial":
        q = _frac(factor)
        return Polynomial({e: c * q for e, c in self.terms.items()})

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative powers are not defined")
        result = Polynomial.constant(1)
        for _ in range(n):
            result = result * self
        return result

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.terms == other.terms

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for expo in sorted(self.terms, key=lambda e: (sum(e), e)):
            mono = "".join(
                f"{n}^{e}" if e > 1 else n
                for n, e in zip("hvw", expo)
                if e > 0
            )
            parts.append(f"{self.terms[expo]}*{mono}" if mono else f"{self.terms[expo]}")
        return "Polynomial(" + " + ".join(parts) + ")"

    # ---- queries ----

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0."""
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def is_symmetric_hv(self) -> bool:
        """True iff swapping the h and v exponents maps the term map to itself."""
        return all(
            self.terms.get((ev, eh, ew)) == coeff
            for (eh, ev, ew), coeff in self.terms.items()
        )

    def evaluate(self, point: Sequence[Number]) -> Fraction:
        """Exact evaluation at (h, v, w); every input is rationalised first."""
        h, v, w = (_frac(x) for x in point)
        total = Fraction(0)
        for (eh, ev, ew), coeff in self.terms.items():
            total += coeff * h**eh * v**ev * w**ew
        return total


def ring_combine(op: str, p: Polynomial, q: Polynomial) -> Polynomial:
    """Combine two polynomials with 'add' or 'mul' (exact, zero terms pruned)."""
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    raise ValueError(f"unknown ring operation {op!r}; expected 'add' or 'mul'")


def make_base_polynomial(index: int, params: GeometricParams) -> Polynomial:
    """Expanded form of base polynomial P_index with (r, R) substituted.

    The seven building blocks, all symmetric under swapping (h, v):

        P1 = (h - r^2)(v - r^2)      P2 = h + v - 2 r^2
        P3 = h v - w^2               P4 = h + v - 2 w - r^2
        P5 = (R^2 - h)(R^2 - v)      P6 = 2 R^2 - h - v
        P7 = 1
    """
    r2, R2 = params.r2, params.R2
    if index == 1:
        return Polynomial({(1, 1, 0): 1, (1, 0, 0): -r2, (0, 1, 0): -r2, (0, 0, 0): r2 * r2})
    if index == 2:
        return Polynomial({(1, 0, 0): 1, (0, 1, 0): 1, (0, 0, 0): -2 * r2})
    if index == 3:
        return Polynomial({(1, 1, 0): 1, (0, 0, 2): -1})
    if index == 4:
        return Polynomial({(1, 0, 0): 1, (0, 1, 0): 1, (0, 0, 1): -2, (0, 0, 0): -r2})
    if index == 5:
        return Polynomial({(1, 1, 0): 1, (1, 0, 0): -R2, (0, 1, 0): -R2, (0, 0, 0): R2 * R2})
    if index == 6:
        return Polynomial({(1, 0, 0): -1, (0, 1, 0): -1, (0, 0, 0): 2 * R2})
    if index == 7:
        return Polynomial.constant(1)
    raise ValueError(f"base polynomial index must be in 1..7, got {index}")


def base_values_at(point: Sequence[Number], params: GeometricParams) -> Tuple[Fraction, ...]:
    """Exact values (P1(point), ..., P7(point)); faster than expanding each P."""
    h, v, w = (_frac(x) for x in point)
    r2, R2 = params.r2, params.R2
    return (
        (h - r2) * (v - r2),
        h + v - 2 * r2,
        h * v - w * w,
        h + v - 2 * w - r2,
        (R2 - h) * (R2 - v),
        2 * R2 - h - v,
        Fraction(1),
    )


def degree_and_symmetry(p: Polynomial) -> Tuple[int, bool]:
    """(total degree, symmetric under (h, v) swap)."""
    return p.degree(), p.is_symmetric_hv()


@dataclass(frozen=True)
class BasisElement:
    """Exponents of the symmetric basis element w^a * (hv)^b * (h+v)^c."""

    a: int
    b: int
    c: int

    @property
    def grade(self) -> int:
        return self.a + 2 * self.b + self.c


def basis_enumerate(d: int) -> Tuple[BasisElement, ...]:
    """All (a, b, c) with a + 2b + c <= d, in the frozen graded order.

    Ordering: ascending grade a + 2b + c, then descending a, then descending
    b.  c is determined by (grade, a, b) within a grade, so the key is total.
    The grade-major order makes basis_enumerate(d1) a prefix of
    basis_enumerate(d2) whenever d1 <= d2, which downstream block nesting
    relies on.
    """
    if d < 0:
        raise ValueError(f"basis degree must be nonnegative, got {d}")
    elems = [
        BasisElement(a, b, c)
        for a in range(d + 1)
        for b in range((d - a) // 2 + 1)
        for c in range(d - a - 2 * b + 1)
    ]
    elems.sort(key=lambda e: (e.grade, -e.a, -e.b))
    return tuple(elems)


def basis_to_poly(e: BasisElement) -> Polynomial:
    """Expanded sparse form of w^a * (hv)^b * (h+v)^c; always (h,v)-symmetric."""
    terms: Dict[Exponent, Fraction] = {}
    for i in range(e.c + 1):
        expo = (e.b + i, e.b + e.c - i, e.a)
        terms[expo] = terms.get(expo, Fraction(0)) + math.comb(e.c, i)
    return Polynomial(terms)


def evaluate_basis(elements: Iterable[BasisElement], point: Sequence[Number]) -> Tuple[Fraction, ...]:
    """Exact values of basis elements at a point, via powers of (w, hv, h+v)."""
    h, v, w = (_frac(x) for x in point)
    sig, pi = h + v, h * v
    cache: Dict[Tuple[str, int], Fraction] = {}

    def power(name: str, base: Fraction, n: int) -> Fraction:
        key = (name, n)
        if key not in cache:
            cache[key] = base**n
        return cache[key]

    return tuple(
        power("w", w, e.a) * power("p", pi, e.b) * power("s", sig, e.c)
        for e in elements
    )
