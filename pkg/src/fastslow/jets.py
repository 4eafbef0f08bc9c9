"""Truncated multivariate power series ("jets") over float coefficients.

A :class:`Jet` is a polynomial in ``num_vars`` variables, truncated at total
degree ``order``, stored sparsely: a coefficient is present if and only if it
is nonzero.  Jets are immutable after construction and all operations are
pure functions, so they can be shared freely across threads.

Truncation bookkeeping: differentiating a jet lowers the degree up to which
its coefficients agree with those of the underlying function.  Every jet
carries a ``reliable_order`` recording that degree; operations propagate it
conservatively.  Callers that need full-order derivatives must build their
source jets one order higher.
"""

from __future__ import annotations

import math
from functools import total_ordering
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConstantTermError, StructuralError

__all__ = [
    "MultiIndex",
    "Jet",
    "JetVector",
    "jet_mul",
    "jet_compose",
    "jetvector_compose",
    "jet_partial",
    "jet_shift",
    "jet_reciprocal",
    "jet_matrix_inverse",
    "max_coeff_diff",
    "monomials_of_degree",
    "count_monomials",
]


@total_ordering
class MultiIndex:
    """Exponent tuple of a monomial with its total degree cached.

    The ordering is graded lexicographic (compare degree first, then the
    exponent tuple), which is a total order on indices of equal arity.
    """

    __slots__ = ("exponents", "degree", "_hash")

    def __init__(self, exponents: Iterable[int]):
        exps = tuple(int(e) for e in exponents)
        for e in exps:
            if e < 0:
                raise StructuralError(f"negative exponent in {exps}")
        self.exponents = exps
        self.degree = sum(exps)
        self._hash = hash(exps)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndex) and self.exponents == other.exponents

    def __lt__(self, other: "MultiIndex") -> bool:
        return (self.degree, self.exponents) < (other.degree, other.exponents)

    def __len__(self) -> int:
        return len(self.exponents)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(a + b for a, b in zip(self.exponents, other.exponents))

    def replace(self, var: int, exponent: int) -> "MultiIndex":
        exps = list(self.exponents)
        exps[var] = exponent
        return MultiIndex(exps)

    def __repr__(self) -> str:
        return f"MultiIndex{self.exponents}"


def _as_index(key, num_vars: int) -> MultiIndex:
    idx = key if isinstance(key, MultiIndex) else MultiIndex(key)
    if len(idx) != num_vars:
        raise StructuralError(f"index {idx} has arity {len(idx)}, expected {num_vars}")
    return idx


class Jet:
    """Sparse truncated polynomial.  Treat instances as immutable."""

    __slots__ = ("num_vars", "order", "coeffs", "reliable_order")

    def __init__(self, num_vars: int, order: int,
                 coeffs: Mapping | None = None,
                 reliable_order: int | None = None):
        if num_vars < 1:
            raise StructuralError(f"num_vars must be >= 1, got {num_vars}")
        if order < 1:
            raise StructuralError(f"order must be >= 1, got {order}")
        self.num_vars = num_vars
        self.order = order
        clean: dict[MultiIndex, float] = {}
        if coeffs:
            for key, value in coeffs.items():
                idx = _as_index(key, num_vars)
                if idx.degree > order:
                    raise StructuralError(
                        f"index {idx} exceeds truncation order {order}")
                c = float(value)
                if c != 0.0:
                    clean[idx] = c
        self.coeffs = clean
        self.reliable_order = order if reliable_order is None else min(int(reliable_order), order)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, num_vars: int, order: int) -> "Jet":
        return cls(num_vars, order)

    @classmethod
    def constant(cls, num_vars: int, order: int, value: float) -> "Jet":
        return cls(num_vars, order, {(0,) * num_vars: value})

    @classmethod
    def variable(cls, num_vars: int, order: int, var: int) -> "Jet":
        if not 0 <= var < num_vars:
            raise StructuralError(f"variable index {var} out of range")
        exps = [0] * num_vars
        exps[var] = 1
        return cls(num_vars, order, {tuple(exps): 1.0})

    @classmethod
    def from_terms(cls, num_vars: int, order: int, terms: Mapping) -> "Jet":
        return cls(num_vars, order, terms)

    # -- queries -----------------------------------------------------------

    def coefficient(self, key) -> float:
        return self.coeffs.get(_as_index(key, self.num_vars), 0.0)

    @property
    def constant_term(self) -> float:
        return self.coeffs.get(MultiIndex((0,) * self.num_vars), 0.0)

    @property
    def valuation(self) -> int:
        """Smallest degree with a nonzero coefficient (order+1 if zero jet)."""
        if not self.coeffs:
            return self.order + 1
        return min(i.degree for i in self.coeffs)

    @property
    def degree_max(self) -> int:
        return max((i.degree for i in self.coeffs), default=0)

    def terms(self) -> Iterator[tuple[MultiIndex, float]]:
        for idx in sorted(self.coeffs):
            yield idx, self.coeffs[idx]

    def max_abs(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def linear_coefficients(self) -> np.ndarray:
        out = np.zeros(self.num_vars)
        for var in range(self.num_vars):
            exps = [0] * self.num_vars
            exps[var] = 1
            out[var] = self.coeffs.get(MultiIndex(exps), 0.0)
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, Jet)
                and self.num_vars == other.num_vars
                and self.order == other.order
                and self.coeffs == other.coeffs)

    __hash__ = None  # mutable dict inside; identity hashing would mislead

    def __repr__(self) -> str:
        inner = ", ".join(f"{i.exponents}:{c:g}" for i, c in list(self.terms())[:6])
        more = "" if len(self.coeffs) <= 6 else f", ... ({len(self.coeffs)} terms)"
        return f"Jet[{self.num_vars} vars, order {self.order}]({inner}{more})"

    # -- arithmetic --------------------------------------------------------

    def _check_shape(self, other: "Jet") -> None:
        if self.num_vars != other.num_vars or self.order != other.order:
            raise StructuralError(
                f"jet shape mismatch: ({self.num_vars} vars, order {self.order}) vs "
                f"({other.num_vars} vars, order {other.order})")

    def __add__(self, other) -> "Jet":
        if isinstance(other, (int, float)):
            other = Jet.constant(self.num_vars, self.order, other)
        self._check_shape(other)
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = out.get(idx, 0.0) + c
        return Jet(self.num_vars, self.order, out,
                   min(self.reliable_order, other.reliable_order))

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(self.num_vars, self.order,
                   {i: -c for i, c in self.coeffs.items()}, self.reliable_order)

    def __sub__(self, other) -> "Jet":
        if isinstance(other, (int, float)):
            other = Jet.constant(self.num_vars, self.order, other)
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, (int, float)):
            s = float(other)
            return Jet(self.num_vars, self.order,
                       {i: c * s for i, c in self.coeffs.items()}, self.reliable_order)
        return jet_mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Jet":
        if k < 0:
            raise StructuralError("negative jet powers are not defined")
        result = Jet.constant(self.num_vars, self.order, 1.0)
        base = self
        n = k
        while n:
            if n & 1:
                result = jet_mul(result, base)
            n >>= 1
            if n:
                base = jet_mul(base, base)
        return result

    # -- calculus and structure ---------------------------------------------

    def partial(self, var: int) -> "Jet":
        return jet_partial(self, var)

    def evaluate(self, point: Sequence[float]) -> float:
        if len(point) != self.num_vars:
            raise StructuralError(
                f"point has {len(point)} coordinates, expected {self.num_vars}")
        p = [float(x) for x in point]
        total = 0.0
        for idx, c in self.coeffs.items():
            term = c
            for x, e in zip(p, idx.exponents):
                if e == 1:
                    term *= x
                elif e:
                    term *= x ** e
            total += term
        return total

    def degree_part(self, degree: int) -> "Jet":
        return Jet(self.num_vars, self.order,
                   {i: c for i, c in self.coeffs.items() if i.degree == degree},
                   self.reliable_order)

    def degree_cap(self, degree: int) -> "Jet":
        """Drop every term of total degree above ``degree`` (order unchanged)."""
        return Jet(self.num_vars, self.order,
                   {i: c for i, c in self.coeffs.items() if i.degree <= degree},
                   self.reliable_order)

    def truncated(self, order: int) -> "Jet":
        return Jet(self.num_vars, order,
                   {i: c for i, c in self.coeffs.items() if i.degree <= order},
                   min(self.reliable_order, order))

    def extend_vars(self, num_vars: int, positions: Sequence[int] | None = None) -> "Jet":
        """Embed into a larger variable space; old variable ``i`` becomes
        variable ``positions[i]`` (identity prefix by default)."""
        if positions is None:
            positions = range(self.num_vars)
        positions = list(positions)
        if len(positions) != self.num_vars or len(set(positions)) != self.num_vars:
            raise StructuralError("positions must map variables injectively")
        out = {}
        for idx, c in self.coeffs.items():
            exps = [0] * num_vars
            for old, new in enumerate(positions):
                exps[new] = idx.exponents[old]
            out[tuple(exps)] = c
        return Jet(num_vars, self.order, out, self.reliable_order)

    def subs_zero(self, var: int) -> "Jet":
        """Set one variable to zero (drop every term that carries it)."""
        return Jet(self.num_vars, self.order,
                   {i: c for i, c in self.coeffs.items() if i.exponents[var] == 0},
                   self.reliable_order)

    def drop_var(self, var: int) -> "Jet":
        """Remove a variable the jet does not depend on."""
        out = {}
        for idx, c in self.coeffs.items():
            if idx.exponents[var] != 0:
                raise StructuralError(f"jet depends on variable {var}")
            exps = idx.exponents[:var] + idx.exponents[var + 1:]
            out[exps] = c
        return Jet(self.num_vars - 1, self.order, out, self.reliable_order)

    def div_var(self, var: int, power: int = 1) -> "Jet":
        """Exact division by ``x_var**power``; every term must carry it."""
        out = {}
        for idx, c in self.coeffs.items():
            e = idx.exponents[var]
            if e < power:
                raise StructuralError(
                    f"term {idx.exponents} not divisible by variable {var}^{power}")
            out[idx.replace(var, e - power)] = c
        return Jet(self.num_vars, self.order, out, self.reliable_order)

    def mul_var(self, var: int, power: int = 1) -> "Jet":
        """Multiply by ``x_var**power``, discarding terms past the order."""
        out = {}
        for idx, c in self.coeffs.items():
            if idx.degree + power <= self.order:
                out[idx.replace(var, idx.exponents[var] + power)] = c
        return Jet(self.num_vars, self.order, out, self.reliable_order)

    def shift(self, offsets: Sequence[float]) -> "Jet":
        return jet_shift(self, offsets)


class JetVector:
    """A tuple of jets sharing ``num_vars`` and ``order``.

    May be empty, in which case the shape must be given explicitly."""

    __slots__ = ("components", "num_vars", "order")

    def __init__(self, components: Sequence[Jet],
                 num_vars: int | None = None, order: int | None = None):
        comps = tuple(components)
        if comps:
            num_vars = comps[0].num_vars if num_vars is None else num_vars
            order = comps[0].order if order is None else order
            for c in comps:
                if c.num_vars != num_vars or c.order != order:
                    raise StructuralError("jet vector components disagree on shape")
        elif num_vars is None or order is None:
            raise StructuralError("empty jet vector needs explicit num_vars/order")
        self.components = comps
        self.num_vars = num_vars
        self.order = order

    @classmethod
    def zeros(cls, n: int, num_vars: int, order: int) -> "JetVector":
        return cls([Jet.zero(num_vars, order) for _ in range(n)], num_vars, order)

    @classmethod
    def identity(cls, num_vars: int, order: int) -> "JetVector":
        return cls([Jet.variable(num_vars, order, i) for i in range(num_vars)])

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self) -> Iterator[Jet]:
        return iter(self.components)

    def __getitem__(self, i: int) -> Jet:
        return self.components[i]

    def __eq__(self, other) -> bool:
        return (isinstance(other, JetVector)
                and self.num_vars == other.num_vars
                and self.order == other.order
                and self.components == other.components)

    __hash__ = None

    def __add__(self, other: "JetVector") -> "JetVector":
        if len(other) != len(self):
            raise StructuralError("jet vector length mismatch")
        return JetVector([a + b for a, b in zip(self, other)],
                         self.num_vars, self.order)

    def __sub__(self, other: "JetVector") -> "JetVector":
        if len(other) != len(self):
            raise StructuralError("jet vector length mismatch")
        return JetVector([a - b for a, b in zip(self, other)],
                         self.num_vars, self.order)

    def __mul__(self, scalar: float) -> "JetVector":
        return JetVector([c * scalar for c in self], self.num_vars, self.order)

    __rmul__ = __mul__

    def evaluate(self, point: Sequence[float]) -> np.ndarray:
        return np.array([c.evaluate(point) for c in self])

    def linear_matrix(self) -> np.ndarray:
        """Coefficient matrix of the linear part, shape (len, num_vars)."""
        return np.array([c.linear_coefficients() for c in self]).reshape(
            len(self.components), self.num_vars)

    def constant_vector(self) -> np.ndarray:
        return np.array([c.constant_term for c in self])

    def degree_part(self, degree: int) -> "JetVector":
        return JetVector([c.degree_part(degree) for c in self],
                         self.num_vars, self.order)

    def degree_cap(self, degree: int) -> "JetVector":
        return JetVector([c.degree_cap(degree) for c in self],
                         self.num_vars, self.order)

    def max_abs(self) -> float:
        return max((c.max_abs() for c in self.components), default=0.0)

    def __repr__(self) -> str:
        return (f"JetVector[{len(self.components)} comps, {self.num_vars} vars, "
                f"order {self.order}]")


# -- operations -------------------------------------------------------------


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Truncated product; bilinear, monomials past the order are discarded."""
    a._check_shape(b)
    order = a.order
    out: dict[MultiIndex, float] = {}
    for ia, ca in a.coeffs.items():
        da = ia.degree
        for ib, cb in b.coeffs.items():
            if da + ib.degree > order:
                continue
            key = ia + ib
            out[key] = out.get(key, 0.0) + ca * cb
    return Jet(a.num_vars, order, out, min(a.reliable_order, b.reliable_order))


def _as_jetvector(inner) -> JetVector:
    if isinstance(inner, JetVector):
        return inner
    return JetVector(list(inner))


def jet_compose(outer: Jet, inner) -> Jet:
    """Composition ``outer(inner_1, ..., inner_m)`` truncated at the shared
    order.  Inner components must have zero constant term; affine shifts are
    handled by re-expanding about the working point (see :func:`jet_shift`)."""
    inner = _as_jetvector(inner)
    if len(inner) != outer.num_vars:
        raise StructuralError(
            f"outer has {outer.num_vars} variables but inner has {len(inner)} components")
    if inner.order != outer.order:
        raise StructuralError("composition requires matching truncation orders")
    for k, comp in enumerate(inner):
        if comp.constant_term != 0.0:
            raise ConstantTermError(
                f"inner component {k} has constant term {comp.constant_term!r}")

    m2, order = inner.num_vars, outer.order
    reliable = min([outer.reliable_order] + [c.reliable_order for c in inner])
    powers: dict[tuple[int, int], Jet] = {}

    def power(s: int, e: int) -> Jet:
        key = (s, e)
        got = powers.get(key)
        if got is None:
            got = inner[s] if e == 1 else jet_mul(power(s, e - 1), inner[s])
            powers[key] = got
        return got

    acc: dict[MultiIndex, float] = {}
    zero_key = MultiIndex((0,) * m2)
    for idx, c in outer.coeffs.items():
        term: Jet | None = None
        for s, e in enumerate(idx.exponents):
            if e:
                p = power(s, e)
                term = p if term is None else jet_mul(term, p)
        if term is None:  # constant monomial of the outer jet
            acc[zero_key] = acc.get(zero_key, 0.0) + c
            continue
        for i2, c2 in term.coeffs.items():
            acc[i2] = acc.get(i2, 0.0) + c * c2
    return Jet(m2, order, acc, reliable)


def jetvector_compose(outer: JetVector, inner) -> JetVector:
    inner = _as_jetvector(inner)
    return JetVector([jet_compose(c, inner) for c in outer],
                     inner.num_vars, inner.order)


def jet_partial(a: Jet, var: int) -> Jet:
    """Partial derivative.  The stored truncation order is kept, but the
    reliable order drops by one: top-degree coefficients of the derivative
    cannot be recovered from a truncated source."""
    if not 0 <= var < a.num_vars:
        raise StructuralError(f"variable index {var} out of range")
    out: dict[MultiIndex, float] = {}
    for idx, c in a.coeffs.items():
        e = idx.exponents[var]
        if e:
            out[idx.replace(var, e - 1)] = c * e
    return Jet(a.num_vars, a.order, out, a.reliable_order - 1)


def jet_shift(a: Jet, offsets: Sequence[float]) -> Jet:
    """Re-expand about a shifted point: returns ``q`` with ``q(d) = a(d + c)``.

    Exact on the stored polynomial; the usual truncation caveat applies to
    the underlying function."""
    if len(offsets) != a.num_vars:
        raise StructuralError("offset arity mismatch")
    cur = a
    for var, c in enumerate(offsets):
        c = float(c)
        if c == 0.0:
            continue
        out: dict[MultiIndex, float] = {}
        for idx, coeff in cur.coeffs.items():
            e = idx.exponents[var]
            for j in range(e + 1):
                val = coeff * math.comb(e, j) * c ** (e - j)
                if val == 0.0:
                    continue
                key = idx.replace(var, j)
                out[key] = out.get(key, 0.0) + val
        cur = Jet(a.num_vars, a.order, out, cur.reliable_order)
    return cur


def jet_reciprocal(a: Jet) -> Jet:
    """Multiplicative inverse of a jet with nonzero constant term."""
    a0 = a.constant_term
    if a0 == 0.0:
        raise StructuralError("cannot invert a jet with zero constant term")
    x = Jet.constant(a.num_vars, a.order, 1.0 / a0)
    two = Jet.constant(a.num_vars, a.order, 2.0)
    for _ in range(max(1, math.ceil(math.log2(a.order + 1))) + 1):
        x = jet_mul(x, two - jet_mul(a, x))
    return Jet(a.num_vars, a.order, x.coeffs,
               min(a.reliable_order, a.order))


def _mat_id(p: int, num_vars: int, order: int) -> list[list[Jet]]:
    return [[Jet.constant(num_vars, order, 1.0 if i == j else 0.0)
             for j in range(p)] for i in range(p)]


def jet_matrix_mul(A: Sequence[Sequence[Jet]], B: Sequence[Sequence[Jet]]) -> list[list[Jet]]:
    rows, inner, cols = len(A), len(B), len(B[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = jet_mul(A[i][0], B[0][j])
            for k in range(1, inner):
                acc = acc + jet_mul(A[i][k], B[k][j])
            row.append(acc)
        out.append(row)
    return out


def jet_matrix_inverse(M: Sequence[Sequence[Jet]]) -> list[list[Jet]]:
    """Inverse of a square jet matrix with invertible constant part, by
    Newton iteration (quadratic convergence in achieved degree)."""
    p = len(M)
    if any(len(row) != p for row in M):
        raise StructuralError("jet matrix must be square")
    num_vars, order = M[0][0].num_vars, M[0][0].order
    M0 = np.array([[M[i][j].constant_term for j in range(p)] for i in range(p)])
    X0 = np.linalg.inv(M0)  # raises LinAlgError if singular constant part
    X = [[Jet.constant(num_vars, order, X0[i, j]) for j in range(p)] for i in range(p)]
    two_id = [[Jet.constant(num_vars, order, 2.0 if i == j else 0.0)
               for j in range(p)] for i in range(p)]
    for _ in range(max(1, math.ceil(math.log2(order + 1))) + 1):
        MX = jet_matrix_mul(M, X)
        corr = [[two_id[i][j] - MX[i][j] for j in range(p)] for i in range(p)]
        X = jet_matrix_mul(X, corr)
    return X


def max_coeff_diff(a: Jet | JetVector, b: Jet | JetVector) -> float:
    """Largest absolute coefficient of ``a - b``."""
    if isinstance(a, JetVector):
        return max((max_coeff_diff(x, y) for x, y in zip(a, b)), default=0.0)
    diff = a - b
    return diff.max_abs()


def monomials_of_degree(num_vars: int, degree: int) -> list[MultiIndex]:
    """All exponent tuples of the given total degree, graded-lex sorted."""
    out: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], remaining: int, slots: int) -> None:
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for e in range(remaining + 1):
            rec(prefix + (e,), remaining - e, slots - 1)

    rec((), degree, num_vars)
    idxs = [MultiIndex(t) for t in out]
    idxs.sort()
    return idxs


def count_monomials(num_vars: int, degree: int) -> int:
    return math.comb(degree + num_vars - 1, degree)
