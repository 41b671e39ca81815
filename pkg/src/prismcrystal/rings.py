"""Exact scalars, p-adic valuations and the truncated series ring K[eps]/eps^m.

The base field is Q.  Every value carries its truncation level ``m`` and
binary operations refuse to mix levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Scalar = Union[int, Fraction]

INF = math.inf


class TruncationMismatch(ValueError):
    pass


class NonUnit(ArithmeticError):
    pass


def rational(x) -> Fraction:
    """Coerce ints, Fractions and ``"num/den"`` strings to a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if hasattr(x, "numerator") and hasattr(x, "denominator"):
        return Fraction(int(x.numerator), int(x.denominator))
    raise TypeError(f"cannot read {x!r} as an exact rational")


def rational_str(x: Fraction) -> str:
    return str(rational(x))


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class ValuationConfig:
    p: int = 2

    def __post_init__(self):
        if not is_prime(self.p):
            raise ValueError(f"p={self.p} is not prime")


def _vp_int(n: int, p: int) -> int:
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def vp(x, cfg: ValuationConfig):
    """Exact p-adic valuation of a rational; ``math.inf`` for zero."""
    x = rational(x)
    if x == 0:
        return INF
    return _vp_int(abs(x.numerator), cfg.p) - _vp_int(x.denominator, cfg.p)


@dataclass(frozen=True)
class TruncatedSeries:
    """Element of K[eps]/eps^m; ``coeffs[k]`` is the coefficient of eps^k."""

    m: int
    coeffs: tuple

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("truncation level must be positive")
        cs = tuple(rational(c) for c in self.coeffs)
        if len(cs) != self.m:
            raise ValueError(f"expected {self.m} coefficients, got {len(cs)}")
        object.__setattr__(self, "coeffs", cs)

    # constructors
    @classmethod
    def zero(cls, m: int) -> "TruncatedSeries":
        return cls(m, (0,) * m)

    @classmethod
    def const(cls, c, m: int) -> "TruncatedSeries":
        return cls(m, (c,) + (0,) * (m - 1))

    @classmethod
    def one(cls, m: int) -> "TruncatedSeries":
        return cls.const(1, m)

    @classmethod
    def eps(cls, m: int, power: int = 1) -> "TruncatedSeries":
        cs = [0] * m
        if power < m:
            cs[power] = 1
        return cls(m, cs)

    @classmethod
    def from_list(cls, cs: Sequence, m: int | None = None) -> "TruncatedSeries":
        cs = list(cs)
        if m is None:
            m = len(cs)
        cs = cs[:m]  # higher terms vanish in K[eps]/eps^m
        return cls(m, cs + [0] * (m - len(cs)))

    # predicates
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def is_unit(self) -> bool:
        return self.coeffs[0] != 0

    def order(self):
        """eps-adic order (index of first nonzero coefficient), inf for zero."""
        for k, c in enumerate(self.coeffs):
            if c != 0:
                return k
        return INF

    def _check(self, other: "TruncatedSeries"):
        if self.m != other.m:
            raise TruncationMismatch(f"truncation levels differ: {self.m} vs {other.m}")

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            self._check(other)
            return other
        return TruncatedSeries.const(rational(other), self.m)

    # arithmetic
    def __add__(self, other):
        other = self._coerce(other)
        return TruncatedSeries(self.m, [a + b for a, b in zip(self.coeffs, other.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(self.m, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            c = rational(other)
            return TruncatedSeries(self.m, [c * a for a in self.coeffs])
        self._check(other)
        m = self.m
        out = [Fraction(0)] * m
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j in range(m - i):
                b = other.coeffs[j]
                if b:
                    out[i + j] += a * b
        return TruncatedSeries(m, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = TruncatedSeries.one(self.m)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def inverse(self) -> "TruncatedSeries":
        c0 = self.coeffs[0]
        if c0 == 0:
            raise NonUnit(f"{self} has zero constant term")
        m = self.m
        inv = [Fraction(0)] * m
        inv[0] = 1 / c0
        for k in range(1, m):
            s = sum(self.coeffs[j] * inv[k - j] for j in range(1, k + 1))
            inv[k] = -s / c0
        return TruncatedSeries(m, inv)

    def __truediv__(self, other):
        if isinstance(other, TruncatedSeries):
            return self * other.inverse()
        return self * (1 / rational(other))

    def euler(self) -> "TruncatedSeries":
        """The derivation eps d/deps."""
        return TruncatedSeries(self.m, [k * c for k, c in enumerate(self.coeffs)])

    def valuation(self, cfg: ValuationConfig):
        return min((vp(c, cfg) for c in self.coeffs), default=INF)

    def __repr__(self):
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            mon = "" if k == 0 else ("eps" if k == 1 else f"eps^{k}")
            if not mon:
                terms.append(str(c))
            elif c == 1:
                terms.append(mon)
            else:
                terms.append(f"({c})*{mon}")
        return f"TS[m={self.m}](" + (" + ".join(terms) or "0") + ")"

    def to_record(self) -> dict:
        return {"m": self.m, "coeffs": [rational_str(c) for c in self.coeffs]}

    @classmethod
    def from_record(cls, rec: dict) -> "TruncatedSeries":
        return cls(int(rec["m"]), [rational(c) for c in rec["coeffs"]])


def ts_mul(x: TruncatedSeries, y: TruncatedSeries) -> TruncatedSeries:
    return x * y


def ts_inv(x: TruncatedSeries) -> TruncatedSeries:
    return x.inverse()


def euler_derivation(x: TruncatedSeries) -> TruncatedSeries:
    return x.euler()


def _zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(Fraction(0))
    return out


class SeriesMatrix:
    """Matrix over K[eps]/eps^m stored as eps-graded blocks.

    ``blocks[k]`` is the rational matrix multiplying eps^k.  Multiplication is
    the truncated convolution of blocks.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        b = np.array(blocks, dtype=object)
        if b.ndim != 3:
            raise ValueError("blocks must have shape (m, rows, cols)")
        self.blocks = np.vectorize(rational, otypes=[object])(b) if b.size else b

    @property
    def m(self) -> int:
        return self.blocks.shape[0]

    @property
    def shape(self) -> tuple:
        return self.blocks.shape[1:]

    @classmethod
    def zeros(cls, r: int, m: int, cols: int | None = None) -> "SeriesMatrix":
        return cls(_zeros((m, r, r if cols is None else cols)))

    @classmethod
    def identity(cls, r: int, m: int) -> "SeriesMatrix":
        b = _zeros((m, r, r))
        for i in range(r):
            b[0, i, i] = Fraction(1)
        return cls(b)

    @classmethod
    def scalar(cls, s: TruncatedSeries, r: int) -> "SeriesMatrix":
        b = _zeros((s.m, r, r))
        for k, c in enumerate(s.coeffs):
            for i in range(r):
                b[k, i, i] = c
        return cls(b)

    @classmethod
    def constant(cls, rows: Sequence[Sequence], m: int) -> "SeriesMatrix":
        """Matrix whose entries are constant rationals."""
        rows = [[rational(x) for x in row] for row in rows]
        r, c = len(rows), len(rows[0]) if rows else 0
        b = _zeros((m, r, c))
        b[0] = np.array(rows, dtype=object).reshape(r, c)
        return cls(b)

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[TruncatedSeries]]) -> "SeriesMatrix":
        r = len(entries)
        c = len(entries[0])
        m = entries[0][0].m
        b = _zeros((m, r, c))
        for i in range(r):
            for j in range(c):
                e = entries[i][j]
                if e.m != m:
                    raise TruncationMismatch("entries have different truncation levels")
                for k in range(m):
                    b[k, i, j] = e.coeffs[k]
        return cls(b)

    @classmethod
    def elementary(cls, r: int, i: int, j: int, m: int, value=1) -> "SeriesMatrix":
        b = _zeros((m, r, r))
        b[0, i, j] = rational(value)
        return cls(b)

    def entry(self, i: int, j: int) -> TruncatedSeries:
        return TruncatedSeries(self.m, list(self.blocks[:, i, j]))

    def entries(self) -> list:
        r, c = self.shape
        return [[self.entry(i, j) for j in range(c)] for i in range(r)]

    def _check(self, other: "SeriesMatrix"):
        if self.m != other.m:
            raise TruncationMismatch(f"truncation levels differ: {self.m} vs {other.m}")

    def __add__(self, other: "SeriesMatrix") -> "SeriesMatrix":
        self._check(other)
        return SeriesMatrix(self.blocks + other.blocks)

    def __sub__(self, other: "SeriesMatrix") -> "SeriesMatrix":
        self._check(other)
        return SeriesMatrix(self.blocks - other.blocks)

    def __neg__(self) -> "SeriesMatrix":
        return SeriesMatrix(-self.blocks)

    def __matmul__(self, other: "SeriesMatrix") -> "SeriesMatrix":
        self._check(other)
        m = self.m
        out = _zeros((m, self.shape[0], other.shape[1]))
        for i in range(m):
            a = self.blocks[i]
            if not a.any():
                continue
            for j in range(m - i):
                bj = other.blocks[j]
                if bj.any():
                    out[i + j] = out[i + j] + a.dot(bj)
        return SeriesMatrix(out)

    def scale(self, s) -> "SeriesMatrix":
        """Multiply by a rational or a TruncatedSeries scalar."""
        if not isinstance(s, TruncatedSeries):
            c = rational(s)
            return SeriesMatrix(self.blocks * c)
        if s.m != self.m:
            raise TruncationMismatch("scalar and matrix truncation levels differ")
        m = self.m
        out = _zeros(self.blocks.shape)
        for k, c in enumerate(s.coeffs):
            if c == 0:
                continue
            for j in range(m - k):
                out[k + j] = out[k + j] + self.blocks[j] * c
        return SeriesMatrix(out)

    def euler(self) -> "SeriesMatrix":
        """Entrywise eps d/deps."""
        out = self.blocks.copy()
        for k in range(self.m):
            out[k] = out[k] * k
        return SeriesMatrix(out)

    def mod_eps(self) -> np.ndarray:
        return self.blocks[0].copy()

    def is_zero(self) -> bool:
        return not self.blocks.any()

    def __eq__(self, other) -> bool:
        if not isinstance(other, SeriesMatrix):
            return NotImplemented
        return self.blocks.shape == other.blocks.shape and bool((self.blocks == other.blocks).all())

    def __hash__(self):
        return hash(tuple(self.blocks.flat))

    def __pow__(self, n: int) -> "SeriesMatrix":
        out = SeriesMatrix.identity(self.shape[0], self.m)
        for _ in range(n):
            out = out @ self
        return out

    def flatten(self) -> np.ndarray:
        """K-linear matrix on K^(m*r) (basis index e*r + j for eps^e * e_j)."""
        m = self.m
        r, c = self.shape
        out = _zeros((m * r, m * c))
        for e_out in range(m):
            for e_in in range(e_out + 1):
                out[e_out * r:(e_out + 1) * r, e_in * c:(e_in + 1) * c] = self.blocks[e_out - e_in]
        return out

    def valuation(self, cfg: ValuationConfig):
        return min((vp(c, cfg) for c in self.blocks.flat), default=INF)

    def __repr__(self):
        return f"SeriesMatrix(m={self.m}, shape={self.shape}, blocks={self.blocks.tolist()})"

    def to_record(self) -> list:
        """Per-eps-degree rational-string grids."""
        return [[[rational_str(x) for x in row] for row in blk] for blk in self.blocks.tolist()]

    @classmethod
    def from_record(cls, grids, m: int | None = None) -> "SeriesMatrix":
        grids = list(grids)
        if not grids:
            raise ValueError("empty matrix record")
        r = len(grids[0])
        c = len(grids[0][0]) if r else 0
        if m is None:
            m = len(grids)
        if len(grids) > m:
            raise ValueError(f"matrix record has {len(grids)} eps-degrees, truncation is {m}")
        b = _zeros((m, r, c))
        for k, g in enumerate(grids):
            if len(g) != r or any(len(row) != c for row in g):
                raise ValueError("ragged matrix record")
            for i in range(r):
                for j in range(c):
                    b[k, i, j] = rational(g[i][j])
        return cls(b)


def euler_operator(r: int, m: int) -> np.ndarray:
    """Flattened eps d/deps acting on (K[eps]/eps^m)^r."""
    out = _zeros((m * r, m * r))
    for e in range(m):
        for j in range(r):
            out[e * r + j, e * r + j] = Fraction(e)
    return out


def rational_identity(n: int) -> np.ndarray:
    out = _zeros((n, n))
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def frac_matrix(rows: Iterable[Iterable]) -> np.ndarray:
    rows = [[rational(x) for x in row] for row in rows]
    return np.array(rows, dtype=object).reshape(len(rows), len(rows[0]) if rows else 0)
