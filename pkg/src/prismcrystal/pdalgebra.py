"""Truncated divided-power polynomial rings over K[eps]/eps^m.

Elements are stored densely: one slot per (PD monomial of total degree <= N,
eps-power < m), coefficients are exact ``gmpy2.mpq``.  Products are computed
from a precomputed, degree-pruned pair table, so both factors' zero slots are
skipped cheaply.  The PD basis is what is stored: ``x^[a] * x^[b] =
C(a+b, a) x^[a+b]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial, gcd
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import mpq

from .rings import SeriesMatrix, TruncatedSeries, TruncationMismatch, rational, rational_str

Exponent = Tuple[int, ...]

_ZERO = mpq(0)


def _mpq(x) -> mpq:
    if isinstance(x, mpq):
        return x
    x = rational(x)
    return mpq(x.numerator, x.denominator)


def _frac(x: mpq) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


def _zero_vec(n: int) -> np.ndarray:
    v = np.empty(n, dtype=object)
    v.fill(_ZERO)
    return v


class RingMismatch(ValueError):
    pass


class PDRing:
    """K[eps]/eps^m {v_1, ..., v_k}_pd truncated at total PD degree ``bound``."""

    def __init__(self, varnames: Sequence[str], bound: int, m: int):
        if bound < 0:
            raise ValueError("degree bound must be non-negative")
        if m < 1:
            raise ValueError("truncation level must be positive")
        self.varnames = tuple(varnames)
        if len(set(self.varnames)) != len(self.varnames):
            raise ValueError("duplicate variable names")
        self.bound = bound
        self.m = m
        nv = len(self.varnames)
        monos = []
        for deg in range(bound + 1):
            for combo in itertools.combinations_with_replacement(range(nv), deg):
                e = [0] * nv
                for v in combo:
                    e[v] += 1
                monos.append(tuple(e))
        if nv == 0:
            monos = [()]
        # combinations_with_replacement already walks each degree; dedupe keeps order
        seen = {}
        for e in monos:
            seen.setdefault(e, len(seen))
        self.monomials: list = list(seen)
        self.index: Dict[Exponent, int] = seen
        self.degrees = np.array([sum(e) for e in self.monomials], dtype=np.int64)
        self.nslots = len(self.monomials) * m
        self._table = None

    @property
    def key(self):
        return (self.varnames, self.bound, self.m)

    def __eq__(self, other):
        return isinstance(other, PDRing) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"PDRing(vars={list(self.varnames)}, bound={self.bound}, m={self.m})"

    def var_index(self, name: str) -> int:
        try:
            return self.varnames.index(name)
        except ValueError:
            raise KeyError(f"{name!r} is not a variable of {self}") from None

    def slot(self, mono: int, e: int) -> int:
        return mono * self.m + e

    def _pair_table(self):
        if self._table is not None:
            return self._table
        I, J, K, C = [], [], [], []
        degs = self.degrees
        for i, ei in enumerate(self.monomials):
            room = self.bound - degs[i]
            for j, ej in enumerate(self.monomials):
                if degs[j] > room:
                    break  # monomials are sorted by degree
                s = tuple(a + b for a, b in zip(ei, ej))
                c = 1
                for a, b in zip(ei, ej):
                    if a and b:
                        c *= comb(a + b, a)
                I.append(i)
                J.append(j)
                K.append(self.index[s])
                C.append(c)
        I = np.array(I, dtype=np.int64)
        J = np.array(J, dtype=np.int64)
        K = np.array(K, dtype=np.int64)
        Cm = np.array([mpq(c) for c in C], dtype=object)
        m = self.m
        ea, eb = zip(*[(x, y) for x in range(m) for y in range(m - x)])
        ea = np.array(ea, dtype=np.int64)
        eb = np.array(eb, dtype=np.int64)
        SI = (I[:, None] * m + ea[None, :]).ravel()
        SJ = (J[:, None] * m + eb[None, :]).ravel()
        SK = (K[:, None] * m + (ea + eb)[None, :]).ravel()
        SC = np.repeat(Cm, len(ea))
        order = np.argsort(SK, kind="stable")
        self._table = (SI[order], SJ[order], SK[order], SC[order])
        self._int_binomials = np.repeat(np.array(C, dtype=np.int64), len(ea))[order]
        self._starts = np.flatnonzero(np.r_[True, self._table[2][1:] != self._table[2][:-1]])
        # the same pairs grouped by right factor, for sparse right operands
        by_j = np.argsort(SJ, kind="stable")
        offsets = np.searchsorted(SJ[by_j], np.arange(self.nslots + 1))
        self._segments = (SI[by_j], SK[by_j], SC[by_j], offsets)
        self._segment_binomials = np.repeat(np.array(C, dtype=np.int64), len(ea))[by_j]
        return self._table

    def _segment_table(self):
        self._pair_table()
        return self._segments

    # element constructors
    def zero(self) -> "PDElement":
        return PDElement(self, _zero_vec(self.nslots))

    def const(self, c) -> "PDElement":
        v = _zero_vec(self.nslots)
        if isinstance(c, TruncatedSeries):
            if c.m != self.m:
                raise TruncationMismatch("coefficient truncation differs from ring")
            for e, x in enumerate(c.coeffs):
                v[e] = _mpq(x)
        else:
            v[0] = _mpq(c)
        return PDElement(self, v)

    def one(self) -> "PDElement":
        return self.const(1)

    def eps(self, power: int = 1) -> "PDElement":
        v = _zero_vec(self.nslots)
        if power < self.m:
            v[power] = mpq(1)
        return PDElement(self, v)

    def monomial(self, exponent: Exponent, coeff=1) -> "PDElement":
        exponent = tuple(exponent)
        v = _zero_vec(self.nslots)
        if sum(exponent) <= self.bound:
            base = self.index[exponent] * self.m
            if isinstance(coeff, TruncatedSeries):
                for e, x in enumerate(coeff.coeffs):
                    v[base + e] = _mpq(x)
            else:
                v[base] = _mpq(coeff)
        return PDElement(self, v)

    def var(self, name: str, power: int = 1) -> "PDElement":
        """The divided power ``name^[power]``."""
        e = [0] * len(self.varnames)
        e[self.var_index(name)] = power
        return self.monomial(tuple(e))

    def from_terms(self, terms: Mapping[Exponent, object]) -> "PDElement":
        out = _zero_vec(self.nslots)
        for exp, c in terms.items():
            exp = tuple(exp)
            if len(exp) != len(self.varnames):
                raise ValueError(f"exponent {exp} has wrong length")
            if sum(exp) > self.bound:
                continue
            base = self.index[exp] * self.m
            if isinstance(c, TruncatedSeries):
                if c.m != self.m:
                    raise TruncationMismatch("coefficient truncation differs from ring")
                for e, x in enumerate(c.coeffs):
                    out[base + e] += _mpq(x)
            else:
                out[base] += _mpq(c)
        return PDElement(self, out)

    def embed(self, x: "PDElement") -> "PDElement":
        """Re-index an element of a ring whose variables are a subset of ours."""
        if x.ring == self:
            return x
        if x.ring.m != self.m:
            raise TruncationMismatch("cannot embed across truncation levels")
        pos = [self.var_index(v) for v in x.ring.varnames]
        out = _zero_vec(self.nslots)
        nz = np.flatnonzero(x.data != 0)
        for s in nz:
            mono, e = divmod(int(s), x.ring.m)
            exp = [0] * len(self.varnames)
            for p, k in zip(pos, x.ring.monomials[mono]):
                exp[p] = k
            if sum(exp) <= self.bound:
                out[self.index[tuple(exp)] * self.m + e] = x.data[s]
        return PDElement(self, out)


@lru_cache(maxsize=64)
def pd_ring(varnames: Tuple[str, ...], bound: int, m: int) -> PDRing:
    return PDRing(varnames, bound, m)


class PDElement:
    """Element of a :class:`PDRing`; immutable by convention."""

    __slots__ = ("ring", "data")

    def __init__(self, ring: PDRing, data: np.ndarray):
        self.ring = ring
        self.data = data

    # structure
    @property
    def varnames(self):
        return self.ring.varnames

    @property
    def bound(self):
        return self.ring.bound

    @property
    def m(self):
        return self.ring.m

    def _same(self, other: "PDElement"):
        if self.ring != other.ring:
            raise RingMismatch(f"{self.ring} vs {other.ring}")

    def is_zero(self) -> bool:
        return not (self.data != 0).any()

    @property
    def terms(self) -> Dict[Exponent, TruncatedSeries]:
        """Sparse view: exponent -> nonzero TruncatedSeries coefficient."""
        m = self.ring.m
        out = {}
        nz = np.flatnonzero(self.data != 0)
        for mono in sorted({int(s) // m for s in nz}):
            cs = [_frac(self.data[mono * m + e]) for e in range(m)]
            out[self.ring.monomials[mono]] = TruncatedSeries(m, cs)
        return out

    def coefficient(self, exponent: Exponent) -> TruncatedSeries:
        exponent = tuple(exponent)
        m = self.ring.m
        if sum(exponent) > self.ring.bound:
            return TruncatedSeries.zero(m)
        base = self.ring.index[exponent] * m
        return TruncatedSeries(m, [_frac(x) for x in self.data[base:base + m]])

    def constant_term(self) -> TruncatedSeries:
        return self.coefficient((0,) * len(self.ring.varnames))

    def low_degree(self):
        """Smallest total PD degree carrying a nonzero coefficient."""
        nz = np.flatnonzero(self.data != 0)
        if not len(nz):
            return None
        return int(self.ring.degrees[nz // self.ring.m].min())

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, PDElement):
            other = self.ring.const(other)
        self._same(other)
        return PDElement(self.ring, self.data + other.data)

    __radd__ = __add__

    def __neg__(self):
        return PDElement(self.ring, -self.data)

    def __sub__(self, other):
        if not isinstance(other, PDElement):
            other = self.ring.const(other)
        self._same(other)
        return PDElement(self.ring, self.data - other.data)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "PDElement":
        """Multiply by a rational or a TruncatedSeries scalar."""
        if isinstance(c, TruncatedSeries):
            return self * self.ring.const(c)
        return PDElement(self.ring, self.data * _mpq(c))

    def __mul__(self, other):
        if not isinstance(other, PDElement):
            return self.scale(other)
        self._same(other)
        return PDElement(self.ring, _mul_data(self.ring, self.data, other.data))

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, n: int) -> "PDElement":
        if n < 0:
            raise ValueError("negative powers are not defined")
        out = self.ring.one()
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def divided_power(self, n: int) -> "PDElement":
        """``x^[n]``; over Q this is x^n / n!."""
        return (self ** n).scale(Fraction(1, factorial(n)))

    def __eq__(self, other):
        if not isinstance(other, PDElement):
            return NotImplemented
        return self.ring == other.ring and bool((self.data == other.data).all())

    def __hash__(self):
        return hash((self.ring.key, tuple(self.data)))

    def first_difference(self, other: "PDElement"):
        """Lowest-degree exponent where the two elements differ, or None."""
        self._same(other)
        diff = np.flatnonzero(self.data != other.data)
        if not len(diff):
            return None
        mono = int(diff[0]) // self.ring.m
        return self.ring.monomials[mono]

    def __repr__(self):
        names = self.ring.varnames
        parts = []
        for exp, c in self.terms.items():
            mon = "*".join(
                (f"{names[i]}^[{k}]" if k > 1 else names[i]) for i, k in enumerate(exp) if k
            )
            parts.append(f"{c.coeffs if c.m > 1 else c.coeffs[0]}" + (f"*{mon}" if mon else ""))
        return "PD(" + (" + ".join(parts) or "0") + ")"

    def to_record(self) -> dict:
        return {
            "varnames": list(self.ring.varnames),
            "bound": self.ring.bound,
            "m": self.ring.m,
            "terms": [
                {"exponent": list(exp), "coeff": [rational_str(c) for c in ts.coeffs]}
                for exp, ts in self.terms.items()
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PDElement":
        ring = pd_ring(tuple(rec["varnames"]), int(rec["bound"]), int(rec["m"]))
        terms = {}
        for t in rec["terms"]:
            terms[tuple(int(k) for k in t["exponent"])] = TruncatedSeries(
                ring.m, [rational(c) for c in t["coeff"]]
            )
        return ring.from_terms(terms)


_SPARSE_CUTOFF = 48
_INT64_LIMIT = (1 << 62)

_denominator = np.frompyfunc(lambda x: x.denominator, 1, 1)
_numerator = np.frompyfunc(lambda x: x.numerator, 1, 1)


def scaled_int64(arr: np.ndarray):
    """(ints, D) with arr == ints / D exactly, or None if int64 cannot hold it."""
    if arr.size == 0:
        return np.zeros(arr.shape, dtype=np.int64), 1
    dens = set(_denominator(arr).ravel().tolist())
    D = 1
    for den in dens:
        D = D * int(den) // gcd(D, int(den))
    nums = _numerator(arr * mpq(D))
    try:
        ints = nums.astype(np.int64)
    except OverflowError:
        return None
    if ints.size and int(np.abs(ints).max()) >= _INT64_LIMIT:
        return None
    return ints, D


def from_scaled(ints: np.ndarray, D: int) -> np.ndarray:
    """Exact mpq array ints / D."""
    out = np.empty(ints.shape, dtype=object)
    out.fill(_ZERO)
    nz = np.nonzero(ints)
    if len(nz[0]):
        Dq = mpq(D)
        out[nz] = [mpq(int(v)) / Dq for v in ints[nz].tolist()]
    return out


def _fits(*factors) -> bool:
    bound = 1
    for f in factors:
        bound *= int(f)
    return bound < _INT64_LIMIT


def _pair_products_int(ring: "PDRing", a, b, mask, inner: int):
    """Exact int64 evaluation of sum_{pairs} C * a[I] (x) b[J], or None on overflow risk."""
    sa = scaled_int64(a)
    sb = scaled_int64(b)
    if sa is None or sb is None:
        return None
    (ai, Da), (bi, Db) = sa, sb
    I, J, K, _ = ring._pair_table()
    Ci = ring._int_binomials[mask]
    Km = K[mask]
    starts = np.flatnonzero(np.r_[True, Km[1:] != Km[:-1]])
    longest = int(np.diff(np.r_[starts, len(Km)]).max())
    amax = int(np.abs(ai).max()) if ai.size else 0
    bmax = int(np.abs(bi).max()) if bi.size else 0
    if not _fits(amax or 1, bmax or 1, int(Ci.max()), inner, longest):
        return None
    Im, Jm = I[mask], J[mask]
    if ai.ndim == 1:
        vals = ai[Im] * bi[Jm] * Ci
    else:
        vals = np.matmul(ai[Im], bi[Jm]) * Ci.reshape(-1, 1, 1)
    sums = np.add.reduceat(vals, starts, axis=0)
    return Km[starts], sums, Da * Db


def normalize_scaled(ints: np.ndarray, D: int):
    g = int(np.gcd.reduce(ints)) if ints.size else 0
    g = gcd(g, D) if g else D
    if g > 1:
        return ints // g, D // g
    return ints, D


def mul_scaled(ring: PDRing, x, y):
    """Product of two scaled-int64 vectors (ints, D); None if int64 might overflow."""
    (ai, Da), (bi, Db) = x, y
    nza = ai != 0
    nzb = bi != 0
    na, nb = int(nza.sum()), int(nzb.sum())
    if not na or not nb:
        return np.zeros(ring.nslots, dtype=np.int64), 1
    if na < nb:
        ai, bi, nza, nzb, na, nb = bi, ai, nzb, nza, nb, na
    SI, SK, SC, off = ring._segment_table()
    cmax = int(ring._int_binomials.max())
    amax, bmax = int(np.abs(ai).max()), int(np.abs(bi).max())
    acc = np.zeros(ring.nslots, dtype=np.int64)
    if nb <= _SPARSE_CUTOFF:
        if not _fits(amax, bmax, cmax, nb):
            return None
        SCi = ring._segment_binomials
        for j in np.flatnonzero(nzb):
            lo, hi = off[j], off[j + 1]
            if lo == hi:
                continue
            Is = SI[lo:hi]
            sel = nza[Is]
            if sel.any():
                acc[SK[lo:hi][sel]] += ai[Is[sel]] * (SCi[lo:hi][sel] * bi[j])
        return normalize_scaled(acc, Da * Db)
    I, J, K, _ = ring._pair_table()
    mask = nza[I] & nzb[J]
    if not mask.any():
        return acc, 1
    Km = K[mask]
    starts = np.flatnonzero(np.r_[True, Km[1:] != Km[:-1]])
    longest = int(np.diff(np.r_[starts, len(Km)]).max())
    if not _fits(amax, bmax, cmax, longest):
        return None
    vals = ai[I[mask]] * bi[J[mask]] * ring._int_binomials[mask]
    acc[Km[starts]] = np.add.reduceat(vals, starts)
    return normalize_scaled(acc, Da * Db)


def _sparse_product_int(ring: PDRing, a, b, nza, nzb):
    sa = scaled_int64(a)
    sb = scaled_int64(b)
    if sa is None or sb is None:
        return None
    (ai, Da), (bi, Db) = sa, sb
    js = np.flatnonzero(nzb)
    SI, SK, SC, off = ring._segment_table()
    bound_c = int(ring._int_binomials.max()) if len(ring._int_binomials) else 1
    if not _fits(int(np.abs(ai).max()), int(np.abs(bi).max()), bound_c, len(js)):
        return None
    SCi = ring._segment_binomials
    acc = np.zeros(ring.nslots, dtype=np.int64)
    for j in js:
        lo, hi = off[j], off[j + 1]
        if lo == hi:
            continue
        Is = SI[lo:hi]
        sel = nza[Is]
        if not sel.any():
            continue
        acc[SK[lo:hi][sel]] += ai[Is[sel]] * (SCi[lo:hi][sel] * bi[j])
    return from_scaled(acc, Da * Db)


def _mul_data(ring: PDRing, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    nza = a != 0
    nzb = b != 0
    out = _zero_vec(ring.nslots)
    na, nb = int(nza.sum()), int(nzb.sum())
    if not na or not nb:
        return out
    if na < nb:
        a, b, nza, nzb, na, nb = b, a, nzb, nza, nb, na
    if nb <= _SPARSE_CUTOFF:
        fast = _sparse_product_int(ring, a, b, nza, nzb)
        if fast is not None:
            return fast
        # walk the few nonzero slots of b; K is injective on each segment
        SI, SK, SC, off = ring._segment_table()
        for j in np.flatnonzero(nzb):
            lo, hi = off[j], off[j + 1]
            if lo == hi:
                continue
            Is = SI[lo:hi]
            sel = nza[Is]
            if not sel.any():
                continue
            ks = SK[lo:hi][sel]
            out[ks] = out[ks] + a[Is[sel]] * (SC[lo:hi][sel] * b[j])
        return out
    I, J, K, C = ring._pair_table()
    mask = nza[I] & nzb[J]
    if not mask.any():
        return out
    fast = _pair_products_int(ring, a, b, mask, 1)
    if fast is not None:
        ks, sums, D = fast
        out[ks] = from_scaled(sums, D)
        return out
    Im, Jm, Km = I[mask], J[mask], K[mask]
    vals = a[Im] * b[Jm] * C[mask]
    starts = np.flatnonzero(np.r_[True, Km[1:] != Km[:-1]])
    out[Km[starts]] = np.add.reduceat(vals, starts)
    return out


def pd_mul(x: PDElement, y: PDElement) -> PDElement:
    return x * y


def pd_inv_one_plus(u: PDElement) -> PDElement:
    """(1 + u)^{-1} = sum_k (-u)^k for u in the PD augmentation ideal."""
    if not u.constant_term().is_zero():
        raise ValueError("pd_inv_one_plus needs an element with zero constant term")
    ring = u.ring
    out = ring.one()
    term = ring.one()
    neg = -u
    for _ in range(ring.bound):
        term = term * neg
        if term.is_zero():
            break
        out = out + term
    return out


def _zero_blocks(n: int, r: int, c: int) -> np.ndarray:
    v = np.empty((n, r, c), dtype=object)
    v.fill(_ZERO)
    return v


def _nonzero_slots(data: np.ndarray) -> np.ndarray:
    return (data != 0).reshape(data.shape[0], -1).any(axis=1)


class PDMatrix:
    """Matrix with PD-ring entries, stored as one (r x c) rational block per slot.

    ``data[s]`` is the rational matrix multiplying the slot monomial ``s``
    (PD monomial times a power of eps).  Products run the ring's pair table
    with block matrix multiplication, so matrix coefficients never leave
    vectorized storage.
    """

    __slots__ = ("ring", "data")

    def __init__(self, ring: PDRing, data: np.ndarray):
        if data.ndim != 3 or data.shape[0] != ring.nslots:
            raise ValueError("PDMatrix data must have shape (nslots, rows, cols)")
        self.ring = ring
        self.data = data

    @property
    def shape(self):
        return self.data.shape[1:]

    @classmethod
    def zeros(cls, ring: PDRing, r: int, c: Optional[int] = None) -> "PDMatrix":
        return cls(ring, _zero_blocks(ring.nslots, r, r if c is None else c))

    @classmethod
    def identity(cls, ring: PDRing, r: int) -> "PDMatrix":
        out = _zero_blocks(ring.nslots, r, r)
        for i in range(r):
            out[0, i, i] = mpq(1)
        return cls(ring, out)

    @classmethod
    def from_entries(cls, rows: Sequence[Sequence[PDElement]]) -> "PDMatrix":
        ring = rows[0][0].ring
        r, c = len(rows), len(rows[0])
        out = _zero_blocks(ring.nslots, r, c)
        for i, row in enumerate(rows):
            for j, x in enumerate(row):
                if x.ring != ring:
                    raise RingMismatch("entries live in different rings")
                out[:, i, j] = x.data
        return cls(ring, out)

    @classmethod
    def from_series_matrix(cls, ring: PDRing, mat: SeriesMatrix, exponent: Optional[Exponent] = None) -> "PDMatrix":
        """``mat`` times the PD monomial ``exponent`` (default: 1)."""
        if mat.m != ring.m:
            raise TruncationMismatch("matrix truncation differs from ring")
        r, c = mat.shape
        out = _zero_blocks(ring.nslots, r, c)
        exponent = (0,) * len(ring.varnames) if exponent is None else tuple(exponent)
        if sum(exponent) <= ring.bound:
            base = ring.index[exponent] * ring.m
            for e in range(ring.m):
                out[base + e] = _to_mpq_block(mat.blocks[e])
        return cls(ring, out)

    @classmethod
    def from_table(cls, ring: PDRing, coeffs: Mapping[Exponent, SeriesMatrix], r: int) -> "PDMatrix":
        """Sum of ``coeffs[exp] * exp`` over the table, dropping degrees past the bound."""
        out = _zero_blocks(ring.nslots, r, r)
        for exp, mat in coeffs.items():
            exp = tuple(exp)
            if sum(exp) > ring.bound:
                continue
            if mat.m != ring.m:
                raise TruncationMismatch("table truncation differs from ring")
            base = ring.index[exp] * ring.m
            for e in range(ring.m):
                out[base + e] = out[base + e] + _to_mpq_block(mat.blocks[e])
        return cls(ring, out)

    def entry(self, i: int, j: int) -> PDElement:
        return PDElement(self.ring, self.data[:, i, j].copy())

    def _same(self, other: "PDMatrix"):
        if self.ring != other.ring:
            raise RingMismatch(f"{self.ring} vs {other.ring}")

    def __add__(self, other: "PDMatrix") -> "PDMatrix":
        self._same(other)
        return PDMatrix(self.ring, self.data + other.data)

    def __sub__(self, other: "PDMatrix") -> "PDMatrix":
        self._same(other)
        return PDMatrix(self.ring, self.data - other.data)

    def __neg__(self) -> "PDMatrix":
        return PDMatrix(self.ring, -self.data)

    def scale(self, c) -> "PDMatrix":
        return PDMatrix(self.ring, self.data * _mpq(c))

    def scalar_mul(self, x: PDElement) -> "PDMatrix":
        """Multiply every entry by the PD element ``x``."""
        if x.ring != self.ring:
            raise RingMismatch(f"{self.ring} vs {x.ring}")
        r, c = self.shape
        as_block = x.data.reshape(-1, 1, 1)
        blk = _zero_blocks(self.ring.nslots, 1, 1)
        blk[:] = as_block
        return _block_product(self.ring, blk, self.data, scalar_left=True)

    def __matmul__(self, other: "PDMatrix") -> "PDMatrix":
        self._same(other)
        if self.shape[1] != other.shape[0]:
            raise ValueError("matrix shapes do not compose")
        return _block_product(self.ring, self.data, other.data)

    def is_zero(self) -> bool:
        return not _nonzero_slots(self.data).any()

    def coefficient(self, exponent: Exponent) -> SeriesMatrix:
        exponent = tuple(exponent)
        m = self.ring.m
        r, c = self.shape
        if sum(exponent) > self.ring.bound:
            return SeriesMatrix.zeros(r, m, c)
        base = self.ring.index[exponent] * m
        return SeriesMatrix(_to_frac_blocks(self.data[base:base + m]))

    def support(self) -> list:
        """Exponents carrying a nonzero coefficient, in storage order."""
        nz = np.flatnonzero(_nonzero_slots(self.data))
        monos = sorted({int(s) // self.ring.m for s in nz})
        return [self.ring.monomials[k] for k in monos]

    def __eq__(self, other):
        if not isinstance(other, PDMatrix):
            return NotImplemented
        return (
            self.ring == other.ring
            and self.shape == other.shape
            and bool((self.data == other.data).all())
        )

    def first_difference(self, other: "PDMatrix"):
        """Lowest-degree mismatch as a dict, or None when equal."""
        self._same(other)
        diff = (self.data != other.data).reshape(self.ring.nslots, -1).any(axis=1)
        bad = np.flatnonzero(diff)
        if not len(bad):
            return None
        degs = self.ring.degrees[bad // self.ring.m]
        s = int(bad[int(np.argmin(degs))])
        mono, e = divmod(s, self.ring.m)
        cell = np.argwhere(self.data[s] != other.data[s])[0]
        i, j = int(cell[0]), int(cell[1])
        return {
            "monomial": dict(zip(self.ring.varnames, self.ring.monomials[mono])),
            "eps_power": e,
            "row": i,
            "col": j,
            "lhs": rational_str(_frac(self.data[s, i, j])),
            "rhs": rational_str(_frac(other.data[s, i, j])),
        }

    def __repr__(self):
        return f"PDMatrix(shape={self.shape}, ring={self.ring}, support={len(self.support())} monomials)"


def _to_mpq_block(block) -> np.ndarray:
    out = np.empty(block.shape, dtype=object)
    for idx, x in np.ndenumerate(block):
        out[idx] = _mpq(x)
    return out


def _to_frac_blocks(data: np.ndarray) -> np.ndarray:
    out = np.empty(data.shape, dtype=object)
    for idx, x in np.ndenumerate(data):
        out[idx] = _frac(x)
    return out


def _block_product(ring: PDRing, a: np.ndarray, b: np.ndarray, scalar_left: bool = False) -> PDMatrix:
    I, J, K, C = ring._pair_table()
    rows = b.shape[1] if scalar_left else a.shape[1]
    cols = b.shape[2]
    out = _zero_blocks(ring.nslots, rows, cols)
    nza = _nonzero_slots(a)
    nzb = _nonzero_slots(b)
    mask = nza[I] & nzb[J]
    if mask.any() and not scalar_left:
        fast = _pair_products_int(ring, a, b, mask, a.shape[2])
        if fast is not None:
            ks, sums, D = fast
            out[ks] = from_scaled(sums, D)
            return PDMatrix(ring, out)
    if mask.any():
        Im, Jm, Km = I[mask], J[mask], K[mask]
        if scalar_left:
            vals = b[Jm] * (a[Im, 0, 0] * C[mask]).reshape(-1, 1, 1)
        else:
            vals = np.matmul(a[Im], b[Jm]) * C[mask].reshape(-1, 1, 1)
        starts = np.flatnonzero(np.r_[True, Km[1:] != Km[:-1]])
        out[Km[starts]] = np.add.reduceat(vals, starts, axis=0)
    return PDMatrix(ring, out)


def neg_power_expand(Q: PDElement, P: SeriesMatrix, Z: TruncatedSeries, bound: Optional[int] = None) -> PDMatrix:
    """(1 - Z Q)^{-P/Z} := sum_n prod_{i<n}(P + i Z) Q^[n], truncated at the PD bound.

    The coefficient products are taken left to right: P (P + Z) (P + 2Z) ...
    """
    ring = Q.ring
    r, c = P.shape
    if r != c:
        raise ValueError("P must be square")
    if P.m != ring.m or Z.m != ring.m:
        raise TruncationMismatch("P, Z and Q must share the truncation level")
    if not Q.constant_term().is_zero():
        raise ValueError("Q must have zero constant term")
    limit = ring.bound if bound is None else min(bound, ring.bound)
    coeffs = expansion_coefficients(P, Z, limit)
    out = PDMatrix.identity(ring, r)
    qpow = ring.one()
    for n in range(1, limit + 1):
        qpow = qpow * Q  # Q^n
        if qpow.is_zero():
            break
        qn = qpow.scale(Fraction(1, factorial(n)))
        out = out + PDMatrix.from_series_matrix(ring, coeffs[n]).scalar_mul(qn)
    return out


def expansion_coefficients(P: SeriesMatrix, Z: TruncatedSeries, n_max: int) -> list:
    """[prod_{i<n}(P + i Z Id) for n = 0..n_max]."""
    r = P.shape[0]
    out = [SeriesMatrix.identity(r, P.m)]
    zid = SeriesMatrix.scalar(Z, r)
    for n in range(1, n_max + 1):
        out.append(out[-1] @ (P + zid.scale(n - 1)))
    return out


# formal identities in the variables P1, P2, Z, Q1, Q2


def _formal_expand(Q: PDElement, P: PDElement, Z: PDElement) -> PDElement:
    """Scalar version of the expansion with P, Z ring elements."""
    ring = Q.ring
    out = ring.one()
    coeff = ring.one()
    qpow = ring.one()
    for n in range(1, ring.bound + 1):
        coeff = coeff * (P + Z.scale(n - 1))
        qpow = qpow * Q
        term = coeff * qpow.scale(Fraction(1, factorial(n)))
        if qpow.is_zero():
            break
        out = out + term
    return out


@dataclass
class IdentityReport:
    passed: bool
    bound: int
    checks: dict
    first_difference: Optional[dict] = None

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"formal identities up to degree {self.bound}: {status}"


def verify_formal_identities(bound: int, perturb: Optional[Callable[[str, PDElement], PDElement]] = None) -> IdentityReport:
    """Check the two product rules of the expansion as exact truncated identities.

    ``perturb(name, rhs)`` may replace a right-hand side before comparison; it
    exists so mutation tests can confirm that a discrepancy is located.
    """
    if bound < 1:
        raise ValueError("bound must be at least 1")
    ring = pd_ring(("P1", "P2", "Z", "Q1", "Q2"), bound, 1)
    P1, P2, Z, Q1, Q2 = (ring.var(v) for v in ring.varnames)
    checks = {}
    first = None

    lhs1 = _formal_expand(Q1, P1, Z) * _formal_expand(Q2, P1, Z)
    rhs1 = _formal_expand(Q1 + Q2 - Z * Q1 * Q2, P1, Z)
    lhs2 = _formal_expand(Q1, P1, Z) * _formal_expand(Q1, P2, Z)
    rhs2 = _formal_expand(Q1, P1 + P2, Z)
    for name, lhs, rhs in (("product_in_Q", lhs1, rhs1), ("product_in_P", lhs2, rhs2)):
        if perturb is not None:
            rhs = perturb(name, rhs)
        exp = lhs.first_difference(rhs)
        checks[name] = exp is None
        if exp is not None and first is None:
            first = {
                "identity": name,
                "monomial": dict(zip(ring.varnames, exp)),
                "lhs": str(lhs.coefficient(exp).coeffs[0]),
                "rhs": str(rhs.coefficient(exp).coeffs[0]),
            }
    return IdentityReport(all(checks.values()), bound, checks, first)
