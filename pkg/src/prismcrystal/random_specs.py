"""Seeded random crystal specs that satisfy every structural check by construction.

Geometric operators are sums over disjoint basis blocks, one nilpotent block
operator per block, so any linear combinations of them commute.

Enhanced specs use integer weights w_j.  A geometric entry (k, j) at
eps-degree e is allowed only when w_k + e - w_j = 1; with phi = diag(w) this
gives [phi_M, N] = N for the semilinear phi_M.  A constant unimodular change
of basis hides the diagonal form.  The full operator then has integer
spectrum in [0, max(w) + m - 1], so the arithmetic products vanish exactly
at n = max(w) + m.
"""

from __future__ import annotations

import random
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from .connections import CrystalSpec
from .cosimplicial import Flavor, FlavorKind
from .rings import SeriesMatrix, TruncatedSeries

SMALL = (-3, -2, -1, 1, 2, 3)


def _rand_frac(rng: random.Random, allow_zero: bool = True) -> Fraction:
    pool = SMALL + ((0, 0) if allow_zero else ())
    num = rng.choice(pool)
    return Fraction(num, rng.choice((1, 1, 2, 3)))


def random_unit(rng: random.Random, m: int) -> TruncatedSeries:
    return TruncatedSeries(m, (_rand_frac(rng, False),) + tuple(_rand_frac(rng) for _ in range(m - 1)))


def _blocks(rng: random.Random, r: int) -> List[List[int]]:
    idx = list(range(r))
    rng.shuffle(idx)
    out, start = [], 0
    while start < r:
        size = rng.randint(1, r - start)
        out.append(sorted(idx[start:start + size]))
        start += size
    return out


def _combine(rng: random.Random, d: int, block_ops: Sequence[SeriesMatrix], r: int, m: int) -> List[SeriesMatrix]:
    Ns = []
    for _ in range(d):
        total = SeriesMatrix.zeros(r, m)
        for op in block_ops:
            total = total + op.scale(Fraction(rng.randint(-2, 2)))
        Ns.append(total)
    return Ns


def _relative_block(rng: random.Random, block: Sequence[int], r: int, m: int) -> SeriesMatrix:
    """Strictly upper triangular modulo eps (in block order), arbitrary above."""
    blocks = np.empty((m, r, r), dtype=object)
    blocks.fill(Fraction(0))
    for e in range(m):
        for a, k in enumerate(block):
            for b, j in enumerate(block):
                if e == 0 and b <= a:
                    continue
                if rng.random() < 0.6:
                    blocks[e, k, j] = _rand_frac(rng)
    return SeriesMatrix(blocks)


def random_relative_spec(
    seed: int,
    kind: str = "relative_smooth",
    d: Optional[int] = None,
    r: Optional[int] = None,
    m: Optional[int] = None,
) -> CrystalSpec:
    rng = random.Random(seed)
    d = rng.randint(1, 3) if d is None else d
    r = rng.randint(1, 4) if r is None else r
    m = rng.randint(1, 4) if m is None else m
    if FlavorKind(kind) == FlavorKind.RELATIVE_LOG:
        flavor = Flavor(kind, d, m)
    else:
        beta = TruncatedSeries.eps(m) * random_unit(rng, m)
        flavor = Flavor(kind, d, m, beta=beta)
    ops = [_relative_block(rng, b, r, m) for b in _blocks(rng, r)]
    return CrystalSpec(flavor, r, tuple(_combine(rng, d, ops, r, m)))


def _unimodular(rng: random.Random, r: int):
    """A product of integer row operations and its inverse."""
    P = np.empty((r, r), dtype=object)
    P.fill(Fraction(0))
    for i in range(r):
        P[i, i] = Fraction(1)
    Pinv = P.copy()
    for _ in range(2 * r if r > 1 else 0):
        i, j = rng.sample(range(r), 2)
        c = Fraction(rng.choice((-2, -1, 1, 2)))
        P[i] = P[i] + P[j] * c
        # row op on P is left multiplication by (I + c E_ij); invert on the right
        Pinv[:, j] = Pinv[:, j] - Pinv[:, i] * c
    return P, Pinv


def _conjugate(mat: SeriesMatrix, P: np.ndarray, Pinv: np.ndarray) -> SeriesMatrix:
    return SeriesMatrix(np.array([Pinv.dot(b).dot(P) for b in mat.blocks], dtype=object))


def _weighted_block(rng: random.Random, block: Sequence[int], w: Sequence[int], r: int, m: int) -> SeriesMatrix:
    blocks = np.empty((m, r, r), dtype=object)
    blocks.fill(Fraction(0))
    for e in range(m):
        for k in block:
            for j in block:
                if w[k] + e - w[j] == 1 and rng.random() < 0.7:
                    blocks[e, k, j] = _rand_frac(rng)
    return SeriesMatrix(blocks)


def random_enhanced_spec(
    seed: int,
    kind: str = "absolute_smooth",
    d: Optional[int] = None,
    r: Optional[int] = None,
    m: Optional[int] = None,
    conjugate: bool = True,
) -> CrystalSpec:
    rng = random.Random(seed)
    kind = FlavorKind(kind)
    if kind == FlavorKind.ARITHMETIC_POINT:
        d = 0
    d = rng.randint(1, 3) if d is None else d
    r = rng.randint(1, 4) if r is None else r
    m = rng.randint(1, 4) if m is None else m
    w = [rng.randint(0, 3) for _ in range(r)]
    a = _rand_frac(rng, False)
    pi = None
    if kind == FlavorKind.ABSOLUTE_LOG:
        pi = Fraction(rng.choice((2, 3, -1)))
    flavor = Flavor(kind, d, m, a=a, pi=pi)
    ops = [_weighted_block(rng, b, w, r, m) for b in _blocks(rng, r)]
    Ns = _combine(rng, d, ops, r, m)
    phi = SeriesMatrix.constant([[Fraction(w[i]) if i == j else 0 for j in range(r)] for i in range(r)], m)
    if conjugate:
        P, Pinv = _unimodular(rng, r)
        Ns = [_conjugate(n, P, Pinv) for n in Ns]
        phi = _conjugate(phi, P, Pinv)
    return CrystalSpec(flavor, r, tuple(Ns), phi)


def random_spec(seed: int, kind: str, **kw) -> CrystalSpec:
    if FlavorKind(kind) in (FlavorKind.RELATIVE_SMOOTH, FlavorKind.RELATIVE_LOG):
        return random_relative_spec(seed, kind, **kw)
    return random_enhanced_spec(seed, kind, **kw)
