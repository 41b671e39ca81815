"""Evaluate the explicit semilinear action attached to an enhanced connection.

For group-element data (n, g(E)/E, t/E) the action on the basis is

    exp((t/E) sum_i n_i N_i) . sum_i x^[i] prod_{r<i}(a phi_M - a r),
    x = (g(E)/E - 1) / a,

with every product exact.  The second factor is the semilinear operator
(g(E)/E)^(phi_M); it is computed on the flattened space K^(r m).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Optional, Sequence, Tuple

import numpy as np

from .connections import (
    CrystalSpec,
    arithmetic_products,
    nilpotency_index,
    phi_operator,
    scalar_operator,
)
from .rings import SeriesMatrix, TruncatedSeries, rational, rational_identity


class RealizationError(ValueError):
    pass


@dataclass(frozen=True)
class GroupElementData:
    nvec: Tuple[int, ...]
    gE_over_E: TruncatedSeries
    t_over_E: TruncatedSeries

    def __post_init__(self):
        object.__setattr__(self, "nvec", tuple(int(x) for x in self.nvec))
        if not self.gE_over_E.is_unit() or not self.t_over_E.is_unit():
            raise ValueError("g(E)/E and t/E must be units")

    @classmethod
    def identity(cls, d: int, m: int) -> "GroupElementData":
        one = TruncatedSeries.one(m)
        return cls((0,) * d, one, one)

    def to_record(self) -> dict:
        return {
            "nvec": list(self.nvec),
            "gE_over_E": self.gE_over_E.to_record()["coeffs"],
            "t_over_E": self.t_over_E.to_record()["coeffs"],
        }


def nilpotent_exp(mat: SeriesMatrix) -> SeriesMatrix:
    """exp of a nilpotent matrix over T_m; the sum stops at its nilpotency index."""
    idx = nilpotency_index(mat)
    if idx is None:
        raise RealizationError("exponent is not nilpotent")
    out = SeriesMatrix.identity(mat.shape[0], mat.m)
    power = out
    for k in range(1, idx):
        power = power @ mat
        out = out + power.scale(Fraction(1, factorial(k)))
    return out


def unflatten_columns(op: np.ndarray, r: int, m: int) -> SeriesMatrix:
    """Matrix over T_m whose column j is op applied to the basis vector e_j."""
    blocks = np.empty((m, r, r), dtype=object)
    for e in range(m):
        blocks[e] = op[e * r:(e + 1) * r, :r]
    return SeriesMatrix(blocks)


def divided_power_series(x: TruncatedSeries, i: int) -> TruncatedSeries:
    return (x ** i) * TruncatedSeries.const(Fraction(1, factorial(i)), x.m)


def power_operator(
    spec: CrystalSpec,
    gE_over_E: TruncatedSeries,
    shift: int = 0,
    n_max: int = 64,
) -> np.ndarray:
    """(g(E)/E)^(phi_M - shift) as a flattened K-operator.

    The sum is finite when x = (g(E)/E - 1)/a is nilpotent (constant term of
    g(E)/E equal to 1) or when the products of a phi_M - a(r + shift) vanish
    exactly within ``n_max`` steps.
    """
    a = spec.a
    x = (gE_over_E - TruncatedSeries.one(spec.m)) * a.inverse()
    if x.coeffs[0] == 0:
        prods = arithmetic_products(spec.phi, a, spec.m - 1, shift=shift)
    else:
        prods = arithmetic_products(spec.phi, a, n_max, shift=shift)
        stop = next((n for n, C in enumerate(prods) if not C.any()), None)
        if stop is None:
            raise RealizationError("series not verified finite: inconclusive smallness")
        prods = prods[:stop]
    size = spec.r * spec.m
    out = np.empty((size, size), dtype=object)
    out.fill(Fraction(0))
    for i, C in enumerate(prods):
        out = out + scalar_operator(divided_power_series(x, i), spec.r).dot(C)
    return out


def geometric_factor(spec: CrystalSpec, g: GroupElementData) -> SeriesMatrix:
    if len(g.nvec) != spec.d:
        raise ValueError(f"nvec has length {len(g.nvec)}, expected {spec.d}")
    total = SeriesMatrix.zeros(spec.r, spec.m)
    for n, N in zip(g.nvec, spec.N):
        total = total + N.scale(Fraction(n))
    return nilpotent_exp(total.scale(g.t_over_E))


def realize_operator(spec: CrystalSpec, g: GroupElementData) -> np.ndarray:
    if spec.phi is None:
        raise RealizationError("realization needs phi")
    return geometric_factor(spec, g).flatten().dot(power_operator(spec, g.gE_over_E))


def realize(spec: CrystalSpec, g: GroupElementData) -> SeriesMatrix:
    """Matrix of the action on the basis, entries in T_m."""
    return unflatten_columns(realize_operator(spec, g), spec.r, spec.m)


def check_homomorphism(spec: CrystalSpec, n1: Sequence[int], n2: Sequence[int], t_over_E: TruncatedSeries) -> bool:
    """realize(n1) realize(n2) == realize(n1 + n2) with g(E)/E = 1."""
    one = TruncatedSeries.one(spec.m)

    def at(n):
        return realize(spec, GroupElementData(tuple(n), one, t_over_E))

    both = tuple(x + y for x, y in zip(n1, n2))
    return at(n1) @ at(n2) == at(both)


def check_intertwining(spec: CrystalSpec, gE_over_E: TruncatedSeries) -> Tuple[bool, Optional[int]]:
    """(g(E)/E)^(phi_M - 1) N_i == N_i (g(E)/E)^(phi_M) for every i.

    The shifted side is summed directly when that series stops (x nilpotent)
    and is otherwise taken as (g(E)/E)^(-1) (g(E)/E)^(phi_M).  Returns
    (passed, first failing index).
    """
    F0 = power_operator(spec, gE_over_E)
    try:
        F1 = power_operator(spec, gE_over_E, shift=1)
    except RealizationError:
        F1 = scalar_operator(gE_over_E.inverse(), spec.r).dot(F0)
    for i, N in enumerate(spec.N, start=1):
        Nf = N.flatten()
        if not (F1.dot(Nf) == Nf.dot(F0)).all():
            return False, i
    return True, None


def polynomial_of_operator(op: np.ndarray, coeffs: Sequence) -> np.ndarray:
    """sum c_k op^k by Horner's rule."""
    size = op.shape[0]
    out = np.empty((size, size), dtype=object)
    out.fill(Fraction(0))
    ident = rational_identity(size)
    for c in reversed(list(coeffs)):
        out = out.dot(op) + ident * rational(c)
    return out


def check_polynomial_intertwining(spec: CrystalSpec, coeffs: Sequence) -> bool:
    """f(phi_M - 1) N_i == N_i f(phi_M) on the flattened space."""
    Phi = phi_operator(spec.phi)
    size = Phi.shape[0]
    f0 = polynomial_of_operator(Phi, coeffs)
    f1 = polynomial_of_operator(Phi - rational_identity(size), coeffs)
    return all((f1.dot(N.flatten()) == N.flatten().dot(f0)).all() for N in spec.N)
