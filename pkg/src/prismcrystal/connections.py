"""Crystals as matrix data, and their structural checks.

A crystal is a free module M = T_m^r with commuting geometric operators
N_1..N_d and, for the absolute and arithmetic flavors, an arithmetic operator.
The arithmetic operator is semilinear: on ``f * e_j`` it acts as
``f * phi(e_j) + (eps d/deps f) * e_j``.  ``phi_operator`` returns this full
operator as a K-linear matrix on the flattened space K^(r m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cosimplicial import Flavor
from .rings import (
    INF,
    SeriesMatrix,
    TruncatedSeries,
    ValuationConfig,
    euler_operator,
    rational,
    rational_identity,
    vp,
)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


class SpecError(ValueError):
    """A crystal specification is malformed."""


@dataclass
class CheckResult:
    name: str
    status: str
    witness: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_record(self) -> dict:
        return {"check": self.name, "status": self.status, "witness": self.witness}


@dataclass(frozen=True)
class CrystalSpec:
    flavor: Flavor
    r: int
    N: Tuple[SeriesMatrix, ...]
    phi: Optional[SeriesMatrix] = None

    def __post_init__(self):
        object.__setattr__(self, "N", tuple(self.N))
        f = self.flavor
        if self.r < 1:
            raise SpecError("rank must be positive")
        if len(self.N) != f.d:
            raise SpecError(f"expected {f.d} geometric matrices, got {len(self.N)}")
        for k, mat in enumerate(self.N, start=1):
            self._check_matrix(mat, f"N_{k}")
        if f.is_relative:
            if self.phi is not None:
                raise SpecError("relative flavors carry no arithmetic operator")
        else:
            if self.phi is None:
                raise SpecError(f"{f.kind.value} requires phi")
            self._check_matrix(self.phi, "phi")

    def _check_matrix(self, mat: SeriesMatrix, label: str):
        if mat.shape != (self.r, self.r):
            raise SpecError(f"{label} has shape {mat.shape}, expected {(self.r, self.r)}")
        if mat.m != self.m:
            raise SpecError(f"{label} has truncation {mat.m}, expected {self.m}")

    @property
    def d(self) -> int:
        return self.flavor.d

    @property
    def m(self) -> int:
        return self.flavor.m

    @property
    def a(self) -> Optional[TruncatedSeries]:
        return self.flavor.a

    def with_flavor(self, flavor: Flavor) -> "CrystalSpec":
        return CrystalSpec(flavor, self.r, self.N, self.phi)


# structural checks


def check_integrability(spec: CrystalSpec) -> CheckResult:
    for i in range(spec.d):
        for j in range(i + 1, spec.d):
            if spec.N[i] @ spec.N[j] != spec.N[j] @ spec.N[i]:
                return CheckResult("integrability", FAIL, {"pair": [i + 1, j + 1]})
    return CheckResult("integrability", PASS)


def nilpotency_index(mat: SeriesMatrix) -> Optional[int]:
    """Least k with mat^k = 0, or None.  The flattened size r*m bounds k."""
    r = mat.shape[0]
    power = SeriesMatrix.identity(r, mat.m)
    for k in range(1, r * mat.m + 1):
        power = power @ mat
        if power.is_zero():
            return k
    return None


def check_nilpotence(spec: CrystalSpec) -> CheckResult:
    indices = [nilpotency_index(n) for n in spec.N]
    bad = [k + 1 for k, idx in enumerate(indices) if idx is None]
    if bad:
        return CheckResult("nilpotence", FAIL, {"not_nilpotent": bad, "indices": indices})
    return CheckResult("nilpotence", PASS, {"indices": indices})


def check_enhanced_relation(spec: CrystalSpec) -> CheckResult:
    """[phi_M, N_i] = N_i with the semilinear phi_M.

    On matrices this reads ``phi N - N phi + eps dN/deps = N``; for constant N
    the derivative term vanishes.
    """
    if spec.phi is None:
        raise SpecError("the enhanced relation needs phi")
    for k, n in enumerate(spec.N, start=1):
        lhs = spec.phi @ n - n @ spec.phi + n.euler()
        if lhs != n:
            return CheckResult("enhanced_relation", FAIL, {"index": k})
    return CheckResult("enhanced_relation", PASS)


def phi_operator(phi: SeriesMatrix) -> np.ndarray:
    """Full semilinear operator (matrix part plus eps d/deps) on K^(r m)."""
    r = phi.shape[0]
    return phi.flatten() + euler_operator(r, phi.m)


def scalar_operator(s: TruncatedSeries, r: int) -> np.ndarray:
    return SeriesMatrix.scalar(s, r).flatten()


def arithmetic_products(phi: SeriesMatrix, a: TruncatedSeries, n_max: int, shift: int = 0) -> List[np.ndarray]:
    """[prod_{i<n} (a phi_M - a (i + shift)) for n = 0..n_max], flattened, composed right to left."""
    r = phi.shape[0]
    Phi = phi_operator(phi)
    A = scalar_operator(a, r)
    step = A.dot(Phi)
    out = [rational_identity(r * phi.m)]
    for n in range(n_max):
        out.append((step - A * (n + shift)).dot(out[-1]))
    return out


@dataclass
class SmallnessCertificate:
    mode: str  # "ExactVanishing" or "ValuationGrowth"
    n_star: int
    details: Dict

    def to_record(self) -> dict:
        return {"mode": self.mode, "n_star": self.n_star, "details": self.details}


@dataclass
class SmallnessRefusal:
    reason: str
    details: Dict

    def to_record(self) -> dict:
        return {"mode": "Refused", "reason": self.reason, "details": self.details}


def _min_valuation(mat: np.ndarray, cfg: ValuationConfig):
    vals = [vp(x, cfg) for x in mat.flat if x != 0]
    return min(vals) if vals else INF


def certify_a_small(
    phi: SeriesMatrix,
    a,
    cfg: ValuationConfig,
    n_max: int = 40,
    cutoff: int = 10,
) -> Union[SmallnessCertificate, SmallnessRefusal]:
    """Certificate that a^n prod_{i<n}(phi_M - i) tends to 0, or a refusal.

    Exact vanishing is tried first.  Otherwise the minimal p-adic valuation of
    the entries is scanned up to ``n_max``; the scan certifies when the last
    value exceeds ``cutoff`` and the sequence never decreases after its last
    minimum.  A refusal is inconclusive, never a disproof.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if not isinstance(a, TruncatedSeries):
        a = TruncatedSeries.const(rational(a), phi.m)
    prods = arithmetic_products(phi, a, n_max)
    for n in range(1, n_max + 1):
        if not prods[n].any():
            return SmallnessCertificate("ExactVanishing", n, {"vanishing_index": n})
    vals = [_min_valuation(prods[n], cfg) for n in range(1, n_max + 1)]
    last_min = max(k for k, v in enumerate(vals) if v == min(vals))
    tail = vals[last_min:]
    monotone = all(x <= y for x, y in zip(tail, tail[1:]))
    floors = [int(v) for v in vals]
    if monotone and vals[-1] > cutoff:
        n_star = next(k + 1 for k in range(last_min, n_max) if vals[k] > cutoff)
        return SmallnessCertificate(
            "ValuationGrowth",
            n_star,
            {"p": cfg.p, "cutoff": cutoff, "n_max": n_max, "floors": floors},
        )
    return SmallnessRefusal(
        "valuation scan inconclusive",
        {"p": cfg.p, "cutoff": cutoff, "n_max": n_max, "floors": floors, "monotone_tail": monotone},
    )


# graded action


@dataclass
class GradedElement:
    """Finitely supported map from Laurent multidegrees to vectors in T_m^r."""

    components: Dict[Tuple[int, ...], SeriesMatrix]

    def __post_init__(self):
        self.components = {
            tuple(k): v for k, v in self.components.items() if not v.is_zero()
        }

    def __eq__(self, other):
        if not isinstance(other, GradedElement):
            return NotImplemented
        return self.components == other.components

    def __add__(self, other: "GradedElement") -> "GradedElement":
        out = dict(self.components)
        for k, v in other.components.items():
            out[k] = out[k] + v if k in out else v
        return GradedElement(out)


def graded_operator(spec: CrystalSpec, i: int, k: Sequence[int]) -> SeriesMatrix:
    """N_i + beta k_i on multidegree k (i is 1-based)."""
    beta = spec.flavor.geometric_beta
    return spec.N[i - 1] + SeriesMatrix.scalar(beta, spec.r).scale(Fraction(k[i - 1]))


def apply_nabla(spec: CrystalSpec, i: int, x: GradedElement) -> GradedElement:
    if not 1 <= i <= spec.d:
        raise IndexError(f"operator index {i} outside 1..{spec.d}")
    return GradedElement({k: graded_operator(spec, i, k) @ v for k, v in x.components.items()})


def structural_checks(spec: CrystalSpec, cfg: Optional[ValuationConfig] = None, n_max: int = 40, cutoff: int = 10) -> List[CheckResult]:
    """Every structural check that applies to the spec's flavor."""
    out = [check_integrability(spec), check_nilpotence(spec)]
    if spec.phi is not None:
        out.append(check_enhanced_relation(spec))
        cert = certify_a_small(spec.phi, spec.a, cfg or ValuationConfig(2), n_max, cutoff)
        status = PASS if isinstance(cert, SmallnessCertificate) else INCONCLUSIVE
        out.append(CheckResult("a_smallness", status, cert.to_record()))
    return out
