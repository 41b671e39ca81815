"""Exact cohomology of de Rham and enhanced de Rham complexes, and the Sen object.

Geometric coefficients are handled through the Laurent grading: on
multidegree k the operator N_i acts as A_i = N_i + beta k_i, so each
multidegree contributes a finite Koszul complex over K after flattening
T_m^r to K^(r m).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import mpq

from .connections import (
    CrystalSpec,
    SmallnessCertificate,
    arithmetic_products,
    certify_a_small,
    check_enhanced_relation,
    check_integrability,
    check_nilpotence,
    graded_operator,
    phi_operator,
)
from .pdalgebra import PDElement, PDRing, pd_ring
from .rings import SeriesMatrix, TruncatedSeries, ValuationConfig, rational, rational_identity


class CohomologyError(ValueError):
    pass


# exact linear algebra


def exact_rank(mat: np.ndarray) -> int:
    """Rank over Q by Gaussian elimination on gmpy2 rationals."""
    if mat.size == 0:
        return 0
    A = np.empty(mat.shape, dtype=object)
    for idx, x in np.ndenumerate(mat):
        A[idx] = mpq(x) if not isinstance(x, Fraction) else mpq(x.numerator, x.denominator)
    rows, cols = A.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        nz = np.flatnonzero(A[rank:, c] != 0)
        if not len(nz):
            continue
        p = rank + int(nz[0])
        if p != rank:
            A[[rank, p]] = A[[p, rank]]
        A[rank] = A[rank] / A[rank, c]
        below = A[rank + 1:, c]
        hit = np.flatnonzero(below != 0)
        if len(hit):
            rows_hit = rank + 1 + hit
            A[rows_hit] = A[rows_hit] - np.outer(A[rows_hit, c], A[rank])
        rank += 1
    return rank


def _zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(Fraction(0))
    return out


# windows and reports


@dataclass(frozen=True)
class DegreeWindow:
    """Per-axis closed intervals of Laurent exponents."""

    intervals: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        ivs = tuple((int(lo), int(hi)) for lo, hi in self.intervals)
        if any(lo > hi for lo, hi in ivs):
            raise ValueError("empty window interval")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def cube(cls, d: int, lo: int, hi: int) -> "DegreeWindow":
        return cls(((lo, hi),) * d)

    @classmethod
    def parse(cls, text: str, d: int) -> "DegreeWindow":
        """``"-1:1"`` for every axis, or ``"-1:1,0:2"`` per axis; a bare integer is a point."""
        parts = [p.strip() for p in text.split(",") if p.strip()]

        def one(p):
            if ":" in p:
                lo, hi = p.split(":")
                return int(lo), int(hi)
            return int(p), int(p)

        if len(parts) == 1:
            return cls((one(parts[0]),) * d)
        if len(parts) != d:
            raise ValueError(f"window has {len(parts)} axes, expected {d}")
        return cls(tuple(one(p) for p in parts))

    def degrees(self) -> List[Tuple[int, ...]]:
        return [tuple(k) for k in itertools.product(*(range(lo, hi + 1) for lo, hi in self.intervals))]

    def on_boundary(self, k: Sequence[int]) -> bool:
        return any(x in (lo, hi) for x, (lo, hi) in zip(k, self.intervals))


@dataclass
class CohomologyReport:
    kind: str
    window: DegreeWindow
    betti: Dict[Tuple[int, ...], List[int]] = field(default_factory=dict)
    term_dims: Dict[Tuple[int, ...], List[int]] = field(default_factory=dict)

    @property
    def totals(self) -> List[int]:
        if not self.betti:
            return []
        return [sum(col) for col in zip(*self.betti.values())]

    def euler_characteristic(self, k) -> int:
        return sum((-1) ** q * b for q, b in enumerate(self.betti[tuple(k)]))

    def euler_consistent(self) -> bool:
        return all(
            sum((-1) ** q * b for q, b in enumerate(self.betti[k]))
            == sum((-1) ** q * c for q, c in enumerate(self.term_dims[k]))
            for k in self.betti
        )

    def boundary_nonzero(self) -> List[Tuple[int, ...]]:
        """Window-boundary multidegrees with nonzero cohomology (widen the window if any)."""
        if not self.window.intervals:
            return []
        return [k for k, b in self.betti.items() if any(b) and self.window.on_boundary(k)]

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "window": [list(iv) for iv in self.window.intervals],
            "degrees": [
                {"k": list(k), "betti": self.betti[k], "terms": self.term_dims[k]}
                for k in sorted(self.betti)
            ],
            "totals": self.totals,
            "euler_consistent": self.euler_consistent(),
            "boundary_nonzero": [list(k) for k in self.boundary_nonzero()],
        }


# Koszul complexes


def koszul_differentials(ops: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Differentials C^q -> C^(q+1) of the Koszul complex of commuting K-matrices.

    C^q is a sum of copies of K^D over the q-subsets of the operator indices,
    in lexicographic order.
    """
    d = len(ops)
    D = ops[0].shape[0] if d else 0
    subsets = [list(itertools.combinations(range(d), q)) for q in range(d + 1)]
    out = []
    for q in range(d):
        src, tgt = subsets[q], subsets[q + 1]
        pos = {J: t for t, J in enumerate(tgt)}
        mat = _zeros((len(tgt) * D, len(src) * D))
        for s, I in enumerate(src):
            for i in range(d):
                if i in I:
                    continue
                J = tuple(sorted(I + (i,)))
                sign = (-1) ** sum(1 for j in I if j < i)
                t = pos[J]
                mat[t * D:(t + 1) * D, s * D:(s + 1) * D] = ops[i] * sign
        out.append(mat)
    return out


def _betti_from_differentials(dims: List[int], diffs: List[np.ndarray]) -> List[int]:
    ranks = [exact_rank(x) for x in diffs]
    betti = []
    for q, dim in enumerate(dims):
        r_out = ranks[q] if q < len(ranks) else 0
        r_in = ranks[q - 1] if q >= 1 else 0
        betti.append(dim - r_out - r_in)
    return betti


def graded_operators(spec: CrystalSpec, k: Sequence[int]) -> List[np.ndarray]:
    return [graded_operator(spec, i, k).flatten() for i in range(1, spec.d + 1)]


def _require(check):
    if not check.passed:
        raise CohomologyError(f"{check.name} failed: {check.witness}")


def dr_cohomology(spec: CrystalSpec, window: DegreeWindow) -> CohomologyReport:
    """Betti numbers over K of the de Rham complex, one multidegree at a time."""
    _require(check_integrability(spec))
    _require(check_nilpotence(spec))
    if len(window.intervals) != spec.d:
        raise ValueError("window dimension differs from d")
    rm = spec.r * spec.m
    report = CohomologyReport("de_rham", window)
    for k in window.degrees():
        ops = graded_operators(spec, k)
        dims = [rm * comb(spec.d, q) for q in range(spec.d + 1)]
        report.betti[k] = _betti_from_differentials(dims, koszul_differentials(ops) if spec.d else [])
        report.term_dims[k] = dims
    return report


def enhanced_differentials(spec: CrystalSpec, k: Sequence[int]) -> Tuple[List[int], List[np.ndarray]]:
    """Term dimensions and differentials of the totalized two-row complex.

    Row 0 and row 1 are copies of the Koszul complex.  The vertical map in
    column q is phi_M - q.  Tot^n = C^n (row 0) + C^(n-1) (row 1), and
    D(x, y) = (d x, (-1)^n (phi_M - n) x + d y).
    """
    d = spec.d
    rm = spec.r * spec.m
    Phi = phi_operator(spec.phi)
    hor = koszul_differentials(graded_operators(spec, k)) if d else []
    col = [rm * comb(d, q) for q in range(d + 1)]

    def C(q):
        return col[q] if 0 <= q <= d else 0

    def vertical(q):
        blocks = comb(d, q)
        V = _zeros((blocks * rm, blocks * rm))
        shifted = Phi - rational_identity(rm) * q
        for b in range(blocks):
            V[b * rm:(b + 1) * rm, b * rm:(b + 1) * rm] = shifted
        return V

    dims = [C(n) + C(n - 1) for n in range(d + 2)]
    diffs = []
    for n in range(d + 1):
        D = _zeros((dims[n + 1], dims[n]))
        # row-0 source x in C^n, row-1 source y in C^(n-1)
        if n < d:
            D[:C(n + 1), :C(n)] = hor[n]
        D[C(n + 1):, :C(n)] = vertical(n) * ((-1) ** n)
        if n >= 1:
            D[C(n + 1):, C(n):] = hor[n - 1]
        diffs.append(D)
    return dims, diffs


def enhanced_cohomology(spec: CrystalSpec, window: DegreeWindow) -> CohomologyReport:
    if spec.phi is None:
        raise CohomologyError("enhanced cohomology needs phi")
    _require(check_integrability(spec))
    _require(check_nilpotence(spec))
    _require(check_enhanced_relation(spec))
    if len(window.intervals) != spec.d:
        raise ValueError("window dimension differs from d")
    report = CohomologyReport("enhanced", window)
    for k in window.degrees():
        dims, diffs = enhanced_differentials(spec, k)
        report.betti[k] = _betti_from_differentials(dims, diffs)
        report.term_dims[k] = dims
    return report


# the Sen object S^1 = K[E]/E^m {X}_pd


def sen_ring(bound: int, m: int) -> PDRing:
    return pd_ring(("X",), bound, m)


def _sen_grid(f: PDElement) -> np.ndarray:
    """Coefficients as a (bound+1) x m grid indexed [X-degree, E-degree]."""
    ring = f.ring
    return np.array([Fraction(x.numerator, x.denominator) for x in f.data], dtype=object).reshape(ring.bound + 1, ring.m)


def _from_grid(ring: PDRing, grid: np.ndarray) -> PDElement:
    terms = {}
    for n in range(grid.shape[0]):
        terms[(n,)] = TruncatedSeries(ring.m, tuple(grid[n]))
    return ring.from_terms(terms)


def sen_phi(f: PDElement, a) -> PDElement:
    """phi(E^e X^[n]) = (e - n) E^e X^[n] - E^e X^[n-1] / a."""
    a = rational(a)
    g = _sen_grid(f)
    N, m = g.shape
    out = _zeros(g.shape)
    for n in range(N):
        for e in range(m):
            out[n, e] = (e - n) * g[n, e] - (g[n + 1, e] / a if n + 1 < N else 0)
    return _from_grid(f.ring, out)


def sen_solve(b: PDElement, a) -> PDElement:
    """A preimage of b under phi, normalized to have zero X-degree-0 part.

    The residual phi(f) - b lives in the top X-degree only.
    """
    a = rational(a)
    if a == 0:
        raise ValueError("a must be nonzero")
    g = _sen_grid(b)
    N, m = g.shape
    f = _zeros(g.shape)
    for e in range(m):
        for n in range(N - 1):
            f[n + 1, e] = a * ((e - n) * f[n, e] - g[n, e])
    return _from_grid(b.ring, f)


def sen_matrix(bound: int, m: int, a) -> np.ndarray:
    """phi on S^1 as a K-matrix; basis index n*m + e for E^e X^[n]."""
    a = rational(a)
    size = (bound + 1) * m
    out = _zeros((size, size))
    for n in range(bound + 1):
        for e in range(m):
            out[n * m + e, n * m + e] = Fraction(e - n)
            if n >= 1:
                out[(n - 1) * m + e, n * m + e] = -1 / a
    return out


def constant_inclusion(bound: int, m: int, a) -> np.ndarray:
    """Columns: images of E^e under E -> E(1 + aX), in the sen_matrix basis."""
    ring = sen_ring(bound, m)
    a = rational(a)
    image = ring.eps() * (ring.one() + ring.var("X").scale(a))
    cols = []
    power = ring.one()
    for e in range(m):
        cols.append([Fraction(x.numerator, x.denominator) for x in power.data])
        power = power * image
    return np.array(cols, dtype=object).T


@dataclass
class SenReport:
    bound: int
    m: int
    a: Fraction
    injective: bool
    image_in_kernel: bool
    kernel_equals_image: bool
    surjective_below_top: bool
    intertwining: str = "not requested"
    details: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        base = self.injective and self.image_in_kernel and self.kernel_equals_image and self.surjective_below_top
        return base and self.intertwining in ("pass", "not requested")

    def to_record(self) -> dict:
        return {
            "pd_degree": self.bound,
            "m": self.m,
            "a": str(self.a),
            "injective": self.injective,
            "image_in_kernel": self.image_in_kernel,
            "kernel_equals_image": self.kernel_equals_image,
            "surjective_below_top": self.surjective_below_top,
            "intertwining": self.intertwining,
            "details": self.details,
            "status": "pass" if self.passed else "fail",
        }


def _pd_series_product(left: List[np.ndarray], right: List[np.ndarray], bound: int) -> List[np.ndarray]:
    """(sum L_i X^[i]) (sum R_j X^[j]) truncated at X-degree ``bound``."""
    size = left[0].shape[0]
    out = [_zeros((size, size)) for _ in range(bound + 1)]
    for i, L in enumerate(left):
        if not L.any():
            continue
        for j, R in enumerate(right):
            if i + j > bound:
                break
            out[i + j] = out[i + j] + L.dot(R) * comb(i + j, i)
    return out


def check_sen_intertwining(phi_M: SeriesMatrix, a, bound: int, n_max: int = 40) -> Tuple[str, Dict]:
    """Coefficient identities for (1 + aX)^(phi_M) = sum C_n X^[n].

    With C_n = prod_{i<n}(a phi_M - a i) the intertwining with phi on S^1
    amounts to n C_n + C_(n+1)/a = C_n phi_M for every n, which needs the
    series to stop.  The inverse (1 + aX)^(-phi_M) is compared up to X-degree
    ``bound``.
    """
    a = rational(a)
    ts_a = TruncatedSeries.const(a, phi_M.m)
    cert = certify_a_small(phi_M, ts_a, ValuationConfig(2), n_max=n_max, cutoff=0)
    if not (isinstance(cert, SmallnessCertificate) and cert.mode == "ExactVanishing"):
        return "refused", {"reason": "series not finite", "certificate": cert.to_record()}
    n_star = cert.n_star
    C = arithmetic_products(phi_M, ts_a, n_star)
    Phi = phi_operator(phi_M)
    for n in range(n_star):
        lhs = C[n] * n + C[n + 1] * (1 / a)
        if not (lhs == C[n].dot(Phi)).all():
            return "fail", {"relation": "intertwining", "n": n}
    size = Phi.shape[0]
    inv = [rational_identity(size)]
    step = -Phi * a
    for i in range(bound):
        inv.append((step - rational_identity(size) * (a * i)).dot(inv[-1]))
    prod = _pd_series_product(C[: bound + 1], inv, bound)
    ident = rational_identity(size)
    for n, P in enumerate(prod):
        want = ident if n == 0 else _zeros((size, size))
        if not (P == want).all():
            return "fail", {"relation": "inverse", "degree": n}
    return "pass", {"n_star": n_star}


def verify_sen_exactness(bound: int, a, m: int, phi_M: Optional[SeriesMatrix] = None) -> SenReport:
    """0 -> S^0 -> S^1 -> S^1 -> 0 at truncation (bound, m).

    Exactness on the right is checked modulo the top X-degree, which the
    truncation cuts off.  Needs bound >= m - 1 so that every E^e(1 + aX)^e
    fits.
    """
    a = rational(a)
    if a == 0:
        raise ValueError("a must be nonzero")
    if bound < m - 1:
        raise ValueError("the PD bound must be at least m - 1")
    phi = sen_matrix(bound, m, a)
    incl = constant_inclusion(bound, m, a)
    size = phi.shape[0]
    injective = exact_rank(incl) == m
    image_in_kernel = not phi.dot(incl).any()
    kernel_dim = size - exact_rank(phi)
    top = _zeros((size, m))
    for e in range(m):
        top[bound * m + e, e] = Fraction(1)
    surjective = exact_rank(np.concatenate([phi, top], axis=1)) == size
    report = SenReport(
        bound, m, a, injective, image_in_kernel, image_in_kernel and injective and kernel_dim == m, surjective,
        details={"kernel_dim": kernel_dim, "space_dim": size},
    )
    if phi_M is not None:
        if phi_M.m != m:
            raise ValueError("phi_M truncation differs from m")
        status, info = check_sen_intertwining(phi_M, a, bound)
        report.intertwining = status
        report.details["intertwining"] = info
    return report


def divided_power_element(ring: PDRing, coeffs: Sequence) -> PDElement:
    """sum coeffs[n] X^[n] with constant coefficients."""
    return ring.from_terms({(n,): TruncatedSeries.const(rational(c), ring.m) for n, c in enumerate(coeffs) if rational(c)})

