"""Stratification tables: build from a connection, verify the cocycle, invert.

A table stores the coefficient matrices M_{i,n} of

    eps(e_j) = sum_{i,n} M_{i,n}[:, j] X1^[i] Y1^[n]

for ``i + |n| <= bound``.  Only nonzero entries are kept; the (0, 0) entry is
always the identity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Dict, List, Mapping, Optional, Tuple

from .connections import (
    CheckResult,
    CrystalSpec,
    SmallnessCertificate,
    check_enhanced_relation,
    check_integrability,
    check_nilpotence,
    certify_a_small,
)
from .cosimplicial import Flavor, FlavorKind, degeneracy, face
from .pdalgebra import PDMatrix
from .rings import SeriesMatrix, TruncatedSeries, ValuationConfig, rational

Key = Tuple[int, Tuple[int, ...]]

GEOMETRIC_FIRST = "geometric_first"
ARITHMETIC_FIRST = "arithmetic_first"
ORDERINGS = (GEOMETRIC_FIRST, ARITHMETIC_FIRST)


class PreconditionFailed(ValueError):
    def __init__(self, check: CheckResult):
        super().__init__(f"precondition {check.name} failed: {check.witness}")
        self.check = check


class MissingEntry(ValueError):
    pass


@dataclass
class StratificationTable:
    flavor: Flavor
    r: int
    bound: int
    coeffs: Dict[Key, SeriesMatrix] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (i, n), mat in self.coeffs.items():
            key = (int(i), tuple(int(x) for x in n))
            if len(key[1]) != self.flavor.d:
                raise ValueError(f"key {key} has wrong geometric length")
            if self.flavor.is_relative and key[0]:
                raise ValueError("relative tables carry only i = 0 entries")
            if key[0] + sum(key[1]) > self.bound:
                continue
            if not mat.is_zero():
                clean[key] = mat
        self.coeffs = clean

    def get(self, i: int, n) -> SeriesMatrix:
        return self.coeffs.get((i, tuple(n)), SeriesMatrix.zeros(self.r, self.flavor.m))

    def keys(self) -> List[Key]:
        return sorted(self.coeffs, key=lambda k: (k[0] + sum(k[1]), k))

    def __eq__(self, other):
        if not isinstance(other, StratificationTable):
            return NotImplemented
        return (
            self.flavor == other.flavor
            and self.r == other.r
            and self.bound == other.bound
            and self.coeffs == other.coeffs
        )

    def with_entry(self, i: int, n, mat: SeriesMatrix) -> "StratificationTable":
        coeffs = dict(self.coeffs)
        coeffs[(i, tuple(n))] = mat
        return StratificationTable(self.flavor, self.r, self.bound, coeffs)

    def as_pd_matrix(self, bound: Optional[int] = None) -> PDMatrix:
        """eps as an r x r matrix over the level-1 PD ring."""
        bound = self.bound if bound is None else bound
        ring = self.flavor.level_ring(1, bound)
        terms = {self.flavor.table_exponent(i, n): mat for (i, n), mat in self.coeffs.items()}
        return PDMatrix.from_table(ring, terms, self.r)

    def to_record(self) -> dict:
        return {
            "flavor": self.flavor.to_record(),
            "r": self.r,
            "pd_degree": self.bound,
            "coefficients": [
                {"i": i, "n": list(n), "matrix": self.coeffs[(i, n)].to_record()}
                for (i, n) in self.keys()
            ],
        }


def identity_table(flavor: Flavor, r: int, bound: int) -> StratificationTable:
    return StratificationTable(
        flavor, r, bound, {(0, (0,) * flavor.d): SeriesMatrix.identity(r, flavor.m)}
    )


# the two elementary steps


def arithmetic_step(mat: SeriesMatrix, phi: SeriesMatrix, a: TruncatedSeries, shift: int) -> SeriesMatrix:
    """Apply the semilinear a*phi_M - a*shift to every column of ``mat``."""
    return (phi @ mat + mat.euler() - mat.scale(Fraction(shift))).scale(a)


def geometric_step(mat: SeriesMatrix, N: SeriesMatrix, beta: TruncatedSeries, n_s: int) -> SeriesMatrix:
    """(N_s + n_s beta) applied to ``mat``."""
    return N @ mat + mat.scale(beta).scale(Fraction(n_s))


def _multi_indices(d: int, total: int):
    for n in itertools.product(range(total + 1), repeat=d):
        if sum(n) <= total:
            yield n


def _geometric_products(spec: CrystalSpec, bound: int) -> Dict[Tuple[int, ...], SeriesMatrix]:
    """G_n = prod_s prod_{k<n_s} (N_s + k beta), built by raising one index at a time."""
    beta = spec.flavor.geometric_beta
    zero = (0,) * spec.d
    out = {zero: SeriesMatrix.identity(spec.r, spec.m)}
    for n in sorted(_multi_indices(spec.d, bound), key=sum):
        if n == zero:
            continue
        s = next(k for k, x in enumerate(n) if x)
        prev = n[:s] + (n[s] - 1,) + n[s + 1:]
        out[n] = geometric_step(out[prev], spec.N[s], beta, prev[s])
    return out


def check_preconditions(
    spec: CrystalSpec,
    bound: int,
    cfg: Optional[ValuationConfig] = None,
    n_max: int = 40,
    cutoff: int = 10,
) -> List[CheckResult]:
    """Run the structural checks the build needs; raise on the first failure."""
    checks = [check_integrability(spec), check_nilpotence(spec)]
    if spec.phi is not None:
        checks.append(check_enhanced_relation(spec))
    for c in checks:
        if not c.passed:
            raise PreconditionFailed(c)
    if spec.phi is not None:
        cert = certify_a_small(spec.phi, spec.a, cfg or ValuationConfig(2), max(n_max, bound), cutoff)
        status = "pass" if isinstance(cert, SmallnessCertificate) else "fail"
        c = CheckResult("a_smallness", status, cert.to_record())
        if not c.passed:
            raise PreconditionFailed(c)
        checks.append(c)
    return checks


def build_stratification(
    spec: CrystalSpec,
    bound: int = 6,
    ordering: str = GEOMETRIC_FIRST,
    check: bool = True,
    cfg: Optional[ValuationConfig] = None,
) -> StratificationTable:
    """Coefficient table of the stratification attached to ``spec``.

    ``geometric_first`` applies the geometric product G_n and then the
    arithmetic factors shifted by |n|; ``arithmetic_first`` applies the
    unshifted arithmetic product and then G_n.  Both agree whenever the
    enhanced relation holds.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}")
    if bound < 0:
        raise ValueError("PD degree bound must be non-negative")
    if check:
        check_preconditions(spec, bound, cfg)
    geo = _geometric_products(spec, bound)
    coeffs: Dict[Key, SeriesMatrix] = {}
    if spec.phi is None:
        for n, mat in geo.items():
            coeffs[(0, n)] = mat
        return StratificationTable(spec.flavor, spec.r, bound, coeffs)

    a = spec.a
    if ordering == GEOMETRIC_FIRST:
        for n, g in geo.items():
            shift = sum(n)
            mat = g
            for i in range(bound - shift + 1):
                if i:
                    mat = arithmetic_step(mat, spec.phi, a, shift + i - 1)
                if mat.is_zero():
                    break
                coeffs[(i, n)] = mat
    else:
        arith = [SeriesMatrix.identity(spec.r, spec.m)]
        for i in range(bound):
            arith.append(arithmetic_step(arith[-1], spec.phi, a, i))
        for n, g in geo.items():
            for i in range(bound - sum(n) + 1):
                coeffs[(i, n)] = g @ arith[i]
    return StratificationTable(spec.flavor, spec.r, bound, coeffs)


# cocycle condition


@dataclass
class CocycleReport:
    passed: bool
    bound: int
    cocycle_ok: bool
    degeneracy_ok: bool
    witness: Optional[dict] = None

    def to_record(self) -> dict:
        return {
            "status": "pass" if self.passed else "fail",
            "pd_degree": self.bound,
            "cocycle": self.cocycle_ok,
            "degeneracy": self.degeneracy_ok,
            "witness": self.witness,
        }


def verify_cocycle(table: StratificationTable, bound: Optional[int] = None) -> CocycleReport:
    """p2*(eps) p0*(eps) == p1*(eps) in the level-2 ring and sigma0*(eps) == Id.

    Coefficients past ``bound`` are dropped on both sides.
    """
    bound = table.bound if bound is None else bound
    flavor = table.flavor
    eps = table.as_pd_matrix(bound)
    lhs = face(flavor, 2, 1, bound).apply_matrix(eps) @ face(flavor, 0, 1, bound).apply_matrix(eps)
    rhs = face(flavor, 1, 1, bound).apply_matrix(eps)
    witness = lhs.first_difference(rhs)
    base = degeneracy(flavor, 0, 1, bound).apply_matrix(eps)
    ident = PDMatrix.identity(base.ring, table.r)
    deg_diff = base.first_difference(ident)
    if witness is None and deg_diff is not None:
        witness = dict(deg_diff, map="degeneracy")
    elif witness is not None:
        witness = dict(witness, map="cocycle")
    return CocycleReport(
        witness is None, bound, lhs == rhs, deg_diff is None, witness
    )


# inverse direction


def extract_connection(table: StratificationTable) -> CrystalSpec:
    """Read the connection back: phi = a^{-1} M_{1,0}, N_s = M_{0,1_s}."""
    f = table.flavor
    if table.bound < 1:
        raise MissingEntry("table has no degree-one entries")
    d = f.d
    Ns = []
    for s in range(d):
        n = tuple(int(k == s) for k in range(d))
        Ns.append(table.get(0, n))
    phi = None
    if not f.is_relative:
        phi = table.get(1, (0,) * d).scale(f.a.inverse())
    return CrystalSpec(f, table.r, tuple(Ns), phi)


@dataclass
class IterationReport:
    passed: bool
    checked: int
    failure: Optional[dict] = None


def check_iteration(table: StratificationTable) -> IterationReport:
    """The recursions hold between every pair of stored degrees."""
    if table.bound < 1:
        return IterationReport(True, 0)
    spec = extract_connection(table)
    f = table.flavor
    beta = f.geometric_beta
    checked = 0
    for n in _multi_indices(f.d, table.bound):
        top_i = 0 if f.is_relative else table.bound - sum(n)
        for i in range(top_i + 1):
            cur = table.get(i, n)
            if i + sum(n) + 1 > table.bound:
                continue
            if spec.phi is not None:
                nxt = arithmetic_step(cur, spec.phi, f.a, i + sum(n))
                checked += 1
                if nxt != table.get(i + 1, n):
                    return IterationReport(False, checked, {"relation": "arithmetic", "i": i, "n": list(n)})
            for s in range(f.d):
                up = n[:s] + (n[s] + 1,) + n[s + 1:]
                checked += 1
                if geometric_step(cur, spec.N[s], beta, n[s]) != table.get(i, up):
                    return IterationReport(False, checked, {"relation": "geometric", "i": i, "n": list(n), "s": s + 1})
    return IterationReport(True, checked)


def evaluate(table: StratificationTable, assignment: Mapping[str, TruncatedSeries]) -> SeriesMatrix:
    """Specialize the level-1 variables to values in T_m.

    Keys are ``X`` and ``Y1``..``Yd`` (``X1``/``Y1_1`` are accepted too);
    unassigned variables are set to 0.
    """
    f = table.flavor
    m = f.m
    vals = {}
    for k, v in assignment.items():
        name = k.split("_")[0]
        if name == "X1":
            name = "X"
        if not isinstance(v, TruncatedSeries):
            v = TruncatedSeries.const(rational(v), m)
        if v.m != m:
            raise ValueError(f"value for {k} has truncation {v.m}, expected {m}")
        vals[name] = v
    allowed = {"X"} | {f"Y{s}" for s in range(1, f.d + 1)}
    unknown = set(vals) - allowed
    if unknown or ("X" in vals and not f.has_x):
        raise KeyError(f"unknown variables {sorted(unknown or {'X'})}")

    def divided(name: str, k: int) -> TruncatedSeries:
        v = vals.get(name, TruncatedSeries.zero(m))
        return (v ** k) * TruncatedSeries.const(Fraction(1, factorial(k)), m)

    out = SeriesMatrix.zeros(table.r, m)
    for (i, n), mat in table.coeffs.items():
        w = divided("X", i)
        for s, k in enumerate(n, start=1):
            w = w * divided(f"Y{s}", k)
        out = out + mat.scale(w)
    return out


# smooth and log comparison


def transport_to_log(table: StratificationTable, pi) -> StratificationTable:
    """Rescale M_{i,n} by pi^i and move to the log flavor with a_log = pi a."""
    f = table.flavor
    if f.kind != FlavorKind.ABSOLUTE_SMOOTH:
        raise ValueError("transport starts from an absolute smooth table")
    pi = rational(pi)
    if pi == 0:
        raise ValueError("pi must be nonzero")
    from .cosimplicial import log_partner

    target = log_partner(f, pi)
    coeffs = {(i, n): mat.scale(pi ** i) for (i, n), mat in table.coeffs.items()}
    return StratificationTable(target, table.r, table.bound, coeffs)
