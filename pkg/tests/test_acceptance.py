"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run under pytest (lines are printed past output capture) or directly with
``python3 tests/test_acceptance.py``.  All comparisons are exact.
"""

import random
import sys
import time
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oracles import de_rham_betti, point_enhanced_betti  # noqa: E402

from prismcrystal.cohomology import (  # noqa: E402
    DegreeWindow,
    dr_cohomology,
    enhanced_cohomology,
    sen_ring,
    sen_solve,
    verify_sen_exactness,
)
from prismcrystal.connections import CrystalSpec  # noqa: E402
from prismcrystal.cosimplicial import Flavor, check_simplicial_identities, log_partner  # noqa: E402
from prismcrystal.pdalgebra import verify_formal_identities  # noqa: E402
from prismcrystal.random_specs import random_enhanced_spec, random_spec  # noqa: E402
from prismcrystal.realization import (  # noqa: E402
    GroupElementData,
    check_homomorphism,
    check_polynomial_intertwining,
    realize,
)
from prismcrystal.rings import SeriesMatrix, TruncatedSeries  # noqa: E402
from prismcrystal.stratification import (  # noqa: E402
    PreconditionFailed,
    build_stratification,
    check_iteration,
    extract_connection,
    transport_to_log,
    verify_cocycle,
)

PD_DEGREE = 6
SAMPLE_SIZE = 60
KINDS = ("relative_smooth", "relative_log", "absolute_smooth", "absolute_log")


@lru_cache(maxsize=None)
def sample():
    """Seeded specs with d, r, m drawn from [1,3] x [1,4] x [1,4], cycling the flavors."""
    specs = [random_spec(seed, KINDS[seed % 4]) for seed in range(SAMPLE_SIZE)]
    return [(spec, build_stratification(spec, PD_DEGREE)) for spec in specs]


def _perturbation(rng: random.Random, r: int, m: int) -> SeriesMatrix:
    """A single matrix entry at a single eps-degree."""
    i, j, e = rng.randrange(r), rng.randrange(r), rng.randrange(m)
    unit = Fraction(rng.choice((1, -1, 2, -3)), rng.choice((1, 2)))
    return SeriesMatrix.elementary(r, i, j, m).scale(TruncatedSeries.eps(m) ** e * TruncatedSeries.const(unit, m))


def criterion_1():
    t0 = time.perf_counter()
    rep = verify_formal_identities(8)
    elapsed = time.perf_counter() - t0
    return rep.passed and elapsed < 10, f"degree 8, {len(rep.checks)} identities, {elapsed:.2f}s (limit 10s)"


def criterion_2():
    flavors = [
        Flavor("relative_smooth", 2, 2, beta=TruncatedSeries(2, [0, 3])),
        Flavor("relative_log", 2, 2),
        Flavor("absolute_smooth", 2, 2, a=Fraction(-2, 3)),
        Flavor("absolute_log", 2, 2, a=3, pi=2),
    ]
    reports = [check_simplicial_identities(f, 6) for f in flavors]
    n = sum(len(r.checks) for r in reports)
    bad = [r.summary() for r in reports if not r.passed]
    return not bad, f"4 flavors at PD degree 6, {n} identities" + (f"; {bad}" if bad else "")


def _is_genuine(table) -> bool:
    """True when the table is exactly the stratification of its own degree-one data."""
    try:
        return build_stratification(extract_connection(table), table.bound) == table
    except (PreconditionFailed, ValueError):
        return False


def criterion_3():
    """Cocycle on the sample, then single-coefficient mutations.

    Higher coefficients are determined by the degree-one ones, so a mutation
    there must be caught.  A mutation of a degree-one coefficient can land on
    the table of another valid connection, which is a true cocycle; there the
    verdict must match whether the table is that stratification exactly.
    Adding the identity to a degree-one coefficient breaks nilpotence and must
    always be caught.
    """
    rng = random.Random(2024)
    failures = []
    counts = {"higher": 0, "degree_one": 0, "degree_one_identity": 0, "genuine": 0}
    for idx, (spec, table) in enumerate(sample()):
        if not verify_cocycle(table).passed:
            failures.append(f"spec {idx} cocycle")
            continue
        keys = list(table.keys())
        i_extra = 0 if spec.flavor.is_relative else 1
        absent = (i_extra, (PD_DEGREE - i_extra,) + (0,) * (spec.d - 1))
        if absent not in keys:
            keys.append(absent)
        for i, n in keys:
            mutated = table.with_entry(i, n, table.get(i, n) + _perturbation(rng, spec.r, spec.m))
            passed = verify_cocycle(mutated).passed
            if i + sum(n) >= 2:
                counts["higher"] += 1
                if passed:
                    failures.append(f"spec {idx} mutation at {(i, n)} undetected")
                continue
            if i + sum(n) == 0:
                continue
            counts["degree_one"] += 1
            genuine = _is_genuine(mutated)
            counts["genuine"] += genuine
            if passed != genuine:
                failures.append(f"spec {idx} verdict at {(i, n)} is {passed}, genuine {genuine}")
            counts["degree_one_identity"] += 1
            shifted = table.with_entry(i, n, table.get(i, n) + SeriesMatrix.identity(spec.r, spec.m))
            if verify_cocycle(shifted).passed:
                failures.append(f"spec {idx} identity shift at {(i, n)} undetected")
    detail = (
        f"{len(sample())} specs at PD degree 6; {counts['higher']} higher-degree mutations, "
        f"{counts['degree_one_identity']} identity shifts, {counts['degree_one']} random degree-one "
        f"mutations ({counts['genuine']} land on another valid table)"
    )
    return not failures, detail + (f"; {failures[:3]}" if failures else "")


def criterion_4():
    bad = [idx for idx, (spec, table) in enumerate(sample()) if extract_connection(table) != spec]
    return not bad, f"{len(sample())} specs recovered" + (f"; mismatches {bad}" if bad else "")


def criterion_5():
    pi = Fraction(2)
    bad, count = [], 0
    for seed in range(12):
        spec = random_spec(1000 + seed, "absolute_smooth", d=1 + seed % 2)
        smooth = build_stratification(spec, PD_DEGREE)
        log = build_stratification(spec.with_flavor(log_partner(spec.flavor, pi)), PD_DEGREE)
        count += 1
        if transport_to_log(smooth, pi) != log:
            bad.append(seed)
    return not bad, f"pi = 2, {count} spec pairs" + (f"; mismatches {bad}" if bad else "")


def criterion_6():
    bad = []
    for idx, (_, table) in enumerate(sample()):
        if verify_cocycle(table).passed and not check_iteration(table).passed:
            bad.append(idx)
    return not bad, f"{len(sample())} cocycle-passing tables" + (f"; failures {bad}" if bad else "")


def criterion_7():
    problems = []
    # zero connection: r m binom(d, q) at multidegree 0, against the oracle
    for d, r, m, kind in ((1, 2, 2, "relative_log"), (2, 1, 3, "relative_smooth"), (3, 2, 1, "relative_log")):
        f = Flavor(kind, d, m) if kind == "relative_log" else Flavor(kind, d, m, beta=TruncatedSeries.eps(m))
        spec = CrystalSpec(f, r, (SeriesMatrix.zeros(r, m),) * d)
        got = dr_cohomology(spec, DegreeWindow.cube(d, 0, 0)).betti[(0,) * d]
        want = [r * m * comb(d, q) for q in range(d + 1)]
        if got != want or de_rham_betti(spec, (0,) * d) != want:
            problems.append(f"zero d={d}")
    # Euler balance and oracle agreement on random specs
    for seed in range(10):
        spec = random_spec(seed, KINDS[seed % 4], d=2, r=2, m=2)
        window = DegreeWindow.cube(2, -1, 1)
        rep = dr_cohomology(spec, window)
        if not rep.euler_consistent():
            problems.append(f"euler {seed}")
        if any(rep.betti[k] != de_rham_betti(spec, k) for k in window.degrees()):
            problems.append(f"oracle {seed}")
        if spec.phi is not None and not enhanced_cohomology(spec, window).euler_consistent():
            problems.append(f"enhanced euler {seed}")
    # the point with phi_M the Euler derivation
    for m in (1, 2, 3, 4):
        spec = CrystalSpec(Flavor("arithmetic_point", 0, m, a=-1), 1, (), SeriesMatrix.zeros(1, m))
        got = enhanced_cohomology(spec, DegreeWindow(())).betti[()]
        if got != [1, 1] or point_enhanced_betti(spec) != [1, 1]:
            problems.append(f"point m={m}")
    return not problems, "zero connections, 10 random specs on [-1,1]^2, point for m <= 4" + (
        f"; {problems}" if problems else ""
    )


def criterion_8():
    bound, a = 20, Fraction(-1)
    ring = sen_ring(bound, 1)
    f = sen_solve(ring.var("X"), a)
    want = ring.from_terms({(n,): TruncatedSeries.const(factorial(n - 1), 1) for n in range(2, bound + 1)})
    problems = [] if f == want else ["solve"]
    for m in (1, 2, 3):
        rep = verify_sen_exactness(bound, a, m)
        if not (rep.passed and rep.details["kernel_dim"] == m):
            problems.append(f"exactness m={m}")
    checked = 0
    for seed in range(8):
        spec = random_enhanced_spec(seed, r=3, m=1 + seed % 3, d=1)
        rep = verify_sen_exactness(bound, a, spec.m, spec.phi)
        checked += 1
        if rep.intertwining != "pass" or not rep.passed:
            problems.append(f"intertwining {seed}: {rep.intertwining}")
    return not problems, f"N = 20, a = -1, exactness for m <= 3, {checked} intertwining checks" + (
        f"; {problems}" if problems else ""
    )


def criterion_9():
    rng = random.Random(99)
    problems = []
    specs = [random_enhanced_spec(seed, d=2, r=3) for seed in range(5)]
    for idx, spec in enumerate(specs):
        if realize(spec, GroupElementData.identity(spec.d, spec.m)) != SeriesMatrix.identity(spec.r, spec.m):
            problems.append(f"identity {idx}")
    for pair in range(20):
        spec = specs[pair % len(specs)]
        n1 = [rng.randint(-3, 3) for _ in range(spec.d)]
        n2 = [rng.randint(-3, 3) for _ in range(spec.d)]
        t = TruncatedSeries(spec.m, [Fraction(rng.choice((1, -1, 2))), *(Fraction(rng.randint(-3, 3)) for _ in range(spec.m - 1))])
        if not check_homomorphism(spec, n1, n2, t):
            problems.append(f"homomorphism pair {pair}")
    for k in range(20):
        spec = random_enhanced_spec(500 + k)
        coeffs = [Fraction(rng.randint(-5, 5), rng.randint(1, 3)) for _ in range(rng.randint(1, 5))]
        if not check_polynomial_intertwining(spec, coeffs):
            problems.append(f"polynomial {k}")
    return not problems, "identity on 5 specs, 20 homomorphism pairs, 20 polynomials of degree <= 4" + (
        f"; {problems}" if problems else ""
    )


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


def _line(n, ok, detail, seconds):
    return f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f}s]"


@pytest.mark.parametrize("n", range(1, 10))
def test_criterion(n, capsys):
    t0 = time.perf_counter()
    ok, detail = CRITERIA[n - 1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail, time.perf_counter() - t0))
    assert ok, detail


def main() -> int:
    total = time.perf_counter()
    failed = 0
    for n, fn in enumerate(CRITERIA, start=1):
        t0 = time.perf_counter()
        ok, detail = fn()
        failed += not ok
        print(_line(n, ok, detail, time.perf_counter() - t0), flush=True)
    print(f"{9 - failed}/9 criteria passed in {time.perf_counter() - total:.1f}s")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
