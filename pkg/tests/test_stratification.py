from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from prismcrystal.connections import CrystalSpec
from prismcrystal.cosimplicial import Flavor, log_partner
from prismcrystal.random_specs import random_spec
from prismcrystal.rings import SeriesMatrix, TruncatedSeries
from prismcrystal.stratification import (
    ARITHMETIC_FIRST,
    MissingEntry,
    PreconditionFailed,
    StratificationTable,
    build_stratification,
    check_iteration,
    evaluate,
    extract_connection,
    identity_table,
    transport_to_log,
    verify_cocycle,
)

TS = TruncatedSeries
SM = SeriesMatrix
KINDS = ["relative_smooth", "relative_log", "absolute_smooth", "absolute_log"]


def relative_rank1(c=Fraction(7)):
    f = Flavor("relative_smooth", 1, 2)
    return CrystalSpec(f, 1, (SM.scalar(TS(2, [0, c]), 1),))


def diag_example(a=Fraction(5, 3), m=1):
    f = Flavor("absolute_smooth", 1, m, a=a)
    return CrystalSpec(f, 2, (SM.elementary(2, 0, 1, m),), SM.constant([[1, 0], [0, 0]], m))


def test_relative_rank_one_table():
    c = Fraction(7)
    t = build_stratification(relative_rank1(c), 6)
    assert t.coeffs == {(0, (0,)): SM.identity(1, 2), (0, (1,)): SM.scalar(TS(2, [0, c]), 1)}


def test_diag_example_entries():
    a = Fraction(5, 3)
    spec = diag_example(a)
    t = build_stratification(spec, 6)
    assert t.get(1, (0,)) == spec.phi.scale(a)
    assert t.get(0, (1,)) == spec.N[0]
    assert t.get(1, (1,)).is_zero()


def test_zero_connection_table():
    f = Flavor("absolute_smooth", 2, 2, a=3)
    spec = CrystalSpec(f, 2, (SM.zeros(2, 2),) * 2, SM.zeros(2, 2))
    assert build_stratification(spec, 6) == identity_table(f, 2, 6)


def test_preconditions_are_enforced():
    f = Flavor("relative_smooth", 2, 1)
    spec = CrystalSpec(f, 2, (SM.elementary(2, 0, 1, 1), SM.elementary(2, 1, 0, 1)))
    with pytest.raises(PreconditionFailed) as err:
        build_stratification(spec, 4)
    assert err.value.check.name == "integrability"


@pytest.mark.parametrize("spec", [relative_rank1(), diag_example(), diag_example(m=3)], ids=["rel", "abs1", "abs3"])
def test_cocycle_and_mutation(spec):
    t = build_stratification(spec, 6)
    assert verify_cocycle(t).passed
    i, n = max(t.keys(), key=lambda k: k[0] + sum(k[1]))
    bad = t.with_entry(i, n, t.get(i, n) + SM.identity(spec.r, spec.m))
    rep = verify_cocycle(bad)
    assert not rep.passed
    assert rep.witness["map"] == "cocycle" and "monomial" in rep.witness


def test_identity_table_passes():
    f = Flavor("absolute_log", 2, 2, a=1, pi=2)
    assert verify_cocycle(identity_table(f, 3, 5)).passed


def test_broken_constant_term_fails_degeneracy():
    t = build_stratification(diag_example(), 4)
    bad = t.with_entry(0, (0,), SM.identity(2, 1).scale(2))
    rep = verify_cocycle(bad)
    assert not rep.degeneracy_ok


def test_extract_examples():
    spec = diag_example()
    assert extract_connection(build_stratification(spec, 6)) == spec
    f = Flavor("absolute_smooth", 1, 1, a=2)
    zero = extract_connection(identity_table(f, 2, 3))
    assert zero.phi.is_zero() and zero.N[0].is_zero()
    assert extract_connection(build_stratification(relative_rank1(), 3)) == relative_rank1()


def test_extract_needs_degree_one():
    with pytest.raises(MissingEntry):
        extract_connection(identity_table(Flavor("relative_log", 1, 1), 1, 0))


def test_evaluate_examples():
    t = build_stratification(relative_rank1(), 6)
    assert evaluate(t, {}) == SM.identity(1, 2)
    assert evaluate(t, {"Y1": TS.eps(2)}) == SM.identity(1, 2)
    t2 = build_stratification(relative_rank1(Fraction(2)), 6)
    y = TS(2, [3, 1])
    s = evaluate(t, {"Y1": y}) + evaluate(t2, {"Y1": y}) - SM.identity(1, 2)
    both = StratificationTable(t.flavor, 1, 6, {(0, (0,)): SM.identity(1, 2), (0, (1,)): t.get(0, (1,)) + t2.get(0, (1,))})
    assert s == evaluate(both, {"Y1": y})


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(3))
def test_random_specs_full_cycle(kind, seed):
    spec = random_spec(100 + seed, kind, d=2, r=2, m=2)
    t = build_stratification(spec, 5)
    assert t == build_stratification(spec, 5, ordering=ARITHMETIC_FIRST)
    assert verify_cocycle(t).passed
    assert check_iteration(t).passed
    assert extract_connection(t) == spec


@given(st.integers(0, 10_000))
def test_orderings_agree(seed):
    spec = random_spec(seed, "absolute_smooth", d=2, r=3, m=3)
    assert build_stratification(spec, 5) == build_stratification(spec, 5, ordering=ARITHMETIC_FIRST)


@given(st.integers(0, 10_000), st.sampled_from([Fraction(2), Fraction(-1, 3)]))
def test_smooth_to_log_transport(seed, pi):
    spec = random_spec(seed, "absolute_smooth", d=1, r=2, m=2)
    smooth = build_stratification(spec, 5)
    log = build_stratification(spec.with_flavor(log_partner(spec.flavor, pi)), 5)
    assert transport_to_log(smooth, pi) == log


def test_iteration_catches_a_bad_table():
    t = build_stratification(diag_example(m=2), 4)
    bad = t.with_entry(2, (0,), SM.identity(2, 2))
    rep = check_iteration(bad)
    assert not rep.passed and rep.failure["relation"] == "arithmetic"
