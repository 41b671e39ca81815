from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from prismcrystal.connections import (
    CrystalSpec,
    GradedElement,
    SmallnessCertificate,
    SmallnessRefusal,
    SpecError,
    apply_nabla,
    certify_a_small,
    check_enhanced_relation,
    check_integrability,
    check_nilpotence,
    nilpotency_index,
)
from prismcrystal.cosimplicial import Flavor
from prismcrystal.random_specs import random_enhanced_spec
from prismcrystal.realization import check_polynomial_intertwining
from prismcrystal.rings import SeriesMatrix, TruncatedSeries, ValuationConfig, vp

from conftest import matrices, small_fracs

TS = TruncatedSeries
SM = SeriesMatrix


def rel(d, r, m, Ns):
    return CrystalSpec(Flavor("relative_smooth", d, m), r, tuple(Ns))


def e12(m=1):
    return SM.elementary(2, 0, 1, m)


def e21(m=1):
    return SM.elementary(2, 1, 0, m)


@pytest.mark.parametrize(
    "Ns, status",
    [
        ([e12()], "pass"),
        ([e12(), SM.zeros(2, 1)], "pass"),
        ([e12(), e21()], "fail"),
    ],
)
def test_integrability(Ns, status):
    assert check_integrability(rel(len(Ns), 2, 1, Ns)).status == status


def test_integrability_witness_names_pair():
    res = check_integrability(rel(2, 2, 1, [e12(), e21()]))
    assert res.witness == {"pair": [1, 2]}


@pytest.mark.parametrize(
    "mat, index",
    [(e12(), 2), (SM.scalar(TS.eps(3), 1), 3), (SM.identity(2, 1), None)],
)
def test_nilpotency_index(mat, index):
    assert nilpotency_index(mat) == index
    r = mat.shape[0]
    assert check_nilpotence(rel(1, r, mat.m, [mat])).passed == (index is not None)


@given(matrices(2, 3))
def test_nilpotent_iff_nilpotent_mod_eps(A):
    mod = SM.constant(A.mod_eps().tolist(), 1)
    assert (nilpotency_index(A) is None) == (nilpotency_index(mod) is None)


def enhanced(phi_rows, N, m=1, a=3):
    f = Flavor("absolute_smooth", 1, m, a=a)
    return CrystalSpec(f, len(phi_rows), (N,), SM.constant(phi_rows, m))


@pytest.mark.parametrize(
    "phi, N, status",
    [
        ([[1, 0], [0, 0]], e12(), "pass"),
        ([[0, 0], [0, 0]], SM.zeros(2, 1), "pass"),
        ([[0, 0], [0, 0]], e12(), "fail"),
    ],
)
def test_enhanced_relation(phi, N, status):
    assert check_enhanced_relation(enhanced(phi, N)).status == status


def test_enhanced_relation_sees_eps_derivative():
    # N = eps * Id commutes with a zero phi yet satisfies the relation via eps d/deps
    spec = enhanced([[0]], SM.scalar(TS.eps(2), 1), m=2)
    assert check_enhanced_relation(spec).passed


def test_enhanced_relation_needs_phi():
    with pytest.raises(SpecError):
        check_enhanced_relation(rel(1, 1, 1, [SM.zeros(1, 1)]))


def test_spec_validation():
    f = Flavor("absolute_smooth", 1, 2, a=1)
    with pytest.raises(SpecError):
        CrystalSpec(f, 1, (SM.zeros(1, 2),))
    with pytest.raises(SpecError):
        CrystalSpec(Flavor("relative_smooth", 1, 2), 1, (SM.zeros(1, 2),), SM.zeros(1, 2))
    with pytest.raises(SpecError):
        CrystalSpec(f, 2, (SM.zeros(1, 2),), SM.zeros(2, 2))
    with pytest.raises(SpecError):
        CrystalSpec(f, 1, (SM.zeros(1, 3),), SM.zeros(1, 2))


@pytest.mark.parametrize("a", [1, Fraction(-7, 3)])
def test_exact_vanishing_certificate(a):
    phi = SM.constant([[0, 0], [0, 1]], 1)
    cert = certify_a_small(phi, a, ValuationConfig(3))
    assert isinstance(cert, SmallnessCertificate)
    assert (cert.mode, cert.n_star) == ("ExactVanishing", 2)


def test_identity_phi_vanishes_at_two():
    cert = certify_a_small(SM.identity(1, 1), 1, ValuationConfig(2))
    assert (cert.mode, cert.n_star) == ("ExactVanishing", 2)


def test_valuation_growth_certificate():
    phi = SM.scalar(TS.const(Fraction(1, 2), 1), 2)
    cfg = ValuationConfig(5)
    cert = certify_a_small(phi, 5, cfg, n_max=20, cutoff=10)
    assert isinstance(cert, SmallnessCertificate) and cert.mode == "ValuationGrowth"
    # oracle: direct product and valuation scan on the scalar
    floors = []
    prod = Fraction(1)
    for n in range(1, 21):
        prod *= 5 * (Fraction(1, 2) - (n - 1))
        floors.append(vp(prod, cfg))
    assert cert.details["floors"] == floors
    assert cert.n_star == next(n for n, v in enumerate(floors, 1) if v > 10)


def test_refusal_is_a_value():
    # a of valuation zero with a non-integer spectrum never grows
    cert = certify_a_small(SM.scalar(TS.const(Fraction(1, 2), 1), 1), 1, ValuationConfig(5), n_max=12)
    assert isinstance(cert, SmallnessRefusal)


def test_graded_action():
    spec = CrystalSpec(Flavor("relative_smooth", 1, 2), 1, (SM.zeros(1, 2),))
    v = SM.constant([[1]], 2)
    x = GradedElement({(2,): v})
    assert apply_nabla(spec, 1, x) == GradedElement({(2,): v.scale(TS(2, [0, 2]))})


def test_graded_action_degree_zero_is_N():
    N = e12(2)
    spec = rel(1, 2, 2, [N])
    v = SM.from_record([[["1", "0"], ["2", "0"]]], 2)
    assert apply_nabla(spec, 1, GradedElement({(0,): v})).components[(0,)] == N @ v


@given(st.integers(-3, 3), st.integers(0, 1))
def test_graded_leibniz(k, j):
    # nabla(T^k v) = T^k N v + beta k T^k v
    N = e12(2)
    spec = rel(1, 2, 2, [N])
    v = SM.elementary(2, j, 0, 2)
    out = apply_nabla(spec, 1, GradedElement({(k,): v}))
    want = N @ v + v.scale(TS.eps(2)).scale(k)
    assert out == GradedElement({(k,): want})


@given(st.integers(0, 200), st.lists(small_fracs, min_size=1, max_size=5))
def test_polynomial_intertwining_on_random_specs(seed, coeffs):
    spec = random_enhanced_spec(seed, r=3, m=2, d=2)
    assert check_polynomial_intertwining(spec, coeffs)
