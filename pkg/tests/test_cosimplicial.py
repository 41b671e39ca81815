from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from prismcrystal.cosimplicial import (
    Flavor,
    FlavorKind,
    RingHom,
    check_simplicial_identities,
    degeneracy,
    face,
    log_partner,
    mutated_face,
)
from prismcrystal.pdalgebra import pd_inv_one_plus
from prismcrystal.rings import TruncatedSeries

from conftest import small_fracs

TS = TruncatedSeries

FLAVORS = [
    Flavor("relative_smooth", 2, 2, beta=TS(2, [0, 3])),
    Flavor("relative_log", 2, 2),
    Flavor("absolute_smooth", 1, 2, a=Fraction(3, 2)),
    Flavor("absolute_log", 1, 2, a=-2, pi=2),
    Flavor("arithmetic_point", 0, 3, a=5),
]


def test_relative_face_zero():
    f = FLAVORS[0]
    p0 = face(f, 0, 1, 4)
    R = p0.target
    Y1, Y2 = R.var("Y1_1"), R.var("Y1_2")
    beta = R.const(f.beta)
    assert p0.apply(p0.source.var("Y1_1")) == (Y2 - Y1) * pd_inv_one_plus(-(beta * Y1))


def test_absolute_face_one_on_x():
    p1 = face(FLAVORS[2], 1, 1, 4)
    assert p1.apply(p1.source.var("X1")) == p1.target.var("X2")


@pytest.mark.parametrize("flavor", FLAVORS, ids=lambda f: f.kind.value)
@pytest.mark.parametrize("i", [1, 2])
def test_inner_faces_fix_eps(flavor, i):
    p = face(flavor, i, 1, 3)
    assert p.apply(p.source.eps()) == p.target.eps()


@pytest.mark.parametrize("flavor", FLAVORS, ids=lambda f: f.kind.value)
def test_degeneracy_zero_kills_first_variables(flavor):
    s0 = degeneracy(flavor, 0, 1, 3)
    for v in s0.source.varnames:
        assert s0.apply(s0.source.var(v)).is_zero()
    assert s0.apply(s0.source.eps()) == s0.target.eps()


@pytest.mark.parametrize("flavor", FLAVORS, ids=lambda f: f.kind.value)
@pytest.mark.parametrize("bound", [5, 6])
def test_simplicial_identities(flavor, bound):
    rep = check_simplicial_identities(flavor, bound)
    assert rep.passed, rep.summary()


def test_removed_unit_factor_is_caught():
    f = FLAVORS[2]
    rep = check_simplicial_identities(f, 5, faces={("p", 0, 1): mutated_face(f, 1, 5)})
    assert not rep.passed
    assert any(c.witness for c in rep.checks if not c.passed)


@given(st.lists(small_fracs, min_size=4, max_size=4), st.lists(small_fracs, min_size=4, max_size=4))
def test_faces_are_ring_maps(a, b):
    f = FLAVORS[2]
    p0 = face(f, 0, 1, 4)
    R = p0.source
    mons = [(1, 0), (0, 1), (1, 1), (0, 2)]
    x = R.from_terms({e: TS(2, [c, 1]) for e, c in zip(mons, a)})
    y = R.from_terms({e: TS(2, [c, 0]) for e, c in zip(mons, b)})
    assert p0.apply(x * y) == p0.apply(x) * p0.apply(y)


@pytest.mark.parametrize("i", [0, 1, 2])
def test_smooth_and_log_faces_agree_after_rescaling(i):
    pi = Fraction(2)
    sm = Flavor("absolute_smooth", 1, 2, a=3)
    lg = log_partner(sm, pi)
    assert lg.a == sm.a * pi
    bound = 4

    def rescale(level):
        R = sm.level_ring(level, bound)
        imgs = {v: (R.var(v).scale(1 / pi) if v.startswith("X") else R.var(v)) for v in R.varnames}
        return RingHom(R, R, imgs, R.eps(), "rescale")

    lhs = face(lg, i, 1, bound).then(rescale(2))
    rhs = rescale(1).then(face(sm, i, 1, bound))
    assert lhs.generator_images() == rhs.generator_images()


def test_flavor_validation():
    with pytest.raises(ValueError):
        Flavor("arithmetic_point", 1, 2, a=1)
    with pytest.raises(ValueError):
        Flavor("absolute_smooth", 1, 2)
    with pytest.raises(ValueError):
        Flavor("absolute_smooth", 1, 2, a=TS(2, [1, 1]))
    with pytest.raises(ValueError):
        Flavor("relative_log", 1, 2, beta=TS(2, [0, 2]))
    assert Flavor(FlavorKind.RELATIVE_LOG, 1, 3).beta == TS.eps(3)
