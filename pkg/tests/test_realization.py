from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from prismcrystal.connections import CrystalSpec
from prismcrystal.cosimplicial import Flavor
from prismcrystal.random_specs import random_enhanced_spec
from prismcrystal.realization import (
    GroupElementData,
    RealizationError,
    check_homomorphism,
    check_intertwining,
    nilpotent_exp,
    realize,
)
from prismcrystal.rings import SeriesMatrix, TruncatedSeries

from conftest import unit_series

TS = TruncatedSeries
SM = SeriesMatrix


def example(m=2, a=3):
    f = Flavor("absolute_smooth", 1, m, a=a)
    return CrystalSpec(f, 2, (SM.elementary(2, 0, 1, m),), SM.constant([[1, 0], [0, 0]], m))


def test_identity_data_acts_trivially():
    spec = example()
    assert realize(spec, GroupElementData.identity(1, 2)) == SM.identity(2, 2)


def test_geometric_part_is_unipotent():
    spec = example()
    g = GroupElementData((2,), TS.one(2), TS(2, [1, 1]))
    want = SM.identity(2, 2) + SM.elementary(2, 0, 1, 2).scale(TS(2, [2, 2]))
    assert realize(spec, g) == want


def test_scalar_arithmetic_part():
    # phi = 1 on a rank-one crystal over K: (gE/E)^phi = gE/E
    f = Flavor("absolute_smooth", 1, 1, a=2)
    spec = CrystalSpec(f, 1, (SM.zeros(1, 1),), SM.identity(1, 1))
    g = GroupElementData((0,), TS.const(Fraction(5), 1), TS.one(1))
    assert realize(spec, g) == SM.scalar(TS.const(Fraction(5), 1), 1)


def test_nilpotent_exp():
    N = SM.elementary(2, 0, 1, 1)
    assert nilpotent_exp(N) == SM.identity(2, 1) + N
    with pytest.raises(RealizationError):
        nilpotent_exp(SM.identity(2, 1))


def test_non_finite_series_is_refused():
    f = Flavor("absolute_smooth", 1, 1, a=1)
    spec = CrystalSpec(f, 1, (SM.zeros(1, 1),), SM.scalar(TS.const(Fraction(1, 2), 1), 1))
    g = GroupElementData((0,), TS.const(Fraction(3), 1), TS.one(1))
    with pytest.raises(RealizationError):
        realize(spec, g)


def test_group_data_needs_units():
    with pytest.raises(ValueError):
        GroupElementData((0,), TS.eps(2), TS.one(2))


@given(
    st.integers(0, 10_000),
    st.lists(st.integers(-3, 3), min_size=2, max_size=2),
    st.lists(st.integers(-3, 3), min_size=2, max_size=2),
    unit_series(2),
)
def test_homomorphism(seed, n1, n2, t):
    spec = random_enhanced_spec(seed, d=2, r=3, m=2)
    assert check_homomorphism(spec, n1, n2, t)


@given(st.integers(0, 10_000), unit_series(2))
def test_intertwining(seed, g):
    spec = random_enhanced_spec(seed, d=2, r=3, m=2)
    ok, bad = check_intertwining(spec, g)
    assert ok and bad is None


def test_intertwining_detects_a_bad_connection():
    f = Flavor("absolute_smooth", 1, 1, a=1)
    spec = CrystalSpec(f, 2, (SM.elementary(2, 0, 1, 1),), SM.zeros(2, 1))
    assert check_intertwining(spec, TS.const(Fraction(2), 1)) == (False, 1)
