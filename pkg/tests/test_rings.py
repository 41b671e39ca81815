from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from prismcrystal.rings import (
    INF,
    NonUnit,
    SeriesMatrix,
    TruncatedSeries,
    TruncationMismatch,
    ValuationConfig,
    euler_derivation,
    euler_operator,
    ts_inv,
    ts_mul,
    vp,
)

from conftest import matrices, nonzero_fracs, series, small_fracs, unit_series

TS = TruncatedSeries


@pytest.mark.parametrize(
    "x, y, want",
    [
        (TS(3, [1, 1, 0]), TS(3, [1, -1, 0]), TS(3, [1, 0, -1])),
        (TS.eps(4, 3), TS.eps(4), TS.zero(4)),
        (TS(2, [1, 2]), TS(2, [3, 1]), TS(2, [3, 7])),
    ],
)
def test_mul_examples(x, y, want):
    assert ts_mul(x, y) == want


@pytest.mark.parametrize(
    "x, want",
    [
        (TS(3, [1, 1, 0]), TS(3, [1, -1, 1])),
        (TS(2, [2, 0]), TS(2, [Fraction(1, 2), 0])),
    ],
)
def test_inverse_examples(x, want):
    assert ts_inv(x) == want


def test_inverse_of_eps_is_refused():
    with pytest.raises(NonUnit):
        ts_inv(TS.eps(3))


@pytest.mark.parametrize(
    "x, want",
    [(TS.eps(3, 2), TS(3, [0, 0, 2])), (TS.one(3), TS.zero(3)), (TS(2, [3, 5]), TS(2, [0, 5]))],
)
def test_euler_examples(x, want):
    assert euler_derivation(x) == want


@pytest.mark.parametrize("x, p, want", [(12, 2, 2), (Fraction(1, 3), 3, -1), (0, 5, INF)])
def test_vp_examples(x, p, want):
    assert vp(x, ValuationConfig(p)) == want


def test_mixed_truncation_is_an_error():
    with pytest.raises(TruncationMismatch):
        TS.one(2) * TS.one(3)


def test_prime_is_validated():
    with pytest.raises(ValueError):
        ValuationConfig(6)


@given(series(3), series(3), series(3))
def test_ring_axioms(x, y, z):
    assert (x * y) * z == x * (y * z)
    assert x * (y + z) == x * y + x * z
    assert x * y == y * x


@given(unit_series(4))
def test_inverse_two_sided(x):
    assert x * x.inverse() == TS.one(4)
    assert x.inverse() * x == TS.one(4)


@given(series(4), series(4))
def test_euler_leibniz(x, y):
    assert (x * y).euler() == x.euler() * y + x * y.euler()


@given(nonzero_fracs, nonzero_fracs, st.sampled_from([2, 3, 5]))
def test_vp_multiplicative_and_ultrametric(x, y, p):
    cfg = ValuationConfig(p)
    assert vp(x * y, cfg) == vp(x, cfg) + vp(y, cfg)
    assert vp(x + y, cfg) >= min(vp(x, cfg), vp(y, cfg))


@given(matrices(2, 3), matrices(2, 3))
def test_flatten_is_multiplicative(A, B):
    assert ((A @ B).flatten() == A.flatten().dot(B.flatten())).all()


@given(matrices(2, 3))
def test_flattened_euler_is_semilinear(A):
    # eps d/deps applied to the columns of A equals [E, A] on the flat space
    E = euler_operator(2, 3)
    assert (A.euler().flatten() == E.dot(A.flatten()) - A.flatten().dot(E)).all()


@given(matrices(2, 2))
def test_matrix_record_round_trip(A):
    assert SeriesMatrix.from_record(A.to_record()) == A


@given(small_fracs)
def test_scalar_matrix_commutes(c):
    A = SeriesMatrix.constant([[1, 2], [3, 4]], 2)
    S = SeriesMatrix.scalar(TS(2, [c, 1]), 2)
    assert S @ A == A @ S
