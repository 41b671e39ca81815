from fractions import Fraction

from hypothesis import HealthCheck, settings, strategies as st

from prismcrystal.rings import SeriesMatrix, TruncatedSeries

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

small_fracs = st.builds(
    Fraction,
    st.integers(min_value=-6, max_value=6),
    st.integers(min_value=1, max_value=4),
)
nonzero_fracs = small_fracs.filter(lambda x: x != 0)


def series(m: int):
    return st.lists(small_fracs, min_size=m, max_size=m).map(lambda cs: TruncatedSeries(m, cs))


def unit_series(m: int):
    return st.tuples(nonzero_fracs, st.lists(small_fracs, min_size=m - 1, max_size=m - 1)).map(
        lambda t: TruncatedSeries(m, [t[0]] + t[1])
    )


def matrices(r: int, m: int):
    return st.lists(
        st.lists(st.lists(small_fracs, min_size=r, max_size=r), min_size=r, max_size=r),
        min_size=m,
        max_size=m,
    ).map(lambda g: SeriesMatrix.from_record(g, m))
