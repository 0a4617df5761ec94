import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apow.analytics import (
    CachingModel, caching_storage_bytes, digests_per_word, monte_carlo_escape, parameter_table,
    residual_escape_probability,
)


def test_caching_figures():
    m = CachingModel(200e12, 600, 256)
    assert caching_storage_bytes(m) == pytest.approx(3.84e18, rel=1e-12)
    assert round(math.log2(caching_storage_bytes(m))) == 62
    m16 = CachingModel(200e12, 600, 16, 128)
    assert caching_storage_bytes(m16) == pytest.approx(2.4e17, rel=1e-12)
    assert digests_per_word(m16) == 8
    assert caching_storage_bytes(CachingModel(0, 600)) == 0
    with pytest.raises(ValueError):
        CachingModel(1, 1, 0)


@given(k=st.floats(0.1, 100), h=st.floats(1, 1e15), t=st.floats(1, 1e4), b=st.floats(1, 256))
def test_caching_linear(k, h, t, b):
    base = caching_storage_bytes(CachingModel(h, t, b))
    for m in (CachingModel(h * k, t, b), CachingModel(h, t * k, b), CachingModel(h, t, b * k)):
        assert caching_storage_bytes(m) == pytest.approx(k * base, rel=1e-9)


def test_parameter_table_rows():
    rows = parameter_table()
    assert [r["digests_per_word"] for r in rows] == [0, 8, 128]
    assert rows[0]["storage_bytes"] == pytest.approx(3.84e18)


def test_escape_limits():
    assert residual_escape_probability(1, 0, 30) == pytest.approx(math.exp(-30))
    assert residual_escape_probability(0.2, 0, 5) == pytest.approx(math.exp(-1))
    assert residual_escape_probability(1e9, 1 / 600, 30) < 1e-8
    assert residual_escape_probability(0, 0, 1) == 1.0
    with pytest.raises(ValueError):
        residual_escape_probability(-1, 0, 1)
    with pytest.raises(ValueError):
        residual_escape_probability(1, 0, 0)


rate = st.floats(0.001, 50)


@given(ls=rate, lb=rate, t=st.floats(0.01, 100), k=st.floats(1.01, 10))
def test_escape_bounds_and_monotonicity(ls, lb, t, k):
    p = residual_escape_probability(ls, lb, t)
    assert 0 <= p <= 1
    assert residual_escape_probability(ls * k, lb, t) <= p + 1e-12
    assert residual_escape_probability(ls, lb, t * k) <= p + 1e-12


def test_monte_carlo_is_seeded():
    a = monte_carlo_escape(1, 1 / 600, 30, 10_000, seed=3)
    assert a == monte_carlo_escape(1, 1 / 600, 30, 10_000, seed=3)
    p = residual_escape_probability(0.1, 0.05, 10)
    mc, se = monte_carlo_escape(0.1, 0.05, 10, 100_000, seed=1)
    assert abs(mc - p) < 4 * se
