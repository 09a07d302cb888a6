"""Digamma accuracy and the pinned float32 floor constants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaterm.special import EPS_FLOAT32, W_NU_BAR_CEIL, digamma

from _golden import DIGAMMA_TABLE, EULER_GAMMA
from _golden import W_NU_BAR_CEIL as GOLD_CEIL


def test_table_accuracy():
    # Reference values from a 50-digit evaluation, frozen in _golden.
    for x, want in DIGAMMA_TABLE:
        got = digamma(x)
        assert abs(got - want) <= 1e-10 * abs(want), (x, got, want)


def test_digamma_at_one_is_negative_euler_gamma():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, rel=1e-13)


def test_unit_recurrence_step():
    # psi(2) = psi(1) + 1
    assert digamma(2.0) == pytest.approx(digamma(1.0) + 1.0, abs=1e-13)


@pytest.mark.parametrize(
    "xs",
    [np.linspace(0.1, 100.0, 500), np.geomspace(1e-2, 1e4, 1000)],
    ids=["linear", "log"],
)
def test_log_sandwich_bounds(xs):
    """ln x - 1/x < psi(x) < ln x - 1/(2x), strict for every x > 0."""
    psi = digamma(xs)
    assert np.all(psi > np.log(xs) - 1.0 / xs)
    assert np.all(psi < np.log(xs) - 0.5 / xs)


@given(st.floats(min_value=1e-3, max_value=1e3, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_recurrence_property(x):
    lhs = digamma(x + 1.0)
    rhs = digamma(x) + 1.0 / x
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


def test_array_matches_scalar():
    xs = np.array([0.3, 1.0, 6.0, 250.0])
    out = digamma(xs)
    assert out.shape == xs.shape
    for i, x in enumerate(xs):
        assert out[i] == digamma(float(x))


@pytest.mark.parametrize("bad", [0.0, -1.0, -1e-9])
def test_rejects_nonpositive_scalar(bad):
    with pytest.raises(ValueError):
        digamma(bad)


def test_rejects_nonpositive_in_array():
    with pytest.raises(ValueError):
        digamma(np.array([1.0, 0.0, 2.0]))


def test_float32_floor_constants():
    assert EPS_FLOAT32 == 1.17549435e-38
    assert W_NU_BAR_CEIL == EPS_FLOAT32 - math.log(EPS_FLOAT32)
    assert W_NU_BAR_CEIL == pytest.approx(GOLD_CEIL, rel=1e-14)
