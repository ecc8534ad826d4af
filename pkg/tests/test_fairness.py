import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clmac.fairness import ThroughputLedger, jain_index, normalized, target_throughputs, water_fill

caps = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=8)


def test_water_fill_examples():
    np.testing.assert_allclose(water_fill([0.9, 0.5, 0.1]), [0.45, 0.45, 0.1], atol=0.005)
    np.testing.assert_allclose(water_fill([1.0]), [1.0], atol=0.005)
    np.testing.assert_allclose(water_fill([0.2, 0.2, 0.2]), [0.2, 0.2, 0.2], atol=0.005)
    np.testing.assert_allclose(water_fill([1.0, 0.375]), [0.625, 0.375], atol=0.005)


@settings(max_examples=100, deadline=None)
@given(caps)
def test_water_fill_respects_caps_and_capacity(x):
    out = water_fill(x)
    assert np.all(out <= np.asarray(x) + 1e-9)
    assert np.all(out >= 0)
    assert out.sum() <= 1 + 1e-9


@settings(max_examples=100, deadline=None)
@given(caps, st.randoms())
def test_water_fill_permutation_equivariant(x, rnd):
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    out = water_fill(x)
    out_p = water_fill([x[i] for i in perm])
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(caps, st.integers(0, 7), st.floats(0, 1))
def test_water_fill_monotone_in_own_cap(x, i, bump):
    # raising one cap may take capacity from the others, never from that UE
    i %= len(x)
    raised = list(x)
    raised[i] = max(raised[i], bump)
    assert water_fill(raised)[i] >= water_fill(x)[i] - 0.01 - 1e-9


def test_target_throughputs_per_channel():
    exp = {0: np.ones(2), 1: np.array([0.375, 0.0]), 2: np.array([0.0, 0.5])}
    chi = target_throughputs(exp, 2, order=[0, 1, 2])
    np.testing.assert_allclose(chi[0], [0.625, 0.5], atol=0.005)
    np.testing.assert_allclose(chi[1], [0.375, 0.0], atol=0.005)


def test_ledger_credit_examples():
    led = ThroughputLedger(4)
    led.advance(1)
    assert led.credit("a", 0, 0, 2, 0.5) == pytest.approx(1.5)
    led.advance(3)
    led.credit("a", 0, 2, 2, 0.5)
    assert led.throughput("a", 0) == pytest.approx(0.75)
    led2 = ThroughputLedger(10)
    led2.advance(4)
    assert led2.credit("b", 1, 0, 5, 0.5) == pytest.approx(4.5)
    with pytest.raises(ValueError):
        led2.credit("b", 1, 3, 5, 0.5)


def test_ledger_window_forgets_old_credit():
    led = ThroughputLedger(4)
    led.advance(0)
    led.credit("a", 0, 0, 1, 0.0)
    led.advance(3)
    assert led.throughput("a", 0) == pytest.approx(0.25)
    led.advance(4)
    assert led.throughput("a", 0) == 0.0


def test_normalized():
    assert normalized(0.5, 0.7) == pytest.approx(0.7142857)
    assert normalized(0.0, 0.5) == 0.0
    assert normalized(0.3, 0.3) == 1.0
    assert math.isinf(normalized(0.1, 0.0))


def test_jain_examples():
    assert jain_index([0.7, 0.7, 0.7])[0] == pytest.approx(1.0)
    assert jain_index([1, 0, 0, 0])[0] == pytest.approx(0.25)
    assert jain_index([0.714, 0.286])[0] == pytest.approx(1.0 / (2 * (0.714**2 + 0.286**2)), abs=1e-9)
    assert jain_index([0, 0]) == (1.0, True)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=10))
def test_jain_bounds(r):
    j, _ = jain_index(r)
    assert 0 <= j <= 1 + 1e-12
