from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbstats.model import (
    DecayParams,
    UnitarityParams,
    eval_decay,
    eval_difference,
    eval_unitarity_pair,
    povm_offset,
)


def exact_power(base: str, m: int) -> Fraction:
    return Fraction(base) ** m


def test_eval_decay_examples():
    assert eval_decay(DecayParams(1, 0, 1), 100) == 1.0
    assert eval_decay(DecayParams(0.5, 0.5, 0.99), 0) == 1.0
    expected = Fraction("0.4") * exact_power("0.99", 4) + Fraction("0.5")
    assert eval_decay(DecayParams(0.4, 0.5, 0.99), 4) == pytest.approx(float(expected), abs=1e-15)


def test_eval_difference_examples():
    assert eval_difference(DecayParams(1, 0, 1), 50) == 1.0
    assert eval_difference(DecayParams(0.8, 0, 0.9), 0) == 0.8
    expected = Fraction("0.8") * exact_power("0.9", 10)
    assert eval_difference(DecayParams(0.8, 0, 0.9), 10) == pytest.approx(float(expected), abs=1e-15)


def test_eval_unitarity_pair_examples():
    assert eval_unitarity_pair(UnitarityParams(1, 1, 1, 1), 7) == (1.0, 1.0)
    assert eval_unitarity_pair(UnitarityParams(0.3, 0.9, 0.6, 0.8), 0) == (0.3, 0.6)
    a, b = eval_unitarity_pair(UnitarityParams(0.99, 0.999, 0.9, 0.98), 20)
    assert a == pytest.approx(float(Fraction("0.99") * exact_power("0.999", 20)), abs=1e-15)
    assert b == pytest.approx(float(Fraction("0.9") * exact_power("0.98", 20)), abs=1e-15)


def test_povm_offset():
    assert povm_offset(2) == 0.5
    assert povm_offset(1) == 1.0
    assert povm_offset(4) == 0.25
    with pytest.raises(ValueError):
        povm_offset(0)


@pytest.mark.parametrize(
    "A, B, p",
    [(0.5, 0.5, 0.0), (0.5, 0.5, 1.01), (-0.1, 0.5, 0.9), (0.6, 0.5, 0.9), (0.2, -0.1, 0.9)],
)
def test_decay_params_rejects_invalid(A, B, p):
    with pytest.raises(ValueError):
        DecayParams(A, B, p)


def test_unitarity_params_rejects_invalid():
    with pytest.raises(ValueError):
        UnitarityParams(1.0, 1.1, 1.0, 0.9)
    with pytest.raises(ValueError):
        UnitarityParams(1.2, 0.9, 1.0, 0.9)


def test_negative_length_rejected():
    with pytest.raises(ValueError):
        eval_decay(DecayParams(0.5, 0.5, 0.9), -1)


def test_from_visibility():
    P = DecayParams.from_visibility(0.8, 0.5, 0.995)
    assert P.A == pytest.approx(0.4)
    assert eval_decay(P, 0) == pytest.approx(0.9)
    assert P.r == pytest.approx(0.005)


params = st.builds(
    lambda a, b, p: DecayParams(a * (1 - b), b, p),
    st.floats(0.01, 1.0),
    st.floats(0.0, 0.99),
    st.floats(0.5, 0.99999),
)


@given(params, st.integers(0, 500))
def test_strictly_decreasing(P, m):
    step = P.A * P.p**m * (1 - P.p)
    if step > 1e-14:
        assert eval_decay(P, m + 1) < eval_decay(P, m)
    else:
        assert eval_decay(P, m + 1) <= eval_decay(P, m)


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.integers(0, 1000))
def test_constant_when_p_is_one(A, B, m):
    P = DecayParams(A, B, 1.0)
    assert eval_decay(P, m) == pytest.approx(A + B)


@given(params)
def test_limits(P):
    assert eval_decay(P, 10**7) == pytest.approx(P.B, abs=1e-9)
    assert eval_difference(P, 10**7) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(0.0, 0.5), st.floats(0.5, 1.0), st.integers(0, 300))
def test_flip_difference_cancels_offset(A, p, m):
    from rbstats.sampler import AnalyticSource

    B = 0.5
    P = DecayParams(A, B, p)
    src = AnalyticSource(P)
    diff = src.probabilities(m, 0, p) - src.probabilities(m, 1, p)
    assert diff == pytest.approx(eval_difference(P.difference(), m), abs=1e-15)


def test_array_evaluation():
    P = DecayParams(0.4, 0.5, 0.9)
    ms = np.arange(5)
    np.testing.assert_allclose(eval_decay(P, ms), 0.4 * 0.9**ms + 0.5)
