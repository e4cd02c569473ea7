import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nemstrip.errors import ContractViolation, InsufficientData
from nemstrip.regimes import Regime, classify_regime, ode_envelope, polynomial_bound, theorem_norm

T = np.linspace(0.0, 10.0, 201)


def series(f):
    return list(zip(T, f(T)))


def test_classify_examples():
    r = classify_regime(series(lambda t: np.exp(0.5 * t)))
    assert r.regime is Regime.EXPONENTIAL_GROWTH
    assert r.rate == pytest.approx(0.5, abs=1e-3)
    r = classify_regime(series(lambda t: (1 + t) ** 3), alpha=0.75)
    assert r.regime is Regime.POLYNOMIAL_GROWTH
    assert r.exponent_bound == pytest.approx(3.0)
    assert classify_regime(series(lambda t: np.exp(-t))).regime is Regime.EXPONENTIAL_DECAY


def test_classify_polynomial_above_bound_is_indeterminate():
    r = classify_regime(series(lambda t: (1 + t) ** 5), alpha=0.75)
    assert r.regime is Regime.INDETERMINATE


def test_classify_flat_and_short():
    assert classify_regime(series(lambda t: 2.0 + 0 * t)).regime is Regime.INDETERMINATE
    with pytest.raises(InsufficientData):
        classify_regime([(0.1 * i, 1.0) for i in range(10)])
    with pytest.raises(InsufficientData):
        classify_regime([(0.01 * i, 1.0) for i in range(50)])
    with pytest.raises(ContractViolation):
        classify_regime([(0.5 * i, -1.0) for i in range(50)])


@settings(max_examples=50)
@given(st.floats(-2.0, 2.0).filter(lambda r: abs(r) > 1e-3), st.floats(1e-6, 1e3))
def test_exponential_rate_recovered(rate, f0):
    r = classify_regime(series(lambda t: f0 * np.exp(rate * t)))
    assert r.rate == pytest.approx(rate, abs=1e-3)
    env = ode_envelope(series(lambda t: f0 * np.exp(rate * t)))
    assert env.params["lambda1"] == pytest.approx(rate, abs=1e-3)


def test_envelopes():
    env = ode_envelope(series(lambda t: np.exp(0.5 * t)), mode="exponential")
    assert env.params["lambda1"] == pytest.approx(0.5, abs=1e-3) and env.holds
    env = ode_envelope(series(lambda t: (1 + t) ** 3), mode="polynomial", alpha=0.75)
    assert env.params["exponent"] == pytest.approx(3.0, abs=0.05)
    assert env.holds
    f = env.curve(T)
    assert np.all(f >= (1 + T) ** 3 * (1 - 1e-12))
    env = ode_envelope(series(lambda t: 3 * np.exp(-2 * t)), mode="decay")
    assert env.params["lambda2"] == pytest.approx(2.0, rel=1e-9)
    assert env.params["C"] == pytest.approx(3.0, rel=1e-9)
    with pytest.raises(ContractViolation):
        ode_envelope(series(lambda t: 1 + t), mode="bogus")


def test_ode_envelope_constant():
    """With p = 2 alpha the ODE form F^{(2-p)/p} grows linearly for F = (1 + C t)^{p/(2-p)}."""
    alpha = 0.75
    p = 2 * alpha
    C = 1.7
    env = ode_envelope(series(lambda t: (1 + C * (2 - p) / p * t) ** (p / (2 - p))), mode="polynomial", alpha=alpha)
    assert env.params["ode_constant"] == pytest.approx(C, rel=1e-9)


def test_polynomial_bound():
    assert polynomial_bound(0.75) == pytest.approx(3.0)
    with pytest.raises(ContractViolation):
        polynomial_bound(1.0)


def test_theorem_norm():
    assert theorem_norm(0.5, 2.0, 0.0) == pytest.approx(1.0 + 2.0)
    assert math.isclose(float(theorem_norm(0.0, 0.0, 0.0)), 0.0)
