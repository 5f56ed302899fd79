from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import expm

from spinbath import rk8
from spinbath.rk8 import IntegrationError, integrate, n_steps, rk8_step


def pendulum(t, y):
    return np.array([y[1], -np.sin(y[0])])


def measured_order(h=0.4, T=10.0):
    y0 = np.array([2.5, 0.0])
    ref = integrate(pendulum, y0, 0.0, T, 0.005)
    e1 = np.max(np.abs(integrate(pendulum, y0, 0.0, T, h) - ref))
    e2 = np.max(np.abs(integrate(pendulum, y0, 0.0, T, h / 2) - ref))
    return np.log2(e1 / e2), e1, e2


def test_tableau_consistency():
    c, A, b = rk8._tableau()
    assert np.max(np.abs(A.sum(axis=1) - c)) < 1e-14
    assert abs(b.sum() - 1) < 1e-15
    # quadrature conditions sum b_i c_i^k = 1/(k+1) up to eighth order
    for k in range(8):
        assert abs(b @ c**k - 1.0 / (k + 1)) < 1e-14
    assert np.all(np.triu(A) == 0)


def test_measured_order_at_least_7_5():
    order, e1, e2 = measured_order()
    assert e2 > 1e-13  # still above roundoff
    assert order >= 7.5


def test_zero_derivative_is_identity():
    y0 = np.array([1.0, -2.0, 3.0])
    y = integrate(lambda t, y: np.zeros_like(y), y0, 0.0, 5.0, 0.1)
    assert np.array_equal(y, y0)


def test_linear_flow_matches_expm():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    G = 0.5 * (M - M.conj().T)  # anti-hermitian generator
    y0 = rng.standard_normal(4) + 0j
    y = integrate(lambda t, y: G @ y, y0, 0.0, 2.0, 0.01)
    assert np.max(np.abs(y - expm(2.0 * G) @ y0)) < 1e-10


def test_time_dependent_scalar():
    # y' = cos(t) y  ->  y = exp(sin t)
    y = integrate(lambda t, y: np.cos(t) * y, np.array([1.0]), 0.0, 3.0, 0.05)
    assert abs(y[0] - np.exp(np.sin(3.0))) < 1e-12


def test_observer_call_count_and_times():
    seen = []
    integrate(lambda t, y: y, np.array([1.0]), 0.0, 1.05, 0.1, lambda t, y: seen.append(t))
    assert len(seen) == n_steps(0.0, 1.05, 0.1) == 11
    assert seen[-1] == 1.05
    assert seen[0] == pytest.approx(0.1)
    assert n_steps(0.0, 240.0, 0.1) == 2400


def test_final_time_reached_exactly():
    y = integrate(lambda t, y: np.ones_like(y), np.array([0.0]), 0.0, 1.05, 0.1)
    assert y[0] == pytest.approx(1.05, abs=1e-14)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_raises():
    with pytest.raises(IntegrationError) as err:
        integrate(lambda t, y: y**2, np.array([1.0]), 0.0, 5.0, 0.1)
    assert err.value.t > 0


def test_reproducible_bit_exact():
    y0 = np.array([2.5, 0.0])
    a = integrate(pendulum, y0, 0.0, 3.0, 0.1)
    b = integrate(pendulum, y0, 0.0, 3.0, 0.1)
    assert np.array_equal(a, b)


def test_single_step_matches_exact_fraction_weights():
    # one step of y' = y is the degree-8 Taylor polynomial plus high-order terms
    y = rk8_step(lambda t, y: y, np.array([1.0]), 0.0, 0.01)
    assert abs(y[0] - np.exp(0.01)) < 1e-15
    assert Fraction(1, 4) == Fraction(rk8.B[-1]).limit_denominator(10)
