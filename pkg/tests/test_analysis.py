import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adapt_sync.analysis import (disturbance_propagator_derivative, hot_mu_bound, hurwitz_check,
                                 lorenz_certificate, lyapunov_solve, min_phase_check, pe_metric,
                                 place_observer_gain, residual_bound)
from adapt_sync.numerics import TimeSeries
from adapt_sync.plant import lorenz_gain_and_G, lorenz_message_plant, message_model

from conftest import BETA, R, SIGMA


def grid(T, n=20001):
    return np.linspace(0.0, T, n)


def test_pe_zero_signal():
    t = grid(10.0)
    report = pe_metric(np.zeros_like(t), 5.0, t=t)
    assert report.alpha_hat == 0.0 and not report.is_pe


def test_pe_sine_full_period():
    t = grid(2 * np.pi)
    assert pe_metric(np.sin(t), 2 * np.pi, t=t).alpha_hat == pytest.approx(np.pi, abs=1e-4)


def test_pe_constant():
    t = grid(3.0, 301)
    report = pe_metric(np.full(t.size, 2.0), 3.0, t=t)
    assert report.alpha_hat == pytest.approx(12.0, abs=1e-12)
    assert report.is_pe and report.windows == 1


def test_pe_vector_needs_rank():
    t = grid(20.0)
    f = np.column_stack([np.sin(t), 2 * np.sin(t)])   # rank one
    assert pe_metric(f, 5.0, t=t).alpha_hat == pytest.approx(0.0, abs=1e-9)
    f = np.column_stack([np.sin(t), np.cos(t)])
    assert pe_metric(f, 2 * np.pi, t=t).alpha_hat == pytest.approx(np.pi, abs=1e-3)


def test_pe_from_timeseries_and_errors():
    t = grid(4.0, 401)
    ts = TimeSeries(t, {"a": np.ones_like(t), "b": np.zeros_like(t)}, 0.01)
    assert pe_metric(ts, 2.0, channels=["a"]).alpha_hat == pytest.approx(2.0)
    assert pe_metric(ts, 2.0).alpha_hat == pytest.approx(0.0)
    with pytest.raises(ValueError, match="shorter"):
        pe_metric(ts, 5.0)
    with pytest.raises(ValueError):
        pe_metric(ts, 0.0)


def test_hurwitz_examples():
    ok, a = hurwitz_check(-np.eye(3))
    assert ok and a == pytest.approx(-1.0)
    ok, a = hurwitz_check([[0, 1], [-1, 0]])
    assert not ok and a == pytest.approx(0.0, abs=1e-15)
    _, G = lorenz_gain_and_G(SIGMA, BETA)
    assert hurwitz_check(G(0.0)).is_hurwitz
    assert hurwitz_check([[-10, 10, 0], [-10, -1, 0], [0, 0, -8 / 3]]).is_hurwitz


def test_min_phase_examples():
    assert min_phase_check(([1.0], [1.0, 1.0]))
    assert not min_phase_check(([1.0, -1.0], np.poly([-1, -1])))
    assert min_phase_check(([1.0, 2.0], np.poly([-1, -1])))
    # state-space input, same transfer as the last one
    F = np.array([[0.0, 1.0], [-1.0, -2.0]])
    assert min_phase_check((F, [0.0, 1.0], [2.0, 1.0]))
    assert not min_phase_check((F, [0.0, 1.0], [-1.0, 1.0]))


def test_min_phase_reduces_non_minimal_realization():
    F = np.diag([-1.0, 2.0])
    with pytest.warns(UserWarning, match="not minimal"):
        # unobservable unstable mode cancels
        assert min_phase_check((F, [1.0, 1.0], [1.0, 0.0]))


def test_lyapunov_examples():
    assert lyapunov_solve([[-1.0]])[0, 0] == pytest.approx(1.0)
    assert np.allclose(lyapunov_solve(-2 * np.eye(2)), 0.5 * np.eye(2), atol=1e-15)
    with pytest.raises(ValueError, match="Hurwitz"):
        lyapunov_solve(np.eye(2))


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_lyapunov_residual(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    F = M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(0.1, 2.0)) * np.eye(n)
    P = lyapunov_solve(F)
    assert np.max(np.abs(F.T @ P + P @ F + 2 * np.eye(n))) <= 1e-10 * max(1.0, np.max(np.abs(P)))
    assert np.array_equal(P, P.T)
    assert np.min(np.linalg.eigvalsh(P)) > 0


def test_mu_bound_examples():
    assert hot_mu_bound([[-1.0]], [1.0], [1.0], 1.0) == pytest.approx(3.0)
    assert hot_mu_bound([[-1.0]], [1.0], [1.0], 2.0) == pytest.approx(1.5)
    assert hot_mu_bound(np.zeros((0, 0)), [], [], 1.0) == 0.0
    assert hot_mu_bound([[-1.0]], [0.0], [0.0], 1.0) == 0.0


def test_residual_bound_examples():
    assert residual_bound([1.0], 1.0, 0.45, 0.0).bound == pytest.approx(9.0)
    assert residual_bound([2.0], 1.0, 0.45, 3.0).bound == pytest.approx(16.0)
    assert residual_bound([1.0], 1.0, 1e-12, 1e3).bound == pytest.approx(9.0)
    b = residual_bound([0.0, 2.0], 0.1, 1.0, 3.0)
    assert b.bound == pytest.approx(13.0)
    assert b.contains([[3.0, 0.0], [3.0, 2.1]]).tolist() == [True, False]
    with pytest.raises(ValueError):
        residual_bound([1.0], 0.0, 1.0, 0.0)


@given(*[st.floats(0.01, 10)] * 4, st.floats(0.0, 5.0), st.integers(0, 3))
def test_residual_bound_monotone(theta, star, gamma, noise, bump, which):
    args = [theta, star, gamma, noise]
    base = residual_bound([args[0]], *args[1:]).bound
    args[which] += bump
    grown = residual_bound([args[0]], *args[1:]).bound
    assert grown >= base
    assert base >= theta**2 and base >= (theta + 2 * star) ** 2


def test_propagator_zero_without_noise():
    model = message_model(lorenz_message_plant(SIGMA, BETA, R, 0.1))
    k, G = lorenz_gain_and_G(SIGMA, BETA)
    x = np.array([1.0, -2.0, 0.5])
    y = float(model.c @ x)
    d = disturbance_propagator_derivative(np.zeros(3), G(y), model, x, y, y, [0.1], k, 0.0)
    assert np.all(d == 0.0)


def test_propagator_lorenz_regressor_difference():
    model = message_model(lorenz_message_plant(SIGMA, BETA, R, 0.1))
    k, G = lorenz_gain_and_G(SIGMA, BETA)
    x = np.array([1.0, -2.0, 0.5])
    y, xi = float(model.c @ x), 0.3
    assert model.phi(y) - model.phi(y + xi) == pytest.approx(-R * xi)   # phi = r y in message coordinates
    d = disturbance_propagator_derivative(np.zeros(3), G(y + xi), model, x, y, y + xi, [0.1], k, xi)
    A_diff = model.A_at(y) - model.A_at(y + xi)
    expected = (model.phi0(y) - model.phi0(y + xi) + model.b * (-R * xi * 0.1) - k * xi + A_diff @ x)
    assert d == pytest.approx(expected)


def test_lorenz_certificate_and_gain_placement():
    cert = lorenz_certificate(SIGMA, BETA)
    assert np.allclose(cert.P, 0.5 * np.eye(3)) and cert.c3 == 1.0
    A = np.array([[0.0, 1.0], [-2.0, -0.5]])
    k = place_observer_gain(A, [1.0, 0.0], [-3.0, -4.0])
    assert np.sort(np.linalg.eigvals(A - np.outer(k, [1.0, 0.0])).real) == pytest.approx([-4.0, -3.0])
    with pytest.raises(ValueError, match="observable"):
        place_observer_gain(np.eye(2), [1.0, 0.0], [-1.0, -2.0])
