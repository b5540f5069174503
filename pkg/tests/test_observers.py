import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from adapt_sync.analysis import place_observer_gain
from adapt_sync.filters import lti_filter_output
from adapt_sync.observers import (AeObserver, HotObserver, SdObserver, Tuner, adaptation_rhs, ae_observer_derivative,
                                  augmented_error, dead_zone_alpha, hot_nu, hot_observer_derivative,
                                  sd_observer_derivative)
from adapt_sync.plant import PolyMap, RegressorPlant, lorenz_gain_and_G, lorenz_message_plant, \
    lorenz_printed_filter_matrix, message_model, oscillator_chain_plant
from adapt_sync.simulation import build_ae_system, build_hot_system, build_sd_system, run_sd_compiled

from conftest import BETA, R, SIGMA


# --- algebraic pieces -------------------------------------------------------

@pytest.mark.parametrize("ratio, expected", [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.5, 0.5), (2.0, 1.0), (3.0, 1.0)])
def test_dead_zone_values(ratio, expected):
    assert dead_zone_alpha([0.6 * ratio, 0.8 * ratio], 1.0) == pytest.approx(expected, abs=1e-15)


def test_dead_zone_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        dead_zone_alpha([1.0], 0.0)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 5))
def test_dead_zone_monotone(a, b, star):
    lo, hi = sorted((a, b))
    assert 0.0 <= dead_zone_alpha([lo], star) <= dead_zone_alpha([hi], star) <= 1.0


def test_adaptation_rhs_examples():
    assert adaptation_rhs(0.45, [2.0], 0.0, [0.3]).tolist() == [0.0]
    assert adaptation_rhs(0.45, [2.0], 0.1, [0.0]) == pytest.approx([0.09], abs=1e-15)
    theta_hat = np.array([0.3, -0.4])   # norm 0.5 = 3 theta*
    assert np.array_equal(adaptation_rhs(1.0, [0.0, 0.0], 0.7, theta_hat, 0.5 / 3), -theta_hat)
    with pytest.raises(ValueError):
        adaptation_rhs(0.0, [1.0], 0.1, [0.0])


def test_augmented_error_examples():
    assert augmented_error(0.37, 0.0, [1.0, 2.0], [0.0, 0.0]) == 0.37
    assert augmented_error(0.37, 0.5, [1.0, 2.0], [0.5, 0.0]) == pytest.approx(0.37)


# --- augmented error, constant A ----------------------------------------------

def scalar_plant(theta=2.0):
    # dx/dt = -x + theta, a constant regressor keeps the scalar plant bounded and PE
    return RegressorPlant([[-1.0]], [1.0], [1.0], PolyMap([0.0]), PolyMap([1.0]), np.array([theta]))


def test_ae_rejects_non_hurwitz_filter():
    with pytest.raises(ValueError, match="eigenvalue"):
        AeObserver(scalar_plant(), k=[-2.0], gamma=1.0)


def test_ae_fixed_point():
    plant = oscillator_chain_plant(2)
    k = place_observer_gain(plant.A, plant.c, [-1.0, -2.0])
    obs = AeObserver(plant, k, gamma=1.0, x_hat0=[2.0, 0.0], theta_hat0=plant.theta)
    state = obs.initial_state()
    rate = ae_observer_derivative(obs, state, 2.0)
    assert rate[obs.layout["theta_hat"]] == pytest.approx([0.0], abs=0)
    assert rate[obs.layout["x_hat"]] == pytest.approx(plant.A @ [2.0, 0.0] + plant.b * 0.5 * 2.0)
    assert obs.signals(state, 2.0)["e_aug"] == 0.0


def test_ae_zero_regressor_leaves_only_leakage():
    plant = RegressorPlant([[-1.0]], [1.0], [1.0], PolyMap([0.0]), PolyMap([0.0]), np.array([1.0]))
    obs = AeObserver(plant, [0.0], gamma=3.0, theta_star=1.0, theta_hat0=[0.5])
    rate = ae_observer_derivative(obs, obs.initial_state(), 0.4)
    assert rate[obs.layout["theta_hat"]].tolist() == [0.0]
    obs = AeObserver(plant, [0.0], gamma=3.0, theta_star=1.0, theta_hat0=[1.5])
    rate = ae_observer_derivative(obs, obs.initial_state(), 0.4)
    assert rate[obs.layout["theta_hat"]] == pytest.approx([-0.5 * 1.5])


def test_ae_scalar_converges_against_independent_solver():
    plant, gamma = scalar_plant(2.0), 1.0
    obs = AeObserver(plant, [0.0], gamma=gamma)
    joint = build_ae_system(plant, obs, [0.0], np.zeros(5001))
    ts = joint.run(50.0, 1e-2)

    def rhs(t, s):
        x, x_hat, th, om, aug = s
        e = x - x_hat
        e_aug = e + aug - om * th
        return [-x + 2.0, -x_hat + th, gamma * om * e_aug, -om + 1.0, -aug + th]

    ref = solve_ivp(rhs, (0, 50), np.zeros(5), method="DOP853", rtol=1e-11, atol=1e-13)
    assert abs(ts["theta_hat1"][-1] - 2.0) < 1e-3
    assert ts["theta_hat1"][-1] == pytest.approx(ref.y[2, -1], abs=1e-7)


def test_ae_augmentation_vanishes_for_frozen_estimate():
    plant = oscillator_chain_plant(2)
    k = place_observer_gain(plant.A, plant.c, [-1.0, -2.0])
    obs = AeObserver(plant, k, gamma=1.0)
    th = np.array([0.8])
    # drive both filters with y(t) = sin t and theta_hat frozen
    state = np.zeros(obs.layout.size)
    state[obs.layout["theta_hat"]] = th
    h = 1e-3
    for i in range(20000):
        t = i * h
        def f(s, tt):
            d = ae_observer_derivative(obs, s, np.sin(tt))
            d[obs.layout["theta_hat"]] = 0.0
            d[obs.layout["x_hat"]] = 0.0
            return d
        k1 = f(state, t)
        k2 = f(state + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(state + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(state + h * k3, t + h)
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    sig = obs.signals(state, 0.0)
    assert sig["aug"] - float(sig["omega"] @ th) == pytest.approx(0.0, abs=1e-6)


# --- high-order tuner ---------------------------------------------------------

def chain_hot(r, **kw):
    plant = oscillator_chain_plant(r)
    k = place_observer_gain(plant.A, plant.c, [-1.0] * r)
    return plant, HotObserver(plant, k, **kw)


def test_tuner_realizes_normalized_alpha():
    tuner = Tuner.design(5, 0.7, 2.0, 1.0)
    assert tuner.order == 3
    for s0 in (0.2, 1 + 1j, -0.3 + 2j):
        assert tuner.transfer(s0) == pytest.approx(0.7**3 / (s0 + 0.7) ** 3, rel=1e-12)
    assert Tuner.design(2, 1.0, 1.0, 1.0).order == 0


def test_hot_low_relative_degree_uses_plain_gradient():
    plant, obs = chain_hot(2)
    assert not obs.uses_tuner_filters and obs.tuner.order == 0
    rng = np.random.default_rng(3)
    state = rng.normal(size=obs.layout.size)
    y = 0.7
    d = hot_observer_derivative(obs, state, y)
    jets = obs.jets(state, y)
    assert d[obs.layout["psi"]] == pytest.approx(jets["varpi"][0] * jets["e"])
    assert np.array_equal(obs.theta_hat(state), obs.layout.split(state)["psi"])


def test_hot_unforced_states_stay_frozen():
    plant, obs = chain_hot(3)
    d = hot_observer_derivative(obs, obs.initial_state(), 0.0)
    for part in ("varpi_f", "psi", "eta", "nu_f"):
        assert np.all(d[obs.layout[part]] == 0.0)


def test_hot_relative_degree_one_boundary():
    plant = RegressorPlant([[-1.0]], [1.0], [1.0], PolyMap([0.0]), PolyMap([0.0], [1.0]), np.array([0.5]))
    obs = HotObserver(plant, [1.0], lam=2.0)
    assert obs.r == 1 and obs.inverse.poly.size == 1
    jets = obs.jets(obs.initial_state(), 0.3)
    assert jets["u"].shape == (1,) and jets["varpi"].shape == (1, 1)
    with pytest.raises(ValueError):
        HotObserver(RegressorPlant([[-1.0]], [1.0], [0.0], PolyMap([0.0]), PolyMap([1.0])), [0.0])


@pytest.mark.parametrize("r", [2, 3, 4])
def test_hot_nu_steady_state(r):
    plant, obs = chain_hot(r)
    y, th = 0.8, np.array([0.3])
    phi = np.atleast_1d(plant.phi(y))
    H = obs.H
    parts = {"x_hat": np.r_[y, np.zeros(r - 1)], "psi": th,
             "varpi_f": np.outer(phi, -np.linalg.solve(H.F, H.b_f)).ravel()}
    if obs.uses_tuner_filters:
        parts["eta"] = np.outer(th, -np.linalg.solve(obs.tuner.Gamma, obs.tuner.h_t)).ravel()
    state = obs.layout.pack(**parts)
    varpi = obs.jets(state, y)["varpi"][0]
    u = float(varpi @ th)
    inv = obs.inverse
    if inv.order:
        state[obs.layout["nu_f"]] = -np.linalg.solve(inv.F, inv.g) * u
    d = hot_observer_derivative(obs, state, y)
    assert np.allclose(d[obs.layout["varpi_f"]], 0, atol=1e-14)
    assert np.allclose(d[obs.layout["psi"]], 0, atol=1e-14)
    nu = hot_nu(obs, state, y)
    w0 = obs.lam * H.dc_gain()
    assert nu * w0 == pytest.approx(u, abs=1e-6)


def test_hot_strict_gate():
    _, probe = chain_hot(3)
    bound = probe.mu_min
    assert bound > 0
    with pytest.raises(ValueError, match="bound"):
        chain_hot(3, mu=0.9 * bound)
    _, loose = chain_hot(3, mu=0.9 * bound, strict=False)
    assert loose.mu == pytest.approx(0.9 * bound)
    assert probe.mu == pytest.approx(2 * bound)


def test_hot_r3_error_matches_oracle():
    plant, obs = chain_hot(3, x_hat0=[1.0, 0.0, 0.0])
    joint = build_hot_system(plant, obs, [2.0, 0.0, 0.0], np.zeros(1001), oracle=True)
    ts = joint.run(10.0, 1e-2)
    assert np.max(np.abs(ts["e"] - ts["e_oracle"])) <= 1e-6
    assert np.max(np.abs(ts["e"])) > 1e-2   # not trivially zero


def test_hot_tuner_initial_rest():
    _, obs = chain_hot(4, theta_hat0=[0.25])
    state = obs.initial_state()
    assert obs.theta_hat(state) == pytest.approx([0.25])
    d = hot_observer_derivative(obs, state, 0.0)
    assert np.allclose(d[obs.layout["eta"]], 0.0, atol=1e-14)


# --- state-dependent ----------------------------------------------------------

def lorenz_model(vartheta=0.1):
    return message_model(lorenz_message_plant(SIGMA, BETA, R, vartheta))


def lorenz_observer(model, **kw):
    k, _ = lorenz_gain_and_G(SIGMA, BETA)
    return SdObserver(model, k, 0.45, **kw)


def test_sd_fixed_point():
    model = lorenz_model(0.1)
    x0 = np.array([1.0, -2.0, 3.0])
    obs = lorenz_observer(model, x_hat0=x0, theta_hat0=[0.1])
    y = float(model.c @ x0)
    d = sd_observer_derivative(obs, obs.initial_state(), y)
    from adapt_sync.plant import plant_derivative
    assert d[obs.layout["x_hat"]] == pytest.approx(plant_derivative(model, x0, 0.0), abs=1e-12)
    assert d[obs.layout["theta_hat"]].tolist() == [0.0]
    assert np.all(d[obs.layout["eta"]] == 0.0)
    assert obs.signals(obs.initial_state(), y)["e_aug"] == 0.0


def test_sd_state_shapes():
    obs = lorenz_observer(lorenz_model())
    sig = obs.signals(np.zeros((4, obs.layout.size)), np.zeros(4))
    assert sig["Omega"].shape == (4, 3, 1) and sig["omega"].shape == (4, 1)
    assert obs.G(2.0).shape == (3, 3)
    with pytest.raises(ValueError):
        lorenz_observer(lorenz_model(), filters="as-printed")
    with pytest.raises(TypeError):
        SdObserver(oscillator_chain_plant(2), np.zeros(2), 1.0)


def test_sd_as_printed_mode_differs_only_in_filters():
    model = lorenz_model()
    P = lorenz_printed_filter_matrix(SIGMA, BETA)
    gen = lorenz_observer(model)
    printed = lorenz_observer(model, filters="as-printed", printed_filter_matrix=P)
    state = np.random.default_rng(1).normal(size=gen.layout.size)
    a = sd_observer_derivative(gen, state, 1.3)
    b = sd_observer_derivative(printed, state, 1.3)
    for part in ("x_hat", "theta_hat"):
        assert np.array_equal(a[gen.layout[part]], b[gen.layout[part]])
    Om = state[gen.layout["Omega"]].reshape(3, 1)
    assert b[gen.layout["Omega"]] == pytest.approx((P(1.3) @ Om).ravel())


@pytest.mark.parametrize("filters", ["general", "as-printed"])
def test_sd_compiled_matches_numpy(compiled_kernel, filters):
    model = lorenz_model(0.1)
    kw = {"printed_filter_matrix": lorenz_printed_filter_matrix(SIGMA, BETA)} if filters == "as-printed" else {}
    obs = lorenz_observer(model, filters=filters, theta_star=0.11, **kw)
    noise = 0.3 * np.random.default_rng(0).uniform(-1, 1, 2001)
    joint = build_sd_system(model, obs, np.ones(3), noise, propagator=True, oracle=True)
    slow = joint.run(2.0, 1e-3)
    fast = run_sd_compiled(joint, 2.0, 1e-3)
    for name in slow.names:
        if name == "xi_e":
            # the propagator sums its terms in a different order
            assert np.max(np.abs(slow[name] - fast[name])) <= 1e-12
        else:
            assert np.array_equal(slow[name], fast[name]), name


def test_sd_lorenz_constant_parameter_recovery(compiled_kernel):
    model = lorenz_model(0.1)
    obs = lorenz_observer(model)
    ts = run_sd_compiled(build_sd_system(model, obs, np.ones(3), np.zeros(30001)), 30.0, 1e-3)
    assert abs(ts["theta_hat1"][-1] - 0.1) < 1e-2
