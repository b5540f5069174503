"""Joint master/observer systems and their recorded channels.

A scenario is integrated as one ODE whose state stacks the master state
``x``, the observer state and optional diagnostic states:

``Xi``
    disturbance propagator driven by the channel noise (zero initial state);
``zeta``
    free response of the observation-error dynamics started from the initial
    estimation error (the term the equivalent error models neglect).

The HOT scheme carries ``w_nu`` and ``e_oracle`` instead of ``zeta``; they
rebuild ``e`` from ``varpi^T theta - W(p)[nu]`` passed through ``1/(p+lambda)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import disturbance_propagator_derivative
from .numerics import IntegrationFault, OdeSystem, StateLayout, TimeSeries, DEFAULT_GUARD, check_guard, \
    record_series, simulate, step_count, time_grid
from .observers import (AeObserver, HotObserver, SdObserver, ae_observer_derivative, hot_nu,
                        hot_observer_rates, sd_observer_derivative)
from .plant import MessageParameter, PolyMap, plant_derivative


def theta_history(model, t) -> np.ndarray:
    """Parameter ``theta(t)`` of ``model`` at each time in ``t``, shape ``(len(t), m)``."""
    t = np.asarray(t, dtype=float)
    theta = model.theta
    if isinstance(theta, MessageParameter):
        return np.broadcast_to(theta(t), (t.size, model.m)).copy()
    if callable(theta):
        return np.array([np.atleast_1d(theta(s)) for s in t], dtype=float).reshape(t.size, model.m)
    return np.broadcast_to(np.asarray(theta, dtype=float), (t.size, model.m)).copy()


@dataclass
class JointSystem:
    """Assembled joint ODE with its layout, initial state and channel extractor."""

    system: OdeSystem
    layout: StateLayout
    x0: np.ndarray
    record: Callable
    model: object
    observer: object
    noise: np.ndarray

    def run(self, t_end: float, h: float, t0: float = 0.0, guard: float = DEFAULT_GUARD) -> TimeSeries:
        return simulate(self.system, self.x0, t0, t_end, h, self.record, guard)


def _joint_layout(n, observer, propagator, oracle, hot=False):
    parts = [("x", n), ("observer", observer.layout.size)]
    if propagator:
        parts.append(("Xi", n))
    if oracle:
        if hot:
            parts += [("w_nu", observer.H.order), ("e_oracle", 1), ("zeta", n)]
        else:
            parts.append(("zeta", n))
    return StateLayout(parts)


def _initial_state(layout, model, observer, x0, oracle):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ValueError(f"x0 must have length {model.n}")
    parts = {"x": x0, "observer": observer.initial_state()}
    if oracle:
        parts["zeta"] = x0 - observer.x_hat0
    return layout.pack(**parts)


def _held(noise):
    def held(k):
        return float(noise[k])
    return held


def _check_noise(noise):
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 1:
        raise ValueError("noise must be a 1-D array of per-step samples")
    return noise


def _common_channels(t, X, layout, model, observer, noise, gamma=None):
    p = layout.split(X)
    x = p["x"]
    y = x @ model.c
    xi = noise[: t.size]
    y_r = y + xi
    sig = observer.signals(p["observer"], y_r)
    theta = theta_history(model, t)
    theta_tilde = theta - sig["theta_hat"]
    eps = x - observer.layout.split(p["observer"])["x_hat"]
    ch = {"y": y, "y_r": y_r, "xi": xi, "e": sig["e"]}
    if "e_aug" in sig:
        ch["e_hat"] = sig["e_aug"]
    for j in range(model.m):
        ch[f"theta{j + 1}"] = theta[:, j]
        ch[f"theta_hat{j + 1}"] = sig["theta_hat"][:, j]
        if "omega" in sig:
            ch[f"omega{j + 1}"] = sig["omega"][:, j]
    for i in range(model.n):
        ch[f"eps{i + 1}"] = eps[:, i]
    if gamma is not None:
        ch["V"] = np.sum(theta_tilde**2, axis=1) / (2.0 * gamma)
    if "Xi" in layout:
        ch["xi_e"] = p["Xi"] @ model.c
    return ch, p, sig, theta_tilde


# --- augmented error ---------------------------------------------------------

def build_ae_system(model, observer: AeObserver, x0, noise, propagator=False, oracle=False) -> JointSystem:
    """Joint system of a constant-``A`` master and the augmented-error observer."""
    noise = _check_noise(noise)
    layout = _joint_layout(model.n, observer, propagator, oracle)
    F = observer.F
    k = observer.k
    so, sx = layout["observer"], layout["x"]

    def derivative(t, X, xi):
        x = X[sx]
        y = float(model.c @ x)
        y_r = y + xi
        out = np.empty_like(X)
        out[sx] = plant_derivative(model, x, t)
        out[so] = ae_observer_derivative(observer, X[so], y_r)
        if propagator:
            out[layout["Xi"]] = disturbance_propagator_derivative(
                X[layout["Xi"]], F, model, x, y, y_r, model.theta_at(t), k, xi)
        if oracle:
            out[layout["zeta"]] = F @ X[layout["zeta"]]
        return out

    def record(t, X, held):
        ch, p, sig, _ = _common_channels(t, X, layout, model, observer, noise, observer.gamma)
        if oracle:
            ch.update({f"zeta{i + 1}": p["zeta"][:, i] for i in range(model.n)})
            ch["zeta_c"] = p["zeta"] @ model.c
        return ch

    system = OdeSystem(layout.size, derivative, _held(noise))
    return JointSystem(system, layout, _initial_state(layout, model, observer, x0, oracle), record,
                       model, observer, noise)


# --- high-order tuner -----------------------------------------------------------

def build_hot_system(model, observer: HotObserver, x0, noise, propagator=False, oracle=False) -> JointSystem:
    """Joint system of a constant-``A`` master and the high-order-tuner observer.

    With ``oracle`` the state also carries the ``H`` filter of ``nu`` and the
    scalar ``e_oracle`` obeying ``(p + lambda) e_oracle = varpi^T theta - W(p)[nu]``
    plus ``c^T zeta`` for the initial estimation error; it equals ``e`` for
    constant ``theta`` and a noiseless channel.
    """
    noise = _check_noise(noise)
    layout = _joint_layout(model.n, observer, propagator, oracle, hot=True)
    F = observer.H.F
    k = observer.k
    W = observer.W
    so, sx = layout["observer"], layout["x"]

    def derivative(t, X, xi):
        x = X[sx]
        y = float(model.c @ x)
        y_r = y + xi
        xo = X[so]
        out = np.empty_like(X)
        out[sx] = plant_derivative(model, x, t)
        out[so], jets, nu = hot_observer_rates(observer, xo, y_r)
        if propagator:
            out[layout["Xi"]] = disturbance_propagator_derivative(
                X[layout["Xi"]], F, model, x, y, y_r, model.theta_at(t), k, xi)
        if oracle:
            theta = model.theta_at(t)
            varpi = jets["varpi"][0]
            w_nu = X[layout["w_nu"]]
            out[layout["w_nu"]] = F @ w_nu + observer.H.b_f * nu
            wn = float(W.output(w_nu, nu)[0])
            out[layout["e_oracle"]] = -observer.lam * X[layout["e_oracle"]] + float(varpi @ theta) - wn
            out[layout["zeta"]] = F @ X[layout["zeta"]]
        return out

    def record(t, X, held):
        p = layout.split(X)
        x = p["x"]
        y = x @ model.c
        xi = noise[: t.size]
        y_r = y + xi
        po = observer.layout.split(p["observer"])
        theta = theta_history(model, t)
        theta_hat = observer.theta_hat(p["observer"])
        ch = {"y": y, "y_r": y_r, "xi": xi, "e": y_r - po["x_hat"] @ model.c}
        nu = np.empty(t.size)
        varpi = np.empty((t.size, model.m))
        for i in range(t.size):
            jets = observer.jets(p["observer"][i], y_r[i])
            varpi[i] = jets["varpi"][0]
            nu[i] = hot_nu(observer, p["observer"][i], y_r[i], jets)
        ch["nu"] = nu
        for j in range(model.m):
            ch[f"theta{j + 1}"] = theta[:, j]
            ch[f"theta_hat{j + 1}"] = theta_hat[:, j]
            ch[f"varpi{j + 1}"] = varpi[:, j]
            ch[f"psi{j + 1}"] = po["psi"][:, j]
        eps = x - po["x_hat"]
        for i in range(model.n):
            ch[f"eps{i + 1}"] = eps[:, i]
        if propagator:
            ch["xi_e"] = p["Xi"] @ model.c
        if oracle:
            ch["e_oracle"] = p["e_oracle"][:, 0] + p["zeta"] @ model.c
        return ch

    system = OdeSystem(layout.size, derivative, _held(noise))
    return JointSystem(system, layout, _initial_state(layout, model, observer, x0, oracle), record,
                       model, observer, noise)


# --- state-dependent augmented error -----------------------------------------

def sd_record(layout, model, observer: SdObserver, noise):
    def record(t, X, held):
        ch, p, sig, theta_tilde = _common_channels(t, X, layout, model, observer, noise, observer.gamma)
        po = observer.layout.split(p["observer"])
        eps = p["x"] - po["x_hat"]
        delta = eps + sig["eta"] - np.einsum("knm,km->kn", sig["Omega"], theta_tilde)
        for i in range(model.n):
            ch[f"delta{i + 1}"] = delta[:, i]
        if "zeta" in p:
            for i in range(model.n):
                ch[f"zeta{i + 1}"] = p["zeta"][:, i]
            ch["zeta_c"] = p["zeta"] @ model.c
        return ch
    return record


def build_sd_system(model, observer: SdObserver, x0, noise, propagator=False, oracle=False) -> JointSystem:
    """Joint system of a state-dependent master and the ``Omega``/``eta`` observer (numpy path)."""
    noise = _check_noise(noise)
    layout = _joint_layout(model.n, observer, propagator, oracle)
    so, sx = layout["observer"], layout["x"]

    def derivative(t, X, xi):
        x = X[sx]
        y = float(model.c @ x)
        y_r = y + xi
        out = np.empty_like(X)
        out[sx] = plant_derivative(model, x, t)
        out[so] = sd_observer_derivative(observer, X[so], y_r)
        if propagator or oracle:
            G = observer.G(y_r)
        if propagator:
            out[layout["Xi"]] = disturbance_propagator_derivative(
                X[layout["Xi"]], G, model, x, y, y_r, model.theta_at(t), observer.k_of_y(y_r), xi)
        if oracle:
            out[layout["zeta"]] = G @ X[layout["zeta"]]
        return out

    system = OdeSystem(layout.size, derivative, _held(noise))
    return JointSystem(system, layout, _initial_state(layout, model, observer, x0, oracle),
                       sd_record(layout, model, observer, noise), model, observer, noise)


def sd_compiled_eligible(model, observer: SdObserver) -> bool:
    """True when every map of the plant and observer is a polynomial the compiled kernel accepts."""
    maps = [model.A_of_y, model.phi0, model.phi, observer.k_of_y]
    if observer.filters == "as-printed":
        maps.append(observer.printed_filter_matrix)
    return all(isinstance(f, PolyMap) for f in maps)


def run_sd_compiled(joint: JointSystem, t_end: float, h: float, t0: float = 0.0,
                    guard: float = DEFAULT_GUARD) -> TimeSeries:
    """Integrate an SD joint system with the compiled kernel; same result as ``joint.run``."""
    from ._sdkernel import sd_integrate

    model, obs, layout = joint.model, joint.observer, joint.layout
    if not sd_compiled_eligible(model, obs):
        raise TypeError("compiled path needs polynomial maps; use JointSystem.run")
    n_steps = step_count(t0, t_end, h)
    t = time_grid(t0, n_steps, h)
    if joint.noise.size < n_steps + 1:
        raise ValueError(f"need {n_steps + 1} noise samples, got {joint.noise.size}")
    theta_half = theta_history(model, t0 + 0.5 * h * np.arange(2 * n_steps + 1))
    printed = obs.printed_filter_matrix.coeffs if obs.filters == "as-printed" else np.zeros((1, model.n, model.n))
    states, bad_step, bad_kind, bad_channel = sd_integrate(
        np.ascontiguousarray(joint.x0), float(h), int(n_steps),
        np.ascontiguousarray(theta_half), np.ascontiguousarray(joint.noise[: n_steps + 1]),
        np.ascontiguousarray(model.A_of_y.coeffs), np.ascontiguousarray(model.phi0.coeffs),
        np.ascontiguousarray(model.phi.coeffs), np.ascontiguousarray(obs.k_of_y.coeffs),
        np.ascontiguousarray(printed), model.b, model.c, float(obs.gamma),
        float(obs.theta_star) if obs.theta_star is not None else -1.0,
        obs.filters == "general", "Xi" in layout, "zeta" in layout, float(guard))
    if bad_step >= 0:
        if bad_kind == 0:
            raise IntegrationFault("non-finite derivative", t[bad_step], int(bad_channel))
        check_guard(states[bad_step + 1: bad_step + 2], t[bad_step + 1: bad_step + 2], guard)
    return record_series(t, states, h, joint.record, list(joint.noise[: n_steps + 1]))
