"""Compiled RK4 loop for state-dependent master/observer systems with polynomial maps.

State order: ``x (n), x_hat (n), theta_hat (m), Omega (n*m, row-major),
eta (n)``, then optionally ``Xi (n)`` and ``zeta (n)``.  The right-hand side
mirrors :func:`adapt_sync.observers.sd_observer_derivative`.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _poly_vec(coeffs, y):
    out = coeffs[coeffs.shape[0] - 1].copy()
    for j in range(coeffs.shape[0] - 2, -1, -1):
        out = out * y + coeffs[j]
    return out


@njit(cache=True)
def _poly_mat(coeffs, y):
    out = coeffs[coeffs.shape[0] - 1].copy()
    for j in range(coeffs.shape[0] - 2, -1, -1):
        out = out * y + coeffs[j]
    return out


@njit(cache=True)
def _rhs(X, xi, theta, A_c, phi0_c, phi_c, k_c, P_c, b, c, gamma, theta_star,
         general, with_xi, with_zeta):
    n = b.size
    m = theta.size
    out = np.empty(X.size)
    x = X[0:n]
    y = 0.0
    for i in range(n):
        y += c[i] * x[i]
    y_r = y + xi
    A_y = _poly_mat(A_c, y)
    A_r = _poly_mat(A_c, y_r)
    phi0_y = _poly_vec(phi0_c, y)
    phi0_r = _poly_vec(phi0_c, y_r)
    phi_y = _poly_vec(phi_c, y)
    phi_r = _poly_vec(phi_c, y_r)
    k_r = _poly_vec(k_c, y_r)

    pt = 0.0
    for j in range(m):
        pt += phi_y[j] * theta[j]
    out[0:n] = A_y @ x + phi0_y + b * pt

    o = n
    x_hat = X[o:o + n]
    th = X[o + n:o + n + m]
    om0 = o + n + m
    Om = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            Om[i, j] = X[om0 + i * m + j]
    eta = X[om0 + n * m:om0 + n * m + n]

    e = y_r
    ce = 0.0
    for i in range(n):
        e -= c[i] * x_hat[i]
        ce += c[i] * eta[i]
    e_aug = e + ce
    omega = np.zeros(m)
    for j in range(m):
        for i in range(n):
            omega[j] += c[i] * Om[i, j]
    rate = gamma * omega * e_aug
    if theta_star > 0.0:
        norm = np.sqrt(np.sum(th * th))
        if norm < theta_star:
            alpha = 0.0
        elif norm > 2.0 * theta_star:
            alpha = 1.0
        else:
            alpha = norm / theta_star - 1.0
        rate = rate - alpha * th

    pth = 0.0
    for j in range(m):
        pth += phi_r[j] * th[j]
    out[o:o + n] = A_r @ x_hat + phi0_r + b * pth + k_r * e
    out[o + n:o + n + m] = rate

    G = A_r - np.outer(k_r, c)
    if general:
        dOm = G @ Om + np.outer(b, phi_r)
        deta = G @ eta - Om @ rate
    else:
        Gp = _poly_mat(P_c, y_r)
        dOm = Gp @ Om
        deta = Gp @ eta - Om @ th
    for i in range(n):
        for j in range(m):
            out[om0 + i * m + j] = dOm[i, j]
    out[om0 + n * m:om0 + n * m + n] = deta

    pos = om0 + n * m + n
    if with_xi:
        Xi = X[pos:pos + n]
        dphi = 0.0
        for j in range(m):
            dphi += (phi_y[j] - phi_r[j]) * theta[j]
        out[pos:pos + n] = G @ Xi + phi0_y - phi0_r + b * dphi - k_r * xi + (A_y - A_r) @ x
        pos += n
    if with_zeta:
        out[pos:pos + n] = G @ X[pos:pos + n]
    return out


@njit(cache=True)
def _first_bad(v):
    for i in range(v.size):
        if not np.isfinite(v[i]):
            return i
    return -1


@njit(cache=True)
def sd_integrate(x0, h, n_steps, theta_half, xi, A_c, phi0_c, phi_c, k_c, P_c, b, c,
                 gamma, theta_star, general, with_xi, with_zeta, guard):
    """Fixed-step RK4; returns ``(states, bad_step, kind, channel)``.

    ``kind`` is 0 for a non-finite stage in step ``bad_step`` and 1 for a guard
    violation of the state after that step; ``bad_step = -1`` when clean.
    """
    states = np.empty((n_steps + 1, x0.size))
    states[0] = x0
    X = x0.copy()
    half = 0.5 * h
    for k in range(n_steps):
        xk = xi[k]
        k1 = _rhs(X, xk, theta_half[2 * k], A_c, phi0_c, phi_c, k_c, P_c, b, c, gamma, theta_star,
                  general, with_xi, with_zeta)
        k2 = _rhs(X + half * k1, xk, theta_half[2 * k + 1], A_c, phi0_c, phi_c, k_c, P_c, b, c, gamma,
                  theta_star, general, with_xi, with_zeta)
        k3 = _rhs(X + half * k2, xk, theta_half[2 * k + 1], A_c, phi0_c, phi_c, k_c, P_c, b, c, gamma,
                  theta_star, general, with_xi, with_zeta)
        k4 = _rhs(X + h * k3, xk, theta_half[2 * k + 2], A_c, phi0_c, phi_c, k_c, P_c, b, c, gamma,
                  theta_star, general, with_xi, with_zeta)
        for stage in (k1, k2, k3, k4):
            bad = _first_bad(stage)
            if bad >= 0:
                return states[: k + 1], k, 0, bad
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[k + 1] = X
        for i in range(X.size):
            if not np.abs(X[i]) <= guard:
                return states[: k + 2], k, 1, i
    return states, -1, -1, -1
