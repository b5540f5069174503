"""Verification toolkit: excitation, stability and robustness bounds."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.signal import ss2tf

from .numerics import TimeSeries


@dataclass(frozen=True)
class PeReport:
    T: float
    alpha_hat: float
    is_pe: bool
    windows: int
    threshold: float

    def to_dict(self) -> dict:
        return {"T": self.T, "alpha_hat": self.alpha_hat, "is_pe": self.is_pe,
                "windows": self.windows, "threshold": self.threshold}


def _cumulative_gram(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    outer = np.einsum("ki,kj->kij", f, f)
    dt = np.diff(t)[:, None, None]
    cum = np.zeros_like(outer)
    cum[1:] = np.cumsum(0.5 * dt * (outer[1:] + outer[:-1]), axis=0)
    return cum


def _interp_matrix(t, cum, s):
    # linear interpolation of the running integral between samples
    i = int(np.clip(np.searchsorted(t, s, side="right") - 1, 0, t.size - 2))
    w = (s - t[i]) / (t[i + 1] - t[i])
    return (1.0 - w) * cum[i] + w * cum[i + 1]


def pe_metric(f, T: float, stride: float | None = None, threshold: float = 1e-6,
              t=None, channels: Sequence[str] | None = None) -> PeReport:
    """Empirical persistent-excitation level of a sampled vector signal.

    For window starts ``s = t0, t0 + stride, ...`` with ``s + T <= t_end`` the
    Gram integral ``int_s^{s+T} f f^T`` is computed by the trapezoid rule and its
    smallest eigenvalue recorded; ``alpha_hat`` is the minimum over windows.

    ``f`` is either a :class:`TimeSeries` (all channels, or ``channels``, form
    the vector) or an array of shape ``(N,)``/``(N, m)`` sampled at ``t``.
    """
    if isinstance(f, TimeSeries):
        names = list(channels) if channels is not None else f.names
        t = f.t
        values = np.column_stack([f[n] for n in names])
    else:
        if t is None:
            raise ValueError("sample times t are required for array input")
        t = np.asarray(t, dtype=float)
        values = np.asarray(f, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
    if not T > 0:
        raise ValueError("window T must be positive")
    duration = t[-1] - t[0]
    if duration < T * (1 - 1e-9):
        raise ValueError(f"series duration {duration:g} is shorter than the window T={T:g}")
    stride = T / 4.0 if stride is None else float(stride)
    if not stride > 0:
        raise ValueError("stride must be positive")
    cum = _cumulative_gram(t, values)
    alpha = np.inf
    count = 0
    start = t[0]
    last = t[-1] - T + 1e-9 * max(1.0, T)
    while start <= last:
        end = min(start + T, t[-1])
        gram = _interp_matrix(t, cum, end) - _interp_matrix(t, cum, start)
        alpha = min(alpha, float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0]))
        count += 1
        start = t[0] + count * stride
    alpha = max(alpha, 0.0)
    return PeReport(float(T), alpha, bool(alpha >= threshold), count, float(threshold))


class HurwitzResult(NamedTuple):
    is_hurwitz: bool
    abscissa: float


def hurwitz_check(F) -> HurwitzResult:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[0] != F.shape[1]:
        raise ValueError("matrix must be square")
    abscissa = float(np.max(np.linalg.eigvals(F).real))
    return HurwitzResult(abscissa < 0, abscissa)


def _controllable(F, b, tol=1e-9):
    n = F.shape[0]
    C = np.column_stack([np.linalg.matrix_power(F, i) @ b for i in range(n)])
    return np.linalg.matrix_rank(C, tol * max(1.0, np.linalg.norm(C))) == n


def _observable(F, c, tol=1e-9):
    return _controllable(F.T, c, tol)


def transfer_polynomials(H) -> tuple[np.ndarray, np.ndarray]:
    """``(num, den)`` from either a ``(num, den)`` pair or a ``(F, b, c)`` realization."""
    if len(H) == 2:
        num, den = (np.atleast_1d(np.asarray(p, dtype=float)) for p in H)
        return num, den
    F, b, c = (np.asarray(a, dtype=float) for a in H)
    F = np.atleast_2d(F)
    if not (_controllable(F, b.ravel()) and _observable(F, c.ravel())):
        warnings.warn("realization is not minimal; cancelling common pole-zero pairs", stacklevel=3)
    num, den = ss2tf(F, b.reshape(-1, 1), c.reshape(1, -1), np.zeros((1, 1)))
    return np.asarray(num[0], dtype=float), np.asarray(den, dtype=float)


def _cancel(num_roots, den_roots, tol=1e-6):
    num_roots = list(num_roots)
    den_left = []
    for p in den_roots:
        match = next((i for i, z in enumerate(num_roots) if abs(z - p) < tol * max(1.0, abs(p))), None)
        if match is None:
            den_left.append(p)
        else:
            num_roots.pop(match)
    return np.array(num_roots), np.array(den_left)


def min_phase_check(H) -> bool:
    """True when every transmission zero of the SISO ``H(p)`` lies in Re < 0."""
    num, den = transfer_polynomials(H)
    scale = max(np.max(np.abs(num)), 1e-300)
    num = num.copy()
    num[np.abs(num) < 1e-12 * scale] = 0.0
    num = np.trim_zeros(num, "f")
    if num.size == 0:
        raise ValueError("transfer function is identically zero")
    zeros, _ = _cancel(np.roots(num), np.roots(den))
    return bool(zeros.size == 0 or np.all(zeros.real < 0))


def lyapunov_solve(F) -> np.ndarray:
    """Symmetric positive-definite ``P`` with ``F^T P + P F = -2 I``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    ok, abscissa = hurwitz_check(F)
    if not ok:
        raise ValueError(f"F is not Hurwitz (spectral abscissa {abscissa:.6g})")
    n = F.shape[0]
    P = solve_continuous_lyapunov(F.T, -2.0 * np.eye(n))
    return 0.5 * (P + P.T)


def hot_mu_bound(F, l, h_t, lam: float) -> float:
    """Lower bound ``3/(4 lambda) (|l| + |P F^{-1} h|)^2`` on the tuner gain ``mu``.

    ``F`` is the tuner matrix; an empty realization (relative degree <= 2)
    gives 0.
    """
    l = np.atleast_1d(np.asarray(l, dtype=float))
    h_t = np.atleast_1d(np.asarray(h_t, dtype=float))
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if h_t.size == 0 or (not np.any(l) and not np.any(h_t)):
        return 0.0
    F = np.atleast_2d(np.asarray(F, dtype=float))
    P = lyapunov_solve(F)
    term = np.linalg.norm(l) + np.linalg.norm(P @ np.linalg.solve(F, h_t))
    return float(3.0 / (4.0 * lam) * term**2)


@dataclass(frozen=True)
class StabilityCertificate:
    P: np.ndarray | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    c4: float | None = None
    mu_min: float | None = None


def lorenz_certificate(sigma: float, beta: float) -> StabilityCertificate:
    """Constants for ``V(x) = x^T x / 2`` along ``dx/dt = G(y) x`` of the Lorenz observer."""
    return StabilityCertificate(P=0.5 * np.eye(3), c1=0.5, c2=0.5, c3=min(sigma, 1.0, beta), c4=1.0)


@dataclass(frozen=True)
class ResidualBound:
    theta_norm: float
    theta_star: float
    gamma: float
    noise_sup: float
    bound: float

    def contains(self, theta_tilde) -> np.ndarray:
        sq = np.sum(np.atleast_2d(np.asarray(theta_tilde, dtype=float)) ** 2, axis=-1)
        return sq <= self.bound

    def to_dict(self) -> dict:
        return {"theta_norm": self.theta_norm, "theta_star": self.theta_star, "gamma": self.gamma,
                "noise_sup": self.noise_sup, "bound": self.bound}


def residual_bound(theta, theta_star: float, gamma: float, noise_sup: float) -> ResidualBound:
    """Radius (squared) of the set the robust parameter error converges to."""
    if not (theta_star > 0 and gamma > 0):
        raise ValueError("theta_star and gamma must be positive")
    if noise_sup < 0:
        raise ValueError("noise_sup must be non-negative")
    tn = float(np.linalg.norm(np.atleast_1d(theta)))
    bound = max((tn + 2.0 * theta_star) ** 2, gamma * noise_sup**2 + tn**2)
    return ResidualBound(tn, float(theta_star), float(gamma), float(noise_sup), float(bound))


def disturbance_propagator_derivative(Xi, G, model, x, y, y_r, theta, k, xi) -> np.ndarray:
    """Noise-driven error component of the robust schemes.

    ``dXi/dt = G Xi + phi0(y) - phi0(y_r) + b (phi(y) - phi(y_r))^T theta
    - k xi + (A(y) - A(y_r)) x``; the last term vanishes for constant ``A``.
    """
    x = np.asarray(x, dtype=float)
    delta = (model.phi0(y) - model.phi0(y_r)
             + model.b * float(np.dot(model.phi(y) - model.phi(y_r), np.atleast_1d(theta)))
             - np.asarray(k, dtype=float) * xi
             + (model.A_at(y) - model.A_at(y_r)) @ x)
    return np.asarray(G) @ np.asarray(Xi, dtype=float) + delta


def place_observer_gain(A, c, poles) -> np.ndarray:
    """Gain ``k`` giving ``A - k c^T`` the characteristic roots ``poles`` (Ackermann)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    n = A.shape[0]
    poles = np.broadcast_to(np.asarray(poles, dtype=complex), (n,)) if np.ndim(poles) == 0 else np.asarray(poles, dtype=complex)
    if poles.size != n:
        raise ValueError(f"need {n} poles")
    O = np.vstack([c @ np.linalg.matrix_power(A, i) for i in range(n)])
    if np.linalg.matrix_rank(O) < n:
        raise ValueError("(A, c) is not observable")
    coeffs = np.real(np.poly(poles))
    pA = sum(coeffs[i] * np.linalg.matrix_power(A, n - i) for i in range(n + 1))
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    return pA @ np.linalg.solve(O, e_n)
