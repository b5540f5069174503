"""State-space realizations of the filtering operators used by the observers.

``H(p) = c^T (pI - F)^{-1} b`` applied to an ``m``-vector is realized as ``m``
independent copies of ``(F, b, c)``; the filter state of one operator is an
``(m, n)`` array with one row per input channel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import ss2tf


def spectral_abscissa(F) -> float:
    return float(np.max(np.linalg.eigvals(np.atleast_2d(F)).real))


@dataclass(frozen=True)
class LtiFilter:
    """SISO realization ``(F, b_f, c_f)`` replicated over ``channels`` inputs."""

    F: np.ndarray
    b_f: np.ndarray
    c_f: np.ndarray
    channels: int = 1

    @property
    def order(self) -> int:
        return self.b_f.size

    @property
    def state_size(self) -> int:
        return self.order * self.channels

    def zero_state(self) -> np.ndarray:
        return np.zeros((self.channels, self.order))

    def derivative(self, state, u) -> np.ndarray:
        """``d/dt state_j = F state_j + b_f u_j`` for every channel ``j``."""
        state = np.asarray(state, dtype=float).reshape(self.channels, self.order)
        return state @ self.F.T + np.outer(np.atleast_1d(u), self.b_f)

    def transfer(self, s0: complex) -> complex:
        n = self.order
        return complex(self.c_f @ np.linalg.solve(s0 * np.eye(n) - self.F, self.b_f))

    def dc_gain(self) -> float:
        return float(-self.c_f @ np.linalg.solve(self.F, self.b_f))

    def markov(self, count: int) -> np.ndarray:
        """``c^T F^j b`` for ``j = 0 .. count-1``."""
        out = np.empty(count)
        v = self.b_f.copy()
        for j in range(count):
            out[j] = self.c_f @ v
            v = self.F @ v
        return out

    @cached_property
    def relative_degree(self) -> int:
        """Pole excess of ``H(p)``; the first non-negligible Markov parameter."""
        mk = self.markov(self.order)
        scale = max(1.0, np.linalg.norm(self.F, 2)) ** np.arange(self.order) * np.linalg.norm(self.b_f) * np.linalg.norm(self.c_f)
        nz = np.flatnonzero(np.abs(mk) > 1e-9 * scale)
        if nz.size == 0:
            raise ValueError("transfer function is identically zero")
        return int(nz[0]) + 1

    @cached_property
    def polynomials(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator and denominator coefficients of ``H(p)`` (highest power first)."""
        num, den = ss2tf(self.F, self.b_f[:, None], self.c_f[None, :], np.zeros((1, 1)))
        num = np.asarray(num[0], dtype=float)[self.relative_degree:]
        return num, np.asarray(den, dtype=float)


def make_lti_filter(F, b_f, c_f, channels: int = 1) -> LtiFilter:
    """Build a filter after checking that ``F`` is Hurwitz."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    b_f = np.atleast_1d(np.asarray(b_f, dtype=float)).ravel()
    c_f = np.atleast_1d(np.asarray(c_f, dtype=float)).ravel()
    n = F.shape[0]
    if F.shape != (n, n) or b_f.size != n or c_f.size != n:
        raise ValueError("inconsistent filter dimensions")
    if int(channels) < 1:
        raise ValueError("channels must be positive")
    eig = np.linalg.eigvals(F)
    worst = eig[np.argmax(eig.real)]
    if worst.real >= 0:
        raise ValueError(f"filter matrix is not Hurwitz: eigenvalue {worst:.6g} has non-negative real part")
    return LtiFilter(F, b_f, c_f, int(channels))


def lti_filter_output(filt: LtiFilter, state) -> np.ndarray:
    """Output ``c_f^T state_j`` of every channel.

    ``state`` is flat with trailing size ``channels * order``; leading axes
    (e.g. time) are kept.
    """
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != filt.state_size:
        raise ValueError(f"state has trailing size {state.shape[-1]}, expected {filt.state_size}")
    return state.reshape(state.shape[:-1] + (filt.channels, filt.order)) @ filt.c_f


@dataclass(frozen=True)
class WDecomposition:
    """``W(p) = (p + lambda) H(p)`` realized on the states of the ``H`` filter."""

    lam: float
    H: LtiFilter

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def relative_degree(self) -> int:
        return self.H.relative_degree

    def transfer(self, s0: complex) -> complex:
        return (s0 + self.lam) * self.H.transfer(s0)

    def output(self, state, u) -> np.ndarray:
        """``varpi = c^T (F state + b u) + lambda c^T state`` per channel."""
        H = self.H
        state = np.asarray(state, dtype=float).reshape(-1, H.order)
        return state @ (H.F.T @ H.c_f + self.lam * H.c_f) + (H.c_f @ H.b_f) * np.atleast_1d(u)

    def jets(self, state, u, order: int) -> np.ndarray:
        """``varpi`` and its time derivatives ``0 .. order`` from the filter state.

        Derivatives of the input are not available; they enter ``varpi^(j)``
        only for ``j >= relative_degree``, so ``order`` must stay below that.
        """
        H = self.H
        if order > max(self.relative_degree - 1, 0):
            raise ValueError("requested derivative order needs derivatives of the filter input")
        s = np.asarray(state, dtype=float).reshape(-1, H.order)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        row = H.F.T @ H.c_f + self.lam * H.c_f
        out = np.empty((order + 1, s.shape[0]))
        direct = H.c_f @ H.b_f
        for j in range(order + 1):
            out[j] = s @ row + (direct * u if j == 0 else 0.0)
            s = s @ H.F.T + (np.outer(u, H.b_f) if j == 0 else 0.0)
        return out


def w_filter_output(w: WDecomposition, state, u) -> np.ndarray:
    return w.output(state, u)


def companion_realization(num, den) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Controllable canonical ``(F, g, h)`` with ``h^T (pI - F)^{-1} g = num/den``.

    ``num`` must have lower degree than ``den``; both are highest-power-first.
    """
    den = np.trim_zeros(np.asarray(den, dtype=float), "f")
    num = np.atleast_1d(np.asarray(num, dtype=float))
    num = num / den[0]
    den = den / den[0]
    d = den.size - 1
    if d < 1:
        raise ValueError("denominator must have positive degree")
    num = np.trim_zeros(num, "f") if np.any(num) else np.zeros(1)
    if num.size > d:
        raise ValueError("num/den must be strictly proper")
    F = np.zeros((d, d))
    F[:-1, 1:] = np.eye(d - 1)
    F[-1, :] = -den[1:][::-1]
    g = np.zeros(d)
    g[-1] = 1.0
    h = np.zeros(d)
    h[: num.size] = num[::-1]
    return F, g, h


@dataclass(frozen=True)
class InverseW:
    """``W(p)^{-1} = Q(p) + R(p)/M(p)`` with ``M(p) = (p + lambda) N(p)``.

    ``poly[j]`` multiplies the ``j``-th derivative of the input; the strictly
    proper remainder is realized by ``(F, g, h)``.  Requires ``N`` Hurwitz.
    """

    poly: np.ndarray
    F: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def order(self) -> int:
        return self.g.size

    @classmethod
    def from_w(cls, w: WDecomposition) -> InverseW:
        num, den = w.H.polynomials
        if num.size > 1 and spectral_abscissa_of_poly(num) >= 0:
            raise ValueError("W(p)^{-1} is unstable: H(p) is not minimum phase")
        M = np.polymul([1.0, w.lam], num)
        Q, R = np.polydiv(den, M)
        F, g, h = companion_realization(R, M)
        return cls(np.asarray(Q, dtype=float)[::-1].copy(), F, g, h)

    def transfer(self, s0: complex) -> complex:
        q = complex(np.polyval(self.poly[::-1], s0))
        return q + complex(self.h @ np.linalg.solve(s0 * np.eye(self.order) - self.F, self.g))


def spectral_abscissa_of_poly(coeffs) -> float:
    roots = np.roots(coeffs)
    return float(np.max(roots.real)) if roots.size else -np.inf


def omega_filter_derivative(Omega, G_t, b, phibar) -> np.ndarray:
    """``dOmega/dt = G(t) Omega + b phibar^T`` (``Omega`` is ``n x m``)."""
    Omega = np.asarray(Omega, dtype=float)
    return np.asarray(G_t) @ Omega + np.outer(b, np.atleast_1d(phibar))


def eta_filter_derivative(eta, G_t, Omega, theta_hat_dot) -> np.ndarray:
    """``deta/dt = G(t) eta - Omega dtheta_hat/dt``."""
    return np.asarray(G_t) @ np.asarray(eta, dtype=float) - np.asarray(Omega) @ np.atleast_1d(theta_hat_dot)
