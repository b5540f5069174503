"""Adaptive observers (slave systems) for regressor-form master systems.

Three schemes are provided:

* :class:`AeObserver` - augmented-error observer for constant ``A``; with
  ``theta_star`` set it uses the dead-zone leakage for noisy outputs.
* :class:`HotObserver` - observer with the feedback ``nu = W(p)^{-1}[varpi^T
  theta_hat]`` and a high-order tuner producing the parameter derivatives.
* :class:`SdObserver` - augmented-error observer for state-dependent ``A(y)``
  using the matrix regressor filter ``Omega`` and auxiliary filter ``eta``.

Each observer owns a :class:`~adapt_sync.numerics.StateLayout` describing its
part of the joint state and a ``*_derivative`` function driven by the
received output ``y_r``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .analysis import hot_mu_bound
from .filters import (InverseW, LtiFilter, WDecomposition, companion_realization, eta_filter_derivative,
                      make_lti_filter, omega_filter_derivative)
from .numerics import StateLayout
from .plant import PolyMap, RegressorPlant, StateDependentPlant, as_polymap

TUNER_OUTPUTS = ("direct", "derivative")
FILTER_MODES = ("general", "as-printed")


def dead_zone_alpha(theta_hat, theta_star: float) -> float:
    """Leakage weight: 0 inside ``|theta_hat| < theta_star``, 1 beyond ``2 theta_star``, linear between."""
    if not theta_star > 0:
        raise ValueError("theta_star must be positive")
    norm = float(np.linalg.norm(np.atleast_1d(theta_hat)))
    if norm < theta_star:
        return 0.0
    if norm > 2.0 * theta_star:
        return 1.0
    return norm / theta_star - 1.0


def adaptation_rhs(gamma: float, omega, e_aug: float, theta_hat, theta_star: float | None = None) -> np.ndarray:
    """``gamma * omega * e_aug``, minus ``alpha(theta_hat) theta_hat`` in robust mode."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    rate = gamma * np.atleast_1d(np.asarray(omega, dtype=float)) * e_aug
    if theta_star is not None:
        theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
        rate = rate - dead_zone_alpha(theta_hat, theta_star) * theta_hat
    return rate


def augmented_error(e_raw: float, aug_filter_output: float, omega, theta_hat) -> float:
    """``e + H(p)[phi^T theta_hat] - omega^T theta_hat``."""
    return e_raw + aug_filter_output - float(np.dot(omega, theta_hat))


def _vector(value, size, name):
    if value is None:
        return np.zeros(size)
    v = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    if v.size != size:
        raise ValueError(f"{name} must have length {size}")
    return v


# --- augmented error, constant A ---------------------------------------------

@dataclass
class AeObserver:
    """Augmented-error adaptive observer for ``dx/dt = A x + phi0(y) + b phi(y)^T theta``.

    ``model`` supplies the known structure (its ``theta`` is ignored).  The
    regressor filter produces ``omega = H(p)[phi(y_r)]`` and the augmentation
    filter ``H(p)[phi(y_r)^T theta_hat]`` with ``H(p) = c^T (pI - A + k c^T)^{-1} b``.
    """

    model: RegressorPlant
    k: np.ndarray
    gamma: float
    theta_star: float | None = None
    x_hat0: np.ndarray | None = None
    theta_hat0: np.ndarray | None = None
    regressor_filter: LtiFilter = field(init=False)
    augmentation_filter: LtiFilter = field(init=False)

    def __post_init__(self):
        if not isinstance(self.model, RegressorPlant):
            raise TypeError("the augmented-error observer needs a constant-A plant")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.theta_star is not None and not self.theta_star > 0:
            raise ValueError("theta_star must be positive")
        m = self.model
        self.k = _vector(self.k, m.n, "k")
        self.x_hat0 = _vector(self.x_hat0, m.n, "x_hat0")
        self.theta_hat0 = _vector(self.theta_hat0, m.m, "theta_hat0")
        F = m.A - np.outer(self.k, m.c)
        self.regressor_filter = make_lti_filter(F, m.b, m.c, m.m)
        self.augmentation_filter = make_lti_filter(F, m.b, m.c, 1)
        self.layout = StateLayout([("x_hat", m.n), ("theta_hat", m.m),
                                   ("omega_f", m.m * m.n), ("aug_f", m.n)])

    @property
    def F(self) -> np.ndarray:
        return self.regressor_filter.F

    def initial_state(self) -> np.ndarray:
        return self.layout.pack(x_hat=self.x_hat0, theta_hat=self.theta_hat0)

    def signals(self, state, y_r) -> dict[str, np.ndarray]:
        """Algebraic observer outputs; ``state`` may carry leading (time) axes."""
        p = self.layout.split(np.asarray(state, dtype=float))
        c = self.model.c
        y_hat = p["x_hat"] @ c
        e = np.asarray(y_r) - y_hat
        omega = p["omega_f"].reshape(p["omega_f"].shape[:-1] + (self.model.m, self.model.n)) @ c
        aug = p["aug_f"] @ c
        e_aug = e + aug - np.sum(omega * p["theta_hat"], axis=-1)
        return {"y_hat": y_hat, "e": e, "omega": omega, "aug": aug, "e_aug": e_aug,
                "theta_hat": p["theta_hat"]}


def ae_observer_derivative(obs: AeObserver, state, y_r: float) -> np.ndarray:
    """Observer, filter and adaptation right-hand sides for one received sample."""
    m = obs.model
    p = obs.layout.split(np.asarray(state, dtype=float))
    theta_hat = p["theta_hat"]
    phibar = np.atleast_1d(m.phi(y_r))
    e = y_r - float(m.c @ p["x_hat"])
    omega_state = p["omega_f"].reshape(m.m, m.n)
    omega = omega_state @ m.c
    e_aug = augmented_error(e, float(m.c @ p["aug_f"]), omega, theta_hat)
    out = np.empty(obs.layout.size)
    out[obs.layout["x_hat"]] = (m.A @ p["x_hat"] + m.phi0(y_r)
                                + m.b * float(phibar @ theta_hat) + obs.k * e)
    out[obs.layout["theta_hat"]] = adaptation_rhs(obs.gamma, omega, e_aug, theta_hat, obs.theta_star)
    out[obs.layout["omega_f"]] = obs.regressor_filter.derivative(omega_state, phibar).ravel()
    out[obs.layout["aug_f"]] = obs.augmentation_filter.derivative(p["aug_f"], float(phibar @ theta_hat)).ravel()
    return out


# --- high-order tuner -----------------------------------------------------------

@dataclass(frozen=True)
class Tuner:
    """Realization ``(l, Gamma, h_t)`` of ``alpha(0)/alpha(p)`` with time scaling ``1 + mu |varpi|^2``."""

    Gamma: np.ndarray
    h_t: np.ndarray
    l: np.ndarray
    mu: float
    lam: float

    @classmethod
    def design(cls, relative_degree: int, alpha_lambda: float, mu: float, lam: float) -> Tuner:
        """``alpha(p) = (p + alpha_lambda)^(r-2)`` in controllable canonical form."""
        order = max(relative_degree - 2, 0)
        if order == 0:
            return cls(np.zeros((0, 0)), np.zeros(0), np.zeros(0), float(mu), float(lam))
        den = np.real(np.poly([-alpha_lambda] * order))
        Gamma, h_t, l = companion_realization([den[-1]], den)
        return cls(Gamma, h_t, l, float(mu), float(lam))

    @property
    def order(self) -> int:
        return self.h_t.size

    def mu_bound(self) -> float:
        return hot_mu_bound(self.Gamma, self.l, self.h_t, self.lam)

    def transfer(self, s0: complex) -> complex:
        if self.order == 0:
            return 1.0
        return complex(self.l @ np.linalg.solve(s0 * np.eye(self.order) - self.Gamma, self.h_t))


@dataclass
class HotObserver:
    """Adaptive observer with the high-order tuner for constant-``A`` plants.

    The feedback ``nu = W(p)^{-1}[varpi^T theta_hat]`` with ``W(p) = (p +
    lambda) H(p)`` is evaluated exactly: the polynomial part of ``W^{-1}``
    acts on derivatives of ``varpi^T theta_hat`` obtained from the filter and
    tuner states, the strictly proper remainder is a filter state.

    ``tuner_output="direct"`` reads ``theta_hat_i = l^T eta_i``;
    ``"derivative"`` integrates ``dtheta_hat_i/dt = l^T eta_i``.
    """

    model: RegressorPlant
    k: np.ndarray
    lam: float = 1.0
    mu: float | None = None
    alpha_lambda: float | None = None
    strict: bool = True
    tuner_output: str = "direct"
    x_hat0: np.ndarray | None = None
    theta_hat0: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.model, RegressorPlant):
            raise TypeError("the high-order-tuner observer needs a constant-A plant")
        if self.tuner_output not in TUNER_OUTPUTS:
            raise ValueError(f"tuner_output must be one of {TUNER_OUTPUTS}")
        m = self.model
        self.k = _vector(self.k, m.n, "k")
        self.x_hat0 = _vector(self.x_hat0, m.n, "x_hat0")
        self.theta_hat0 = _vector(self.theta_hat0, m.m, "theta_hat0")
        F = m.A - np.outer(self.k, m.c)
        self.H = make_lti_filter(F, m.b, m.c, m.m)
        self.W = WDecomposition(float(self.lam), self.H)
        self.r = self.H.relative_degree
        if self.r < 1:
            raise ValueError("relative degree must be at least 1")
        self.inverse = InverseW.from_w(self.W)
        alpha_lambda = self.lam if self.alpha_lambda is None else self.alpha_lambda
        probe = Tuner.design(self.r, alpha_lambda, 1.0, self.lam)
        bound = probe.mu_bound()
        mu = self.mu if self.mu is not None else (2.0 * bound if bound > 0 else 1.0)
        if not mu > 0:
            raise ValueError("mu must be positive")
        if self.strict and probe.order > 0 and not mu > bound:
            raise ValueError(f"mu={mu:g} does not exceed the tuner bound {bound:g}")
        self.mu = float(mu)
        self.tuner = Tuner(probe.Gamma, probe.h_t, probe.l, self.mu, float(self.lam))
        self.mu_min = bound
        parts = [("x_hat", m.n), ("varpi_f", m.m * m.n), ("psi", m.m), ("eta", m.m * self.tuner.order)]
        if self.tuner_output == "derivative" and self.tuner.order > 0:
            parts.append(("theta_hat", m.m))
        parts.append(("nu_f", self.inverse.order))
        self.layout = StateLayout(parts)

    @property
    def uses_tuner_filters(self) -> bool:
        return self.tuner.order > 0

    def initial_state(self) -> np.ndarray:
        th0 = self.theta_hat0
        parts = {"x_hat": self.x_hat0, "psi": th0}
        if self.uses_tuner_filters:
            # tuner at rest with l^T eta = psi
            eta0 = -np.linalg.solve(self.tuner.Gamma, self.tuner.h_t)
            parts["eta"] = np.outer(th0, eta0)
            if "theta_hat" in self.layout:
                parts["theta_hat"] = th0
        return self.layout.pack(**parts)

    def theta_hat(self, state) -> np.ndarray:
        p = self.layout.split(np.asarray(state, dtype=float))
        if not self.uses_tuner_filters:
            return p["psi"]
        if "theta_hat" in p:
            return p["theta_hat"]
        eta = p["eta"].reshape(p["eta"].shape[:-1] + (self.model.m, self.tuner.order))
        return eta @ self.tuner.l

    def jets(self, state, y: float) -> dict[str, np.ndarray]:
        """Derivatives ``0 .. r-1`` of ``varpi``, ``theta_hat`` and ``u = varpi^T theta_hat``.

        Only ``dpsi/dt = varpi e`` is known among the derivatives of ``psi``;
        higher ones are multiplied by ``l^T Gamma^j h_t = 0`` (``j < r - 3``)
        and are set to zero.
        """
        m, tn = self.model, self.tuner
        p = self.layout.split(np.asarray(state, dtype=float))
        order = self.r - 1
        phi = np.atleast_1d(m.phi(y))
        e = y - float(m.c @ p["x_hat"])
        vp = self.W.jets(p["varpi_f"], phi, order)
        psi = [p["psi"], vp[0] * e] + [np.zeros(m.m)] * order
        if not self.uses_tuner_filters:
            th = psi[: order + 1]
        else:
            sig = np.zeros(order + 1)
            for j in range(order + 1):
                sig[j] = tn.mu * sum(comb(j, a) * float(vp[a] @ vp[j - a]) for a in range(j + 1))
            sig[0] += 1.0
            eta = [p["eta"].reshape(m.m, tn.order)]
            for j in range(order):
                eta.append(sum(comb(j, a) * sig[a] * (eta[j - a] @ tn.Gamma.T + np.outer(psi[j - a], tn.h_t))
                               for a in range(j + 1)))
            if self.tuner_output == "direct":
                th = [eta[j] @ tn.l for j in range(order + 1)]
            else:
                th = [p["theta_hat"]] + [eta[j - 1] @ tn.l for j in range(1, order + 1)]
        u = np.array([sum(comb(j, a) * float(vp[a] @ th[j - a]) for a in range(j + 1))
                      for j in range(order + 1)])
        return {"varpi": vp, "theta_hat": np.array(th), "u": u, "e": e, "phi": phi}


def hot_nu(obs: HotObserver, state, y: float, jets: dict | None = None) -> float:
    """Adjustable feedback ``nu = W(p)^{-1}[varpi^T theta_hat]``."""
    jets = obs.jets(state, y) if jets is None else jets
    z = obs.layout.split(np.asarray(state, dtype=float))["nu_f"]
    return float(obs.inverse.poly @ jets["u"][: obs.inverse.poly.size] + obs.inverse.h @ z)


def hot_observer_derivative(obs: HotObserver, state, y: float) -> np.ndarray:
    return hot_observer_rates(obs, state, y)[0]


def hot_observer_rates(obs: HotObserver, state, y: float) -> tuple[np.ndarray, dict, float]:
    """State derivative together with the jets and ``nu`` it was computed from."""
    m, tn = obs.model, obs.tuner
    state = np.asarray(state, dtype=float)
    p = obs.layout.split(state)
    jets = obs.jets(state, y)
    nu = hot_nu(obs, state, y, jets)
    e, phi, vp = jets["e"], jets["phi"], jets["varpi"]
    out = np.empty(obs.layout.size)
    out[obs.layout["x_hat"]] = m.A @ p["x_hat"] + m.phi0(y) + m.b * nu + obs.k * e
    out[obs.layout["varpi_f"]] = obs.H.derivative(p["varpi_f"], phi).ravel()
    out[obs.layout["psi"]] = vp[0] * e
    if obs.uses_tuner_filters:
        scale = 1.0 + tn.mu * float(vp[0] @ vp[0])
        eta = p["eta"].reshape(m.m, tn.order)
        out[obs.layout["eta"]] = (scale * (eta @ tn.Gamma.T + np.outer(p["psi"], tn.h_t))).ravel()
        if "theta_hat" in obs.layout:
            out[obs.layout["theta_hat"]] = eta @ tn.l
    out[obs.layout["nu_f"]] = obs.inverse.F @ p["nu_f"] + obs.inverse.g * jets["u"][0]
    return out, jets, nu


# --- state-dependent augmented error -----------------------------------------

@dataclass
class SdObserver:
    """Augmented-error observer for ``dx/dt = A(y) x + phi0(y) + b phi(y)^T theta``.

    ``G(y) = A(y) - k(y) c^T`` must make ``dx/dt = G(y) x`` exponentially
    stable.  With ``filters="as-printed"`` the filters use
    ``printed_filter_matrix`` without the regressor forcing and drive ``eta``
    with ``Omega theta_hat`` instead of ``Omega dtheta_hat/dt``.
    """

    model: StateDependentPlant
    k_of_y: PolyMap | np.ndarray
    gamma: float
    theta_star: float | None = None
    filters: str = "general"
    printed_filter_matrix: PolyMap | None = None
    x_hat0: np.ndarray | None = None
    theta_hat0: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.model, StateDependentPlant):
            raise TypeError("the state-dependent observer needs a StateDependentPlant")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.theta_star is not None and not self.theta_star > 0:
            raise ValueError("theta_star must be positive")
        if self.filters not in FILTER_MODES:
            raise ValueError(f"filters must be one of {FILTER_MODES}")
        if self.filters == "as-printed" and self.printed_filter_matrix is None:
            raise ValueError("as-printed filters need printed_filter_matrix")
        m = self.model
        self.k_of_y = as_polymap(self.k_of_y, (m.n,))
        if np.shape(self.k_of_y(0.0)) != (m.n,):
            raise ValueError(f"k(y) must have length {m.n}")
        self.x_hat0 = _vector(self.x_hat0, m.n, "x_hat0")
        self.theta_hat0 = _vector(self.theta_hat0, m.m, "theta_hat0")
        self.layout = StateLayout([("x_hat", m.n), ("theta_hat", m.m), ("Omega", m.n * m.m), ("eta", m.n)])

    def G(self, y):
        m = self.model
        return m.A_at(y) - np.multiply.outer(self.k_of_y(y), m.c)

    def filter_matrix(self, y):
        return self.G(y) if self.filters == "general" else self.printed_filter_matrix(y)

    def initial_state(self) -> np.ndarray:
        return self.layout.pack(x_hat=self.x_hat0, theta_hat=self.theta_hat0)

    def signals(self, state, y_r) -> dict[str, np.ndarray]:
        m = self.model
        p = self.layout.split(np.asarray(state, dtype=float))
        y_hat = p["x_hat"] @ m.c
        e = np.asarray(y_r) - y_hat
        Omega = p["Omega"].reshape(p["Omega"].shape[:-1] + (m.n, m.m))
        omega = np.einsum("n,...nm->...m", m.c, Omega)
        e_aug = e + p["eta"] @ m.c
        return {"y_hat": y_hat, "e": e, "omega": omega, "e_aug": e_aug,
                "theta_hat": p["theta_hat"], "Omega": Omega, "eta": p["eta"]}


def sd_observer_derivative(obs: SdObserver, state, y_r: float) -> np.ndarray:
    m = obs.model
    p = obs.layout.split(np.asarray(state, dtype=float))
    theta_hat = p["theta_hat"]
    Omega = p["Omega"].reshape(m.n, m.m)
    phibar = np.atleast_1d(m.phi(y_r))
    A_r = m.A_at(y_r)
    k_r = obs.k_of_y(y_r)
    e = y_r - float(m.c @ p["x_hat"])
    omega = m.c @ Omega
    e_aug = e + float(m.c @ p["eta"])
    rate = adaptation_rhs(obs.gamma, omega, e_aug, theta_hat, obs.theta_star)
    out = np.empty(obs.layout.size)
    out[obs.layout["x_hat"]] = A_r @ p["x_hat"] + m.phi0(y_r) + m.b * float(phibar @ theta_hat) + k_r * e
    out[obs.layout["theta_hat"]] = rate
    if obs.filters == "general":
        G = A_r - np.outer(k_r, m.c)
        out[obs.layout["Omega"]] = omega_filter_derivative(Omega, G, m.b, phibar).ravel()
        out[obs.layout["eta"]] = eta_filter_derivative(p["eta"], G, Omega, rate)
    else:
        Gp = obs.printed_filter_matrix(y_r)
        out[obs.layout["Omega"]] = (Gp @ Omega).ravel()
        out[obs.layout["eta"]] = eta_filter_derivative(p["eta"], Gp, Omega, theta_hat)
    return out
