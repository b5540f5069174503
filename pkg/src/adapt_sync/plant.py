"""Master-system models, message signals and the noisy transmission channel."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import truncnorm

from .numerics import IntegrationFault

SIGNAL_KINDS = ("constant", "square-wave", "sine", "piecewise-linear")
NOISE_DISTRIBUTIONS = ("uniform", "truncated-gaussian", "zero")


@dataclass(frozen=True)
class Signal:
    """Bounded scalar time function used as a message or a parameter trajectory.

    ``constant`` returns ``offset``.  ``square-wave`` is ``offset + amplitude``
    during the first ``duty`` fraction of each ``period`` and
    ``offset - amplitude`` otherwise.  ``sine`` is
    ``offset + amplitude * sin(2*pi*(t - phase)/period)``.  ``piecewise-linear``
    interpolates ``points`` and holds the end values.
    """

    kind: str = "constant"
    amplitude: float = 0.0
    period: float = 1.0
    duty: float = 0.5
    offset: float = 0.0
    phase: float = 0.0
    points: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")
        if self.kind in ("square-wave", "sine") and not self.period > 0:
            raise ValueError("period must be positive")
        if self.kind == "square-wave" and not 0.0 < self.duty < 1.0:
            raise ValueError("duty must lie in (0, 1)")
        if self.kind == "piecewise-linear":
            if len(self.points) < 1:
                raise ValueError("piecewise-linear signal needs at least one point")
            times = [p[0] for p in self.points]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("piecewise-linear times must be strictly increasing")
            object.__setattr__(self, "points", tuple((float(a), float(b)) for a, b in self.points))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full(t.shape, float(self.offset))
        elif self.kind == "square-wave":
            frac = np.mod(t - self.phase, self.period) / self.period
            out = np.where(frac < self.duty, self.offset + self.amplitude, self.offset - self.amplitude)
        elif self.kind == "sine":
            out = self.offset + self.amplitude * np.sin(2.0 * np.pi * (t - self.phase) / self.period)
        else:
            ts, vs = zip(*self.points)
            out = np.interp(t, ts, vs)
        return out if out.ndim else float(out)

    def transitions(self, t0: float, t_end: float) -> np.ndarray:
        """Level-change instants of a square wave inside ``(t0, t_end)``."""
        if self.kind != "square-wave":
            return np.empty(0)
        starts = []
        n0 = int(np.floor((t0 - self.phase) / self.period)) - 1
        n = n0
        while True:
            base = self.phase + n * self.period
            if base > t_end:
                break
            for edge in (base, base + self.duty * self.period):
                if t0 < edge < t_end:
                    starts.append(edge)
            n += 1
        return np.array(sorted(set(starts)))

    def symbols(self, t0: float, t_end: float) -> list[tuple[float, float]]:
        """Constant-level segments ``(start, end)`` of a square wave over the horizon."""
        edges = [t0, *self.transitions(t0, t_end), t_end]
        return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]


@dataclass(frozen=True)
class MessageParameter:
    """Plant parameter modulated by a message: ``theta(t) = offset + scale * message(t)``."""

    offset: np.ndarray
    scale: np.ndarray
    message: Signal

    def __post_init__(self):
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(self.offset, dtype=float)))
        object.__setattr__(self, "scale", np.atleast_1d(np.asarray(self.scale, dtype=float)))
        if self.offset.shape != self.scale.shape:
            raise ValueError("offset and scale must have the same shape")

    def __call__(self, t):
        v = np.asarray(self.message(t), dtype=float)
        return self.offset + self.scale * v[..., None]


@dataclass(frozen=True)
class Channel:
    """Additive bounded channel noise, deterministic in ``(seed, k)``.

    Sample ``k`` is the ``k``-th draw of a ``numpy.random.default_rng(seed)``
    stream mapped onto ``[-xi_max, xi_max]``, so any prefix of the noise
    sequence is reproducible on its own.
    """

    xi_max: float = 0.0
    distribution: str = "uniform"
    seed: int | None = None

    def __post_init__(self):
        if self.xi_max < 0:
            raise ValueError("xi_max must be non-negative")
        if self.distribution not in NOISE_DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.noisy and self.seed is None:
            raise ValueError("a seed is required for a noisy channel")

    @property
    def noisy(self) -> bool:
        return self.xi_max > 0 and self.distribution != "zero"

    def samples(self, count: int) -> np.ndarray:
        """Noise values ``xi_0 .. xi_{count-1}``."""
        if not self.noisy:
            return np.zeros(count)
        u = np.random.default_rng(self.seed).random(count)
        if self.distribution == "uniform":
            xi = self.xi_max * (2.0 * u - 1.0)
        else:
            # standard deviation xi_max/2, truncated at two standard deviations
            xi = 0.5 * self.xi_max * truncnorm.ppf(u, -2.0, 2.0)
        return np.clip(xi, -self.xi_max, self.xi_max)

    def sample(self, k: int) -> float:
        return float(self.samples(k + 1)[k])


def channel_output(channel: Channel, y: float, k: int) -> float:
    """Received signal ``y_r = y + xi_k``."""
    return y + channel.sample(k)


class PolyMap:
    """Polynomial map ``y -> sum_j coeffs[j] * y**j`` with array-valued coefficients.

    Plants built from polynomial maps are eligible for the compiled
    state-dependent observer kernel.
    """

    def __init__(self, *coeffs):
        arr = np.array([np.asarray(c, dtype=float) for c in coeffs], dtype=float)
        if arr.ndim < 1 or arr.shape[0] == 0:
            raise ValueError("PolyMap needs at least one coefficient")
        self.coeffs = arr
        self.coeffs.setflags(write=False)

    @classmethod
    def from_array(cls, coeffs) -> PolyMap:
        arr = np.asarray(coeffs, dtype=float)
        return cls(*arr)

    @classmethod
    def constant(cls, value) -> PolyMap:
        return cls(value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, y):
        if isinstance(y, float):
            out = self.coeffs[-1]
            for c in self.coeffs[-2::-1]:
                out = out * y + c
            return out if self.degree > 0 else out.copy()
        y = np.asarray(y, dtype=float)
        yb = y.reshape(y.shape + (1,) * len(self.shape))
        out = np.broadcast_to(self.coeffs[-1], y.shape + self.shape).copy()
        for c in self.coeffs[-2::-1]:
            out = out * yb + c
        return out

    def padded(self, degree: int) -> np.ndarray:
        if degree < self.degree:
            raise ValueError("cannot pad to a lower degree")
        extra = np.zeros((degree - self.degree, *self.shape))
        return np.concatenate([self.coeffs, extra], axis=0)

    def __add__(self, other: PolyMap) -> PolyMap:
        deg = max(self.degree, other.degree)
        return PolyMap.from_array(self.padded(deg) + other.padded(deg))

    def __sub__(self, other: PolyMap) -> PolyMap:
        deg = max(self.degree, other.degree)
        return PolyMap.from_array(self.padded(deg) - other.padded(deg))

    def __repr__(self):
        return f"PolyMap(degree={self.degree}, shape={self.shape})"


def as_polymap(value, shape: tuple[int, ...]) -> PolyMap | Callable:
    """Wrap constants as ``PolyMap``; leave callables untouched."""
    if isinstance(value, PolyMap) or callable(value):
        return value
    arr = np.asarray(value, dtype=float).reshape(shape)
    return PolyMap.constant(arr)


ThetaLike = np.ndarray | Callable[[float], np.ndarray] | MessageParameter


def _theta_at(theta, t):
    if callable(theta):
        return np.atleast_1d(np.asarray(theta(t), dtype=float))
    return theta


@dataclass(frozen=True)
class RegressorPlant:
    """``dx/dt = A x + phi0(y) + b phi(y)^T theta(t)``, ``y = c^T x``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    phi0: Callable
    phi: Callable
    theta: ThetaLike = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        _validate_common(self, A.shape[0])
        if A.shape != (self.n, self.n):
            raise ValueError(f"A must be {self.n}x{self.n}")

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def m(self) -> int:
        return int(np.size(self.phi(0.0)))

    def A_at(self, y):
        return self.A

    def theta_at(self, t):
        return _theta_at(self.theta, t)

    def with_theta(self, theta) -> RegressorPlant:
        return RegressorPlant(self.A, self.b, self.c, self.phi0, self.phi, theta)


@dataclass(frozen=True)
class StateDependentPlant:
    """``dx/dt = A(y) x + phi0(y) + b phi(y)^T theta(t)``, ``y = c^T x``."""

    A_of_y: Callable
    b: np.ndarray
    c: np.ndarray
    phi0: Callable
    phi: Callable
    theta: ThetaLike = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        _validate_common(self, None)
        A0 = np.asarray(self.A_of_y(0.0))
        if A0.shape != (self.n, self.n):
            raise ValueError(f"A(y) must be {self.n}x{self.n}, got {A0.shape}")

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def m(self) -> int:
        return int(np.size(self.phi(0.0)))

    def A_at(self, y):
        return self.A_of_y(y)

    def theta_at(self, t):
        return _theta_at(self.theta, t)

    def with_theta(self, theta) -> StateDependentPlant:
        return StateDependentPlant(self.A_of_y, self.b, self.c, self.phi0, self.phi, theta)


Plant = RegressorPlant | StateDependentPlant


def _validate_common(plant, n):
    b = np.asarray(plant.b, dtype=float).ravel()
    c = np.asarray(plant.c, dtype=float).ravel()
    object.__setattr__(plant, "b", b)
    object.__setattr__(plant, "c", c)
    if c.shape != b.shape:
        raise ValueError("b and c must have the same length")
    if n is not None and b.size != n:
        raise ValueError("b length does not match A")
    object.__setattr__(plant, "phi0", as_polymap(plant.phi0, (b.size,)))
    object.__setattr__(plant, "phi", as_polymap(plant.phi, (-1,)))
    if np.shape(plant.phi0(0.0)) != (b.size,):
        raise ValueError(f"phi0(y) must have length {b.size}")
    m = int(np.size(plant.phi(0.0)))
    if not callable(plant.theta):
        theta = np.atleast_1d(np.asarray(plant.theta, dtype=float))
        object.__setattr__(plant, "theta", theta)
    theta0 = _theta_at(plant.theta, 0.0)
    if theta0.shape != (m,):
        raise ValueError(f"theta must have length m={m}, got {theta0.shape}")


def plant_derivative(plant: Plant, x, t: float) -> np.ndarray:
    """Right-hand side ``A(y) x + phi0(y) + b phi(y)^T theta(t)``."""
    x = np.asarray(x, dtype=float)
    y = float(plant.c @ x)
    dx = plant.A_at(y) @ x + plant.phi0(y) + plant.b * float(np.dot(plant.phi(y), plant.theta_at(t)))
    if not np.all(np.isfinite(dx)):
        raise IntegrationFault("non-finite plant derivative", t, int(np.flatnonzero(~np.isfinite(dx))[0]))
    return dx


def reparameterize(plant: Plant, offset, scale, theta=None) -> Plant:
    """Rewrite ``theta = offset + scale * p`` so ``p`` becomes the unknown parameter.

    ``phi0`` absorbs ``b phi(y)^T offset`` and ``phi`` is scaled elementwise, so
    the returned plant has identical dynamics when driven by ``p``.
    """
    offset = np.atleast_1d(np.asarray(offset, dtype=float))
    scale = np.atleast_1d(np.asarray(scale, dtype=float))
    phi0, phi, b = plant.phi0, plant.phi, plant.b
    if isinstance(phi0, PolyMap) and isinstance(phi, PolyMap):
        new_phi0 = PolyMap.from_array(phi0.padded(max(phi0.degree, phi.degree))
                                      + np.einsum("jm,m,n->jn", phi.padded(max(phi0.degree, phi.degree)), offset, b))
        new_phi = PolyMap.from_array(phi.coeffs * scale)
    else:
        def new_phi0(y, _p0=phi0, _p=phi):
            return _p0(y) + b * float(np.dot(_p(y), offset))

        def new_phi(y, _p=phi):
            return np.asarray(_p(y)) * scale
    if theta is None:
        theta = np.zeros(scale.size)
    if isinstance(plant, RegressorPlant):
        return RegressorPlant(plant.A, b, plant.c, new_phi0, new_phi, theta)
    return StateDependentPlant(plant.A_of_y, b, plant.c, new_phi0, new_phi, theta)


def message_model(plant: Plant) -> Plant:
    """Plant rewritten in message coordinates when its parameter is a ``MessageParameter``."""
    if not isinstance(plant.theta, MessageParameter):
        return plant
    mp = plant.theta
    return reparameterize(plant, mp.offset, mp.scale, theta=MessageParameter([0.0], [1.0], mp.message))


# --- Lorenz master system --------------------------------------------------

def lorenz_A(sigma: float, beta: float) -> PolyMap:
    """``A(y)`` of the Lorenz system written in regressor form (linear in ``y``)."""
    A0 = [[-sigma, sigma, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -beta]]
    A1 = [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]
    return PolyMap(A0, A1)


def lorenz_plant(sigma: float, beta: float, theta) -> StateDependentPlant:
    """Lorenz system with unknown parameter ``theta`` multiplying ``x1`` in the second equation."""
    if not (sigma > 0 and beta > 0):
        raise ValueError("sigma and beta must be positive")
    if isinstance(theta, Signal):
        sig = theta
        theta = lambda t: np.atleast_1d(sig(t))  # noqa: E731
    return StateDependentPlant(
        A_of_y=lorenz_A(sigma, beta),
        b=np.array([0.0, 1.0, 0.0]),
        c=np.array([1.0, 0.0, 0.0]),
        phi0=PolyMap.constant(np.zeros(3)),
        phi=PolyMap([0.0], [1.0]),
        theta=theta,
    )


def lorenz_message_plant(sigma: float, beta: float, r: float, vartheta: Signal | float) -> StateDependentPlant:
    """Lorenz system carrying the message ``vartheta``: ``theta(t) = r (1 + vartheta(t))``."""
    if not isinstance(vartheta, Signal):
        vartheta = Signal("constant", offset=float(vartheta))
    return lorenz_plant(sigma, beta, MessageParameter([r], [r], vartheta))


def lorenz_gain_and_G(sigma: float, beta: float) -> tuple[np.ndarray, PolyMap]:
    """Injection gain ``k`` and ``G(y) = A(y) - k c^T`` for the Lorenz observer.

    ``G(y)`` is the sum of ``diag(-sigma, -1, -beta)`` and a skew-symmetric
    matrix, so ``V = x^T x / 2`` decreases along ``dx/dt = G(y) x``.
    """
    k = np.array([0.0, sigma, 0.0])
    c = np.array([1.0, 0.0, 0.0])
    A = lorenz_A(sigma, beta)
    G = PolyMap.from_array(A.coeffs - np.stack([np.outer(k, c), np.zeros((3, 3))]))
    return k, G


def lorenz_printed_filter_matrix(sigma: float, beta: float) -> PolyMap:
    """Filter matrix with the ``+y`` entry in row 2, column 3 (verbatim variant)."""
    G0 = [[-sigma, sigma, 0.0], [-sigma, -1.0, 0.0], [0.0, 0.0, -beta]]
    G1 = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
    return PolyMap(G0, G1)


def oscillator_chain_plant(relative_degree: int, theta: float = 0.5, omega: float = 1.0,
                           damping_pole: float = -1.0) -> RegressorPlant:
    """Integrator-chain plant with a sustained oscillation at ``omega``.

    ``x_i' = x_{i+1}``, the last row closes the loop so that, together with the
    term ``theta * y`` entering through ``b = e_n``, the characteristic
    polynomial is ``(p - damping_pole)^(n-2) (p^2 + omega^2)``.  The output
    ``y = x_1`` is a sinusoid after the damped modes decay; the transfer
    function from the regressor channel to ``y`` has relative degree ``n``.
    """
    n = int(relative_degree)
    if n < 2:
        raise ValueError("oscillator chain needs n >= 2")
    roots = [damping_pole] * (n - 2) + [1j * omega, -1j * omega]
    pc = np.real(np.poly(roots))
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -pc[1:][::-1]
    A[-1, 0] -= theta
    b = np.zeros(n)
    b[-1] = 1.0
    c = np.zeros(n)
    c[0] = 1.0
    return RegressorPlant(A, b, c, PolyMap.constant(np.zeros(n)), PolyMap([0.0], [1.0]), np.array([theta]))
