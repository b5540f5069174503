"""Fixed-step Runge-Kutta integration and recorded trajectories.

Every simulation in the package is a single joint ODE integrated with the
classical fourth-order Runge-Kutta scheme at a fixed step.  Exogenous inputs
that must stay constant over a step (channel noise) are supplied through
``OdeSystem.held``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

DEFAULT_GUARD = 1e6


class IntegrationFault(RuntimeError):
    """Raised when a trajectory becomes non-finite or exceeds the blow-up guard."""

    def __init__(self, message: str, t: float, channel: int | str | None = None):
        self.t = float(t)
        self.channel = channel
        where = f" (channel {channel})" if channel is not None else ""
        super().__init__(f"{message} at t={self.t:.6g}{where}")


@dataclass(frozen=True)
class OdeSystem:
    """An ODE ``dx/dt = f(t, x[, u])`` of fixed dimension.

    When ``held`` is given, ``held(k)`` is evaluated once per step ``k`` and the
    value is passed as the third argument of ``derivative`` for all four RK4
    stages of that step.
    """

    dimension: int
    derivative: Callable[..., np.ndarray]
    held: Callable[[int], Any] | None = None

    def __post_init__(self):
        if int(self.dimension) <= 0:
            raise ValueError("dimension must be positive")

    def __call__(self, t: float, x: np.ndarray, u: Any = None) -> np.ndarray:
        if self.held is None:
            return self.derivative(t, x)
        return self.derivative(t, x, u)


def _check_stage(k: np.ndarray, t: float, dimension: int) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape != (dimension,):
        raise ValueError(f"derivative returned shape {k.shape}, expected ({dimension},)")
    if not np.all(np.isfinite(k)):
        bad = int(np.flatnonzero(~np.isfinite(k))[0])
        raise IntegrationFault("non-finite derivative", t, bad)
    return k


def rk4_step(sys: OdeSystem, t: float, x: np.ndarray, h: float, u: Any = None) -> np.ndarray:
    """Advance ``x`` from ``t`` to ``t + h`` with one classical RK4 step."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.dimension,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.dimension},)")
    n = sys.dimension
    half = 0.5 * h
    k1 = _check_stage(sys(t, x, u), t, n)
    k2 = _check_stage(sys(t + half, x + half * k1, u), t + half, n)
    k3 = _check_stage(sys(t + half, x + half * k2, u), t + half, n)
    k4 = _check_stage(sys(t + h, x + h * k3, u), t + h, n)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_count(t0: float, t_end: float, h: float) -> int:
    """Number of fixed steps covering ``[t0, t_end]`` (last step may overshoot by < h)."""
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    if not h > 0:
        raise ValueError("step h must be positive")
    return int(math.ceil((t_end - t0) / h - 1e-9))


def time_grid(t0: float, n_steps: int, h: float) -> np.ndarray:
    return t0 + h * np.arange(n_steps + 1, dtype=float)


def check_guard(states: np.ndarray, t: np.ndarray, guard: float, names: Sequence[str] | None = None):
    """Raise IntegrationFault at the first sample violating the magnitude guard."""
    bad_rows = ~np.all(np.isfinite(states) & (np.abs(states) <= guard), axis=1)
    if np.any(bad_rows):
        i = int(np.argmax(bad_rows))
        row = states[i]
        j = int(np.argmax(np.where(np.isfinite(row), np.abs(row), np.inf)))
        channel = names[j] if names is not None else j
        raise IntegrationFault(f"state magnitude exceeded guard {guard:g}", t[i], channel)


Recorder = Callable[[np.ndarray, np.ndarray, Sequence[Any] | None], Mapping[str, np.ndarray]]


def simulate(
    sys: OdeSystem,
    x0: Sequence[float],
    t0: float,
    t_end: float,
    h: float,
    record: Recorder | None = None,
    guard: float = DEFAULT_GUARD,
) -> TimeSeries:
    """Integrate ``sys`` from ``x0`` and return the sampled trajectory.

    Parameters
    ----------
    record : callable, optional
        ``record(t, states, held)`` maps the full state history (shape
        ``(N+1, dimension)``) to named channels.  By default every state
        component is recorded as ``x0, x1, ...``.
    guard : float
        Integration stops with :class:`IntegrationFault` as soon as any state
        component exceeds this magnitude.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (sys.dimension,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({sys.dimension},)")
    n_steps = step_count(t0, t_end, h)
    t = time_grid(t0, n_steps, h)
    states = np.empty((n_steps + 1, sys.dimension))
    states[0] = x
    held = [] if sys.held is not None else None
    for k in range(n_steps):
        u = None
        if held is not None:
            u = sys.held(k)
            held.append(u)
        x = rk4_step(sys, t[k], x, h, u)
        if not np.all(np.abs(x) <= guard):
            check_guard(x[None, :], t[k + 1 : k + 2], guard)
        states[k + 1] = x
    if held is not None:
        held.append(sys.held(n_steps))
    return record_series(t, states, h, record, held)


def record_series(t, states, h, record: Recorder | None = None, held=None) -> TimeSeries:
    if record is None:
        channels = {f"x{i}": states[:, i].copy() for i in range(states.shape[1])}
    else:
        channels = dict(record(t, states, held))
    return TimeSeries(t=t, channels=channels, step=h)


@dataclass
class TimeSeries:
    """Fixed-step samples of named scalar channels."""

    t: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    step: float = 0.0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t.ndim != 1 or self.t.size == 0:
            raise ValueError("t must be a non-empty 1-D array")
        if self.t.size > 1:
            dt = np.diff(self.t)
            if not np.all(dt > 0):
                raise ValueError("t must be strictly increasing")
            if self.step <= 0:
                self.step = float(dt[0])
            if not np.allclose(dt, self.step, rtol=1e-6, atol=1e-12):
                raise ValueError("samples are not on a fixed step")
        channels = {}
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=float)
            if values.shape != self.t.shape:
                raise ValueError(f"channel {name!r} has {values.shape}, expected {self.t.shape}")
            channels[name] = values
        self.channels = channels

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name == "t" or name in self.channels

    def __len__(self) -> int:
        return self.t.size

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def mask_after(self, fraction: float) -> np.ndarray:
        """Boolean mask of samples in the final ``fraction`` of the horizon."""
        start = self.t[-1] - fraction * self.duration
        return self.t >= start - 1e-12

    def select(self, names: Sequence[str]) -> TimeSeries:
        missing = [n for n in names if n not in self.channels]
        if missing:
            raise KeyError(f"unknown channels: {missing}")
        return TimeSeries(self.t, {n: self.channels[n] for n in names}, self.step)

    def to_csv(self, path: str | Path) -> None:
        """Write ``t`` and every channel with 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", *self.channels])
            columns = [self.t, *self.channels.values()]
            for row in zip(*columns):
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> TimeSeries:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        if not header or header[0] != "t":
            raise ValueError("first CSV column must be 't'")
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        t = data[:, 0]
        step = float(t[1] - t[0]) if t.size > 1 else 0.0
        return cls(t, {name: data[:, i] for i, name in enumerate(header) if i > 0}, step)


class StateLayout:
    """Named contiguous slices of a flat joint state vector."""

    def __init__(self, parts: Sequence[tuple[str, int]]):
        self.slices: dict[str, slice] = {}
        offset = 0
        for name, size in parts:
            if name in self.slices:
                raise ValueError(f"duplicate state block {name!r}")
            self.slices[name] = slice(offset, offset + int(size))
            offset += int(size)
        self.size = offset

    def __contains__(self, name: str) -> bool:
        return name in self.slices

    def __getitem__(self, name: str) -> slice:
        return self.slices[name]

    def sizes(self) -> dict[str, int]:
        return {k: s.stop - s.start for k, s in self.slices.items()}

    def split(self, X: np.ndarray) -> dict[str, np.ndarray]:
        """Views of each block along the last axis (works for histories too)."""
        return {k: X[..., s] for k, s in self.slices.items()}

    def pack(self, **parts) -> np.ndarray:
        X = np.zeros(self.size)
        for name, value in parts.items():
            X[self.slices[name]] = np.ravel(value)
        return X

    def extend(self, parts: Sequence[tuple[str, int]]) -> StateLayout:
        return StateLayout([*self.sizes().items(), *parts])
