"""Scenario harness: master -> channel -> observer, with recovery metrics.

A scenario couples a master system, a message modulating its parameter, a
bounded-noise channel and one of the observer schemes.  ``run_scenario``
integrates everything as one ODE and reports how well the observer recovers
the message.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .analysis import PeReport, ResidualBound, pe_metric, place_observer_gain, residual_bound
from .numerics import DEFAULT_GUARD, TimeSeries, step_count
from .observers import FILTER_MODES, TUNER_OUTPUTS, AeObserver, HotObserver, SdObserver
from .plant import (Channel, PolyMap, RegressorPlant, Signal, StateDependentPlant, lorenz_gain_and_G,
                    lorenz_message_plant, lorenz_printed_filter_matrix, message_model, oscillator_chain_plant)
from .simulation import build_ae_system, build_hot_system, build_sd_system, run_sd_compiled, \
    sd_compiled_eligible

log = logging.getLogger(__name__)

PLANT_KINDS = ("lorenz", "oscillator-chain")
SCHEMES = ("sd", "ae", "hot")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario description."""


@dataclass(frozen=True)
class PlantSpec:
    kind: str = "lorenz"
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    r: float = 97.0
    relative_degree: int = 2
    theta: float = 0.5
    omega: float = 1.0
    damping_pole: float = -1.0
    x0: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ObserverSpec:
    scheme: str = "sd"
    gamma: float = 0.45
    theta_star: float | str | None = None
    filters: str = "general"
    k: tuple[float, ...] | None = None
    poles: tuple[float, ...] | None = None
    x_hat0: tuple[float, ...] | None = None
    theta_hat0: tuple[float, ...] | None = None
    lam: float = 1.0
    mu: float | None = None
    alpha_lambda: float | None = None
    strict: bool = True
    tuner_output: str = "direct"


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, validated description of one experiment.

    ``theta_star="auto"`` sets the dead-zone radius to 1.1 times the largest
    parameter norm over the horizon.  ``record=None`` keeps the scheme's
    default channel set.
    """

    name: str
    plant: PlantSpec = field(default_factory=PlantSpec)
    observer: ObserverSpec = field(default_factory=ObserverSpec)
    message: Signal | None = None
    channel: Channel = field(default_factory=Channel)
    horizon: float = 100.0
    step: float = 1e-3
    guard: float = DEFAULT_GUARD
    record: tuple[str, ...] | None = None
    propagator: bool = False
    oracle: bool = False
    band: float | None = None
    pe_window: float = 5.0
    pe_threshold: float = 1e-6
    discard_symbols: int = 1
    budget: float | None = None
    compiled: bool = True

    def __post_init__(self):
        validate_config(self)

    def with_overrides(self, **changes) -> ScenarioConfig:
        return replace(self, **changes)


def validate_config(cfg: ScenarioConfig) -> None:
    p, o = cfg.plant, cfg.observer
    if p.kind not in PLANT_KINDS:
        raise ConfigError(f"plant.kind must be one of {PLANT_KINDS}")
    if o.scheme not in SCHEMES:
        raise ConfigError(f"observer.scheme must be one of {SCHEMES}")
    if p.kind == "lorenz":
        if not (p.sigma > 0 and p.beta > 0):
            raise ConfigError("plant.sigma and plant.beta must be positive")
        if o.scheme != "sd":
            raise ConfigError(f"scheme {o.scheme!r} needs a constant-A plant; the Lorenz plant needs scheme 'sd'")
        if cfg.message is None:
            raise ConfigError("the Lorenz plant needs a message")
    else:
        if int(p.relative_degree) < 2:
            raise ConfigError("plant.relative_degree must be at least 2")
        if cfg.message is not None:
            raise ConfigError("the oscillator-chain plant carries a constant parameter; remove the message")
        if o.filters != "general":
            raise ConfigError("observer.filters applies only to the Lorenz plant")
    if not o.gamma > 0:
        raise ConfigError("observer.gamma must be positive")
    if o.theta_star is not None and o.theta_star != "auto" and not (
            isinstance(o.theta_star, (int, float)) and o.theta_star > 0):
        raise ConfigError("observer.theta_star must be positive, 'auto' or null")
    if o.filters not in FILTER_MODES:
        raise ConfigError(f"observer.filters must be one of {FILTER_MODES}")
    if o.tuner_output not in TUNER_OUTPUTS:
        raise ConfigError(f"observer.tuner_output must be one of {TUNER_OUTPUTS}")
    if not o.lam > 0:
        raise ConfigError("observer.lambda must be positive")
    if o.mu is not None and not o.mu > 0:
        raise ConfigError("observer.mu must be positive")
    if not (cfg.horizon > 0 and cfg.step > 0):
        raise ConfigError("horizon and step must be positive")
    if cfg.step > cfg.horizon:
        raise ConfigError("step exceeds horizon")
    if not cfg.guard > 0:
        raise ConfigError("guard must be positive")
    if not cfg.pe_window > 0:
        raise ConfigError("pe_window must be positive")
    if cfg.band is not None and not cfg.band > 0:
        raise ConfigError("band must be positive")
    if cfg.discard_symbols < 0:
        raise ConfigError("discard_symbols must be non-negative")


# --- building ---------------------------------------------------------------

def build_plant(cfg: ScenarioConfig) -> RegressorPlant | StateDependentPlant:
    p = cfg.plant
    if p.kind == "lorenz":
        return lorenz_message_plant(p.sigma, p.beta, p.r, cfg.message)
    return oscillator_chain_plant(int(p.relative_degree), p.theta, p.omega, p.damping_pole)


def default_x0(cfg: ScenarioConfig, n: int) -> np.ndarray:
    if cfg.plant.x0 is not None:
        return np.asarray(cfg.plant.x0, dtype=float)
    if cfg.plant.kind == "lorenz":
        return np.ones(n)
    x0 = np.zeros(n)
    x0[0] = 2.0
    return x0


def _theta_sup(model, cfg) -> float:
    from .simulation import theta_history
    t = np.linspace(0.0, cfg.horizon, 2001)
    return float(np.max(np.linalg.norm(theta_history(model, t), axis=1)))


def build_observer(cfg: ScenarioConfig, model):
    o = cfg.observer
    theta_star = o.theta_star
    if theta_star == "auto":
        theta_star = 1.1 * _theta_sup(model, cfg)
        if not theta_star > 0:
            raise ConfigError("theta_star='auto' needs a nonzero parameter")
    common = dict(x_hat0=o.x_hat0, theta_hat0=o.theta_hat0)
    if o.scheme == "sd":
        if cfg.plant.kind == "lorenz":
            k, _ = lorenz_gain_and_G(cfg.plant.sigma, cfg.plant.beta)
            printed = lorenz_printed_filter_matrix(cfg.plant.sigma, cfg.plant.beta)
        else:
            k = _chain_gain(model, o, default=[-(i + 1.0) for i in range(model.n)])
            printed = None
        if o.k is not None:
            k = np.asarray(o.k, dtype=float)
        return SdObserver(model, k, o.gamma, theta_star, o.filters, printed, **common)
    if o.scheme == "ae":
        k = _chain_gain(model, o, default=[-(i + 1.0) for i in range(model.n)])
        return AeObserver(model, k, o.gamma, theta_star, **common)
    if theta_star is not None:
        raise ConfigError("the high-order-tuner scheme has no dead-zone option")
    k = _chain_gain(model, o, default=[-1.0] * model.n)
    return HotObserver(model, k, o.lam, o.mu, o.alpha_lambda, o.strict, o.tuner_output, **common)


def _chain_gain(model, o: ObserverSpec, default):
    if o.k is not None:
        return np.asarray(o.k, dtype=float)
    poles = default if o.poles is None else list(o.poles)
    A = model.A if isinstance(model, RegressorPlant) else model.A_at(0.0)
    return place_observer_gain(A, model.c, poles)


def _as_state_dependent(model: RegressorPlant) -> StateDependentPlant:
    return StateDependentPlant(PolyMap.constant(model.A), model.b, model.c, model.phi0, model.phi, model.theta)


# --- results ---------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryMetrics:
    """Message-recovery quality.

    ``settle_time`` is the longest time, over message segments, until
    ``|theta_hat - theta|`` enters the band for good; ``None`` when some
    segment never settles.  ``ber`` is ``None`` for non-square messages.
    """

    rmse_theta: float
    settle_time: float | None
    ber: float | None
    final_output_error: float
    settle_times: tuple[float | None, ...] = ()
    bits_sent: tuple[int, ...] = ()
    bits_decoded: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    series: TimeSeries
    metrics: RecoveryMetrics
    pe: PeReport
    bound: ResidualBound | None = None
    elapsed: float = 0.0
    full: TimeSeries | None = None

    def summary(self) -> dict:
        out = {
            "name": self.config.name,
            "scheme": self.config.observer.scheme,
            "horizon": self.config.horizon,
            "step": self.config.step,
            "samples": len(self.series),
            "elapsed_s": round(self.elapsed, 3),
            "metrics": self.metrics.to_dict(),
            "pe": self.pe.to_dict(),
        }
        if self.bound is not None:
            out["residual_bound"] = self.bound.to_dict()
        return out


def default_channels(cfg: ScenarioConfig, n: int, m: int) -> list[str]:
    if cfg.plant.kind == "lorenz":
        names = ["y_r", "e", "e_hat", "vartheta", "vartheta_hat"]
    else:
        names = ["y_r", "e"] + (["nu"] if cfg.observer.scheme == "hot" else ["e_hat"])
        names += [f"theta{j + 1}" for j in range(m)] + [f"theta_hat{j + 1}" for j in range(m)]
    return names + [f"eps{i + 1}" for i in range(n)]


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Integrate the scenario and compute metrics and analysis reports."""
    started = time.perf_counter()
    plant = build_plant(cfg)
    model = message_model(plant)
    if cfg.observer.scheme == "sd" and isinstance(model, RegressorPlant):
        model = _as_state_dependent(model)
    observer = build_observer(cfg, model)
    x0 = default_x0(cfg, model.n)
    n_steps = step_count(0.0, cfg.horizon, cfg.step)
    noise = cfg.channel.samples(n_steps + 1)
    robust = getattr(observer, "theta_star", None) is not None
    propagator = cfg.propagator or (cfg.channel.noisy and robust)
    builder = {"sd": build_sd_system, "ae": build_ae_system, "hot": build_hot_system}[cfg.observer.scheme]
    joint = builder(model, observer, x0, noise, propagator=propagator, oracle=cfg.oracle)
    log.info("running %s: %d steps of %g", cfg.name, n_steps, cfg.step)
    if cfg.observer.scheme == "sd" and cfg.compiled and sd_compiled_eligible(model, observer):
        full = run_sd_compiled(joint, cfg.horizon, cfg.step, guard=cfg.guard)
    else:
        full = joint.run(cfg.horizon, cfg.step, guard=cfg.guard)
    if cfg.plant.kind == "lorenz":
        full.channels["vartheta"] = full["theta1"]
        full.channels["vartheta_hat"] = full["theta_hat1"]
    names = list(cfg.record) if cfg.record is not None else default_channels(cfg, model.n, model.m)
    missing = [nm for nm in names if nm not in full.channels]
    if missing:
        raise ConfigError(f"unknown record channels {missing}; available: {sorted(full.channels)}")
    message = cfg.message if cfg.message is not None else Signal("constant", offset=float(cfg.plant.theta))
    metrics = recovery_metrics(full, message, band=cfg.band, discard=cfg.discard_symbols,
                               theta_channel="theta1", theta_hat_channel="theta_hat1")
    regressor = np.asarray(model.phi(full["y_r"]), dtype=float).reshape(len(full), model.m)
    pe = pe_metric(regressor, min(cfg.pe_window, full.duration), threshold=cfg.pe_threshold, t=full.t)
    bound = None
    if robust and cfg.channel.noisy:
        noise_sup = float(np.max(np.abs(full["xi"] + full["xi_e"])))
        bound = residual_bound([_theta_sup(model, cfg)], observer.theta_star, observer.gamma, noise_sup)
    elapsed = time.perf_counter() - started
    return ScenarioResult(cfg, full.select(names), metrics, pe, bound, elapsed, full)


# --- metrics -----------------------------------------------------------------

def _segments(message: Signal, t0: float, t_end: float) -> list[tuple[float, float]]:
    if message.kind == "square-wave":
        return message.symbols(t0, t_end)
    return [(t0, t_end)]


def settle_time(t, err, band: float, start: float, end: float) -> float | None:
    """Time after ``start`` from which ``|err| < band`` holds up to ``end``; ``None`` if never."""
    sel = (t >= start) & (t < end)
    ts, es = t[sel], np.abs(err[sel])
    if ts.size == 0 or es[-1] >= band:
        return None
    outside = np.flatnonzero(es >= band)
    if outside.size == 0:
        return 0.0
    return float(ts[outside[-1] + 1] - start)


def decode_bits(theta_hat, t, message: Signal, symbol_times) -> np.ndarray:
    """One bit per symbol: ``theta_hat`` at the symbol midpoint above the level midpoint -> 1."""
    t = np.asarray(t, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    bits = []
    for start, end in symbol_times:
        mid = 0.5 * (start + end)
        if mid < t[0] or mid > t[-1]:
            raise ValueError(f"symbol midpoint {mid:g} lies outside the series")
        bits.append(int(np.interp(mid, t, theta_hat) > message.offset))
    return np.array(bits, dtype=int)


def recovery_metrics(series: TimeSeries, message: Signal, band: float | None = None,
                     post_transient: float | None = None, discard: int = 1,
                     theta_channel: str = "vartheta", theta_hat_channel: str = "vartheta_hat") -> RecoveryMetrics:
    """Recovery quality of ``theta_hat_channel`` against ``theta_channel``.

    For square waves the RMS error uses the second half of every symbol after
    the first ``discard`` ones; otherwise the samples after ``post_transient``
    (default: half the horizon).
    """
    for name in (theta_channel, theta_hat_channel, "e"):
        if name not in series:
            raise KeyError(f"series lacks channel {name!r}")
    t = series.t
    th, th_hat = series[theta_channel], series[theta_hat_channel]
    err = th_hat - th
    if band is None:
        scale = abs(message.amplitude) if message.amplitude else abs(message.offset)
        band = 0.05 * scale if scale > 0 else 1e-3
    segments = _segments(message, t[0], t[-1])
    kept = segments[discard:] if message.kind == "square-wave" else segments
    if message.kind == "square-wave":
        mask = np.zeros(t.size, dtype=bool)
        for a, b in kept:
            mask |= (t >= 0.5 * (a + b)) & (t < b)
    else:
        start = t[0] + 0.5 * series.duration if post_transient is None else post_transient
        mask = t >= start
    rmse = float(np.sqrt(np.mean(err[mask] ** 2))) if np.any(mask) else float("nan")
    settles = tuple(settle_time(t, err, band, a, b) for a, b in kept)
    settle = None if (not settles or any(s is None for s in settles)) else max(settles)
    ber = None
    sent: tuple[int, ...] = ()
    decoded: tuple[int, ...] = ()
    if message.kind == "square-wave" and kept:
        sent_arr = decode_bits(th, t, message, kept)
        dec_arr = decode_bits(th_hat, t, message, kept)
        ber = float(np.mean(sent_arr != dec_arr))
        sent, decoded = tuple(int(b) for b in sent_arr), tuple(int(b) for b in dec_arr)
    final = float(np.max(np.abs(series["e"][series.mask_after(0.1)])))
    return RecoveryMetrics(rmse, settle, ber, final, settles, sent, decoded)
