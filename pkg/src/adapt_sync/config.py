"""Scenario files: strict JSON parsing, ``--set`` overrides and built-in presets.

A scenario file is a JSON object::

    {"schema_version": 1, "name": "...", "seed": 42,
     "plant": {...}, "message": {...}, "channel": {...}, "observer": {...},
     "simulation": {...}, "metrics": {...}, "budget": 30}

Unknown keys are rejected and every error names the offending key and, when
the text is available, its line.
"""
from __future__ import annotations

import copy
import json
from dataclasses import fields
from pathlib import Path
from typing import Any

from .plant import Channel, Signal
from .transmission import ConfigError, ObserverSpec, PlantSpec, ScenarioConfig

SCHEMA_VERSION = 1

_NUM = "number"
_INT = "integer"
_BOOL = "boolean"
_STR = "string"
_VEC = "number list"
_OPT = "?"

SCHEMA: dict[str, dict[str, str]] = {
    "plant": {"kind": _STR, "sigma": _NUM, "beta": _NUM, "r": _NUM, "relative_degree": _INT,
              "theta": _NUM, "omega": _NUM, "damping_pole": _NUM, "x0": _VEC + _OPT},
    "message": {"kind": _STR, "amplitude": _NUM, "period": _NUM, "duty": _NUM, "offset": _NUM,
                "phase": _NUM, "points": "point list"},
    "channel": {"xi_max": _NUM, "distribution": _STR},
    "observer": {"scheme": _STR, "gamma": _NUM, "theta_star": "theta_star" + _OPT, "filters": _STR,
                 "k": _VEC + _OPT, "poles": _VEC + _OPT, "x_hat0": _VEC + _OPT, "theta_hat0": _VEC + _OPT,
                 "lambda": _NUM, "mu": _NUM + _OPT, "alpha_lambda": _NUM + _OPT, "strict": _BOOL,
                 "tuner_output": _STR},
    "simulation": {"horizon": _NUM, "step": _NUM, "guard": _NUM, "record": "string list?",
                   "propagator": _BOOL, "oracle": _BOOL, "compiled": _BOOL},
    "metrics": {"band": _NUM + _OPT, "pe_window": _NUM, "pe_threshold": _NUM, "discard_symbols": _INT},
}
TOP_LEVEL = {"schema_version", "name", "seed", "budget", *SCHEMA}


class LocatedConfigError(ConfigError):
    """Configuration error carrying the dotted key path and source line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None,
                 source: str | None = None):
        self.path, self.line, self.source = path, line, source
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        if path:
            where += f": {path}"
        super().__init__(f"{where}: {message}")


def _locate(text: str | None, path: str | None) -> int | None:
    # line of the last key of a dotted path, searching each key after its parent
    if not text or not path:
        return None
    pos = 0
    for key in path.split("."):
        idx = text.find(f'"{key}"', pos)
        if idx < 0:
            return None
        pos = idx
    return text.count("\n", 0, pos) + 1


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(kind: str, value) -> bool:
    optional = kind.endswith(_OPT)
    base = kind.rstrip(_OPT)
    if value is None:
        return optional
    if base == _NUM:
        return _is_num(value)
    if base == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if base == _BOOL:
        return isinstance(value, bool)
    if base == _STR:
        return isinstance(value, str)
    if base == _VEC:
        return isinstance(value, list) and all(_is_num(v) for v in value)
    if base == "string list":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    if base == "point list":
        return isinstance(value, list) and all(
            isinstance(p, list) and len(p) == 2 and all(_is_num(v) for v in p) for p in value)
    if base == "theta_star":
        return value is None or value == "auto" or _is_num(value)
    raise AssertionError(kind)


def _tuple(v):
    return None if v is None else tuple(float(x) for x in v)


def parse_config(data: dict, text: str | None = None, source: str | None = None) -> ScenarioConfig:
    """Validate a decoded scenario object and build the :class:`ScenarioConfig`."""

    def fail(msg, path=None):
        raise LocatedConfigError(msg, path, _locate(text, path), source)

    if not isinstance(data, dict):
        fail("top level must be a JSON object")
    for key in data:
        if key not in TOP_LEVEL:
            fail(f"unknown key {key!r}", key)
    if data.get("schema_version") != SCHEMA_VERSION:
        fail(f"schema_version must be {SCHEMA_VERSION}", "schema_version")
    name = data.get("name")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        fail("name must be a non-empty string without path separators", "name")
    for section, spec in SCHEMA.items():
        body = data.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            fail("must be an object", section)
        for key, value in body.items():
            path = f"{section}.{key}"
            if key not in spec:
                fail(f"unknown key {key!r}; allowed: {sorted(spec)}", path)
            if not _check_type(spec[key], value):
                fail(f"expected {spec[key].rstrip(_OPT)}, got {json.dumps(value)}", path)
    seed = data.get("seed")
    if seed is not None and not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        fail("seed must be a non-negative integer", "seed")
    budget = data.get("budget")
    if budget is not None and not (_is_num(budget) and budget > 0):
        fail("budget must be a positive number of seconds", "budget")

    def section(name_):
        return dict(data.get(name_) or {})

    try:
        plant = PlantSpec(**{k: (_tuple(v) if k == "x0" else v) for k, v in section("plant").items()})
    except ValueError as exc:
        fail(str(exc), "plant")
    message = None
    if data.get("message") is not None:
        msg = section("message")
        if "points" in msg:
            msg["points"] = tuple(tuple(p) for p in msg["points"])
        try:
            message = Signal(**msg)
        except ValueError as exc:
            fail(str(exc), "message")
    ch = section("channel")
    try:
        channel = Channel(ch.get("xi_max", 0.0), ch.get("distribution", "uniform"), seed)
    except ValueError as exc:
        fail(str(exc), "seed" if "seed" in str(exc) else "channel")
    obs = section("observer")
    if "lambda" in obs:
        obs["lam"] = obs.pop("lambda")
    for key in ("k", "poles", "x_hat0", "theta_hat0"):
        if key in obs:
            obs[key] = _tuple(obs[key])
    observer = ObserverSpec(**obs)
    sim = section("simulation")
    if sim.get("record") is not None:
        sim["record"] = tuple(sim["record"])
    metrics = section("metrics")
    try:
        return ScenarioConfig(name=name, plant=plant, observer=observer, message=message, channel=channel,
                              budget=budget, **sim, **metrics)
    except ConfigError as exc:
        fail(str(exc), _guess_path(str(exc)))
    except ValueError as exc:
        fail(str(exc))


def _guess_path(message: str) -> str | None:
    for section, spec in SCHEMA.items():
        for key in spec:
            if f"{section}.{key}" in message:
                return f"{section}.{key}"
    for key in ("horizon", "step", "guard", "band", "pe_window", "discard_symbols"):
        if message.startswith(key):
            return f"{'metrics' if key in SCHEMA['metrics'] else 'simulation'}.{key}"
    return None


def parse_override(item: str) -> tuple[list[str], Any]:
    """``"observer.gamma=0.3"`` -> ``(["observer", "gamma"], 0.3)``; values are JSON when they parse."""
    if "=" not in item:
        raise LocatedConfigError(f"override {item!r} must look like key.path=value", source="--set")
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise LocatedConfigError(f"override {item!r} has an empty key", source="--set")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for item in overrides or ():
        path, value = parse_override(item)
        node = data
        for part in path[:-1]:
            if part not in SCHEMA and node is data:
                raise LocatedConfigError(f"unknown section {part!r}", ".".join(path), source="--set")
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise LocatedConfigError("cannot descend into a non-object", ".".join(path), source="--set")
        node[path[-1]] = value
    return data


def load_config(path: str | Path, overrides=None) -> ScenarioConfig:
    """Read, override and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LocatedConfigError(f"cannot read config: {exc.strerror or exc}", source=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LocatedConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, source=str(path)) from None
    if overrides:
        data = apply_overrides(data, overrides)
        text = None
    return parse_config(data, text, str(path))


# --- presets ---------------------------------------------------------------

_LORENZ = {"kind": "lorenz", "sigma": 10.0, "beta": 8.0 / 3.0, "r": 97.0, "x0": [1.0, 1.0, 1.0]}
_SQUARE = {"kind": "square-wave", "amplitude": 0.1, "period": 40.0, "duty": 0.5, "offset": 0.0}

PRESETS: dict[str, dict] = {
    "lorenz-square-noiseless": {
        "schema_version": 1, "name": "lorenz-square-noiseless", "budget": 30,
        "plant": _LORENZ, "message": _SQUARE,
        "observer": {"scheme": "sd", "gamma": 0.45},
        "simulation": {"horizon": 200.0, "step": 1e-3},
    },
    "lorenz-square-noisy": {
        "schema_version": 1, "name": "lorenz-square-noisy", "budget": 30, "seed": 42,
        "plant": _LORENZ, "message": _SQUARE,
        "channel": {"xi_max": 0.5, "distribution": "uniform"},
        "observer": {"scheme": "sd", "gamma": 0.45, "theta_star": "auto"},
        "simulation": {"horizon": 200.0, "step": 1e-3, "propagator": True},
    },
    "lorenz-analog": {
        "schema_version": 1, "name": "lorenz-analog", "budget": 30,
        "plant": _LORENZ,
        "message": {"kind": "sine", "amplitude": 0.1, "period": 40.0, "offset": 0.0},
        "observer": {"scheme": "sd", "gamma": 0.45},
        "simulation": {"horizon": 200.0, "step": 1e-3},
    },
    "hot-synthetic-r2": {
        "schema_version": 1, "name": "hot-synthetic-r2", "budget": 30,
        "plant": {"kind": "oscillator-chain", "relative_degree": 2, "theta": 0.5, "x0": [2.0, 0.0]},
        "observer": {"scheme": "hot", "lambda": 1.0, "x_hat0": [2.0, 0.0]},
        "simulation": {"horizon": 40.0, "step": 1e-2, "oracle": True},
    },
    "hot-synthetic-r3": {
        "schema_version": 1, "name": "hot-synthetic-r3", "budget": 30,
        "plant": {"kind": "oscillator-chain", "relative_degree": 3, "theta": 0.5, "x0": [2.0, 0.0, 0.0]},
        "observer": {"scheme": "hot", "lambda": 1.0, "x_hat0": [2.0, 0.0, 0.0]},
        "simulation": {"horizon": 40.0, "step": 1e-2, "oracle": True},
    },
    "ae-synthetic": {
        "schema_version": 1, "name": "ae-synthetic", "budget": 30,
        "plant": {"kind": "oscillator-chain", "relative_degree": 2, "theta": 0.5, "x0": [2.0, 0.0]},
        "observer": {"scheme": "ae", "gamma": 5.0, "poles": [-1.0, -2.0], "x_hat0": [2.0, 0.0]},
        "simulation": {"horizon": 40.0, "step": 1e-2, "oracle": True},
    },
}


def preset_data(name: str) -> dict:
    if name not in PRESETS:
        raise LocatedConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}", source="--preset")
    return copy.deepcopy(PRESETS[name])


def load_preset(name: str, overrides=None) -> ScenarioConfig:
    data = apply_overrides(preset_data(name), overrides)
    return parse_config(data, None, f"preset:{name}")


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-JSON form of a configuration (inverse of :func:`parse_config`)."""
    def plain(obj, skip=()):
        out = {}
        for f in fields(obj):
            if f.name in skip:
                continue
            v = getattr(obj, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    obs = plain(cfg.observer)
    obs["lambda"] = obs.pop("lam")
    msg = None
    if cfg.message is not None:
        msg = plain(cfg.message)
        msg["points"] = [list(p) for p in cfg.message.points]
        if not msg["points"]:
            del msg["points"]
    out = {
        "schema_version": SCHEMA_VERSION, "name": cfg.name, "seed": cfg.channel.seed, "budget": cfg.budget,
        "plant": plain(cfg.plant), "message": msg,
        "channel": {"xi_max": cfg.channel.xi_max, "distribution": cfg.channel.distribution},
        "observer": obs,
        "simulation": {"horizon": cfg.horizon, "step": cfg.step, "guard": cfg.guard,
                       "record": list(cfg.record) if cfg.record is not None else None,
                       "propagator": cfg.propagator, "oracle": cfg.oracle, "compiled": cfg.compiled},
        "metrics": {"band": cfg.band, "pe_window": cfg.pe_window, "pe_threshold": cfg.pe_threshold,
                    "discard_symbols": cfg.discard_symbols},
    }
    return out
