"""Run synchronization scenarios, analyze CSV output, list and validate presets.

Exit status: 0 success, 2 invalid configuration or input, 3 integration fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import pe_metric, residual_bound
from .config import PRESETS, config_to_dict, load_config, load_preset, preset_data
from .numerics import IntegrationFault, TimeSeries
from .transmission import ConfigError, ScenarioConfig, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 2, 3

log = logging.getLogger("adapt_sync")


def _setup_logging():
    level = os.environ.get("ADAPT_SYNC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _atomic_write(path: Path, writer) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path: Path, data) -> None:
    def writer(tmp):
        with open(tmp, "w") as fh:
            json.dump(data, fh, indent=2, default=_json_default)
            fh.write("\n")
    _atomic_write(path, writer)


def _run_one(cfg: ScenarioConfig, out_dir: str) -> tuple[str, int, str]:
    # executed in worker processes too, so it reports instead of raising
    try:
        result = run_scenario(cfg)
    except IntegrationFault as exc:
        return cfg.name, EXIT_FAULT, f"integration fault: {exc}"
    except ConfigError as exc:
        return cfg.name, EXIT_CONFIG, str(exc)
    out = Path(out_dir)
    _atomic_write(out / f"{cfg.name}.csv", result.series.to_csv)
    summary = result.summary()
    summary["config"] = config_to_dict(cfg)
    write_json(out / f"{cfg.name}.summary.json", summary)
    m = result.metrics
    ber = "n/a" if m.ber is None else f"{m.ber:g}"
    return cfg.name, EXIT_OK, (f"ok in {result.elapsed:.2f} s; rmse={m.rmse_theta:.3g} ber={ber} "
                               f"final|e|={m.final_output_error:.3g}")


def _collect(args) -> list[ScenarioConfig]:
    configs = [load_config(p, args.set) for p in args.config or ()]
    configs += [load_preset(n, args.set) for n in args.preset or ()]
    if not configs:
        raise ConfigError("give at least one --config or --preset")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"scenario names must be unique: {names}")
    return configs


def cmd_run(args) -> int:
    try:
        configs = _collect(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, configs, [str(out)] * len(configs)))
    else:
        results = [_run_one(c, str(out)) for c in configs]
    status = EXIT_OK
    for name, code, msg in results:
        stream = sys.stdout if code == EXIT_OK else sys.stderr
        print(f"{name}: {msg}", file=stream)
        status = max(status, code)
    return status


def cmd_validate(args) -> int:
    try:
        configs = _collect(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for cfg in configs:
        print(f"{cfg.name}: valid")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.json:
        print(json.dumps({n: preset_data(n) for n in PRESETS}, indent=2))
        return EXIT_OK
    for name, data in PRESETS.items():
        plant, obs, sim = data["plant"], data["observer"], data["simulation"]
        if plant["kind"] == "lorenz":
            what = f"lorenz sigma={plant['sigma']:g} beta={plant['beta']:.6g} r={plant['r']:g}"
        else:
            what = f"oscillator-chain relative_degree={plant['relative_degree']} theta={plant['theta']:g}"
        gains = f"gamma={obs['gamma']:g}" if "gamma" in obs else f"lambda={obs.get('lambda', 1.0):g}"
        noise = data.get("channel", {}).get("xi_max", 0.0)
        print(f"{name:26s} {obs['scheme']:4s} {what}; {gains}; xi_max={noise:g}; "
              f"horizon={sim['horizon']:g} h={sim['step']:g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        series = TimeSeries.from_csv(args.input)
    except (OSError, ValueError, StopIteration) as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.what == "pe":
            names = args.channels.split(",") if args.channels else None
            if names:
                missing = [n for n in names if n not in series]
                if missing:
                    raise ValueError(f"unknown channels {missing}")
            report = pe_metric(series, args.window, args.stride, args.threshold, channels=names)
            out = report.to_dict()
        else:
            for needed in ("theta1", "theta_hat1", "xi", "xi_e"):
                if needed not in series:
                    raise ValueError(f"bound analysis needs channel {needed!r}")
            theta_norm = float(np.max(np.abs(series["theta1"])))
            noise_sup = float(np.max(np.abs(series["xi"] + series["xi_e"])))
            bound = residual_bound([theta_norm], args.theta_star, args.gamma, noise_sup)
            tail = series.mask_after(0.5)
            err = (series["theta1"] - series["theta_hat1"])[tail]
            out = bound.to_dict() | {"final_half_max_sq_error": float(np.max(err**2)),
                                     "inside": bool(np.all(bound.contains(err[:, None])))}
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(out, indent=2, default=_json_default))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapt-sync", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--config", action="append", metavar="FILE", help="scenario JSON file (repeatable)")
        p.add_argument("--preset", action="append", metavar="NAME", help="built-in scenario (repeatable)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                       help="override a config entry, e.g. observer.gamma=0.3")

    run = sub.add_parser("run", help="simulate scenarios and write CSV + summary JSON")
    scenario_args(run)
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="scenarios to run in parallel")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check scenario files without running them")
    scenario_args(val)
    val.set_defaults(func=cmd_validate)

    pre = sub.add_parser("presets", help="list built-in scenarios")
    pre.add_argument("--json", action="store_true", help="print the full preset definitions")
    pre.set_defaults(func=cmd_presets)

    ana = sub.add_parser("analyze", help="analyze a recorded CSV")
    ana_sub = ana.add_subparsers(dest="what", required=True)
    pe = ana_sub.add_parser("pe", help="persistent-excitation level of recorded channels")
    pe.add_argument("--input", required=True)
    pe.add_argument("--window", type=float, required=True, help="window length T")
    pe.add_argument("--stride", type=float, default=None)
    pe.add_argument("--threshold", type=float, default=1e-6)
    pe.add_argument("--channels", default=None, help="comma-separated channel names (default: all)")
    bd = ana_sub.add_parser("bound", help="residual-set bound of a robust noisy run")
    bd.add_argument("--input", required=True)
    bd.add_argument("--theta-star", type=float, required=True)
    bd.add_argument("--gamma", type=float, required=True)
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
