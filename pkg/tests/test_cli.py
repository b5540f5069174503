import json
import time

import numpy as np
import pytest

from adapt_sync.cli import main
from adapt_sync.config import PRESETS, load_preset, preset_data
from adapt_sync.numerics import TimeSeries
from adapt_sync.transmission import run_scenario


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in PRESETS:
        assert name in out
    line = next(l for l in out.splitlines() if l.startswith("lorenz-square-noiseless"))
    assert "sigma=10" in line and "beta=2.66667" in line and "r=97" in line and "gamma=0.45" in line
    assert main(["presets", "--json"]) == 0
    assert set(json.loads(capsys.readouterr().out)) == set(PRESETS)


def test_validate_every_preset(capsys):
    args = ["validate"] + [a for name in PRESETS for a in ("--preset", name)]
    assert main(args) == 0
    assert capsys.readouterr().out.count("valid") == len(PRESETS)


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert "cannot read" in capsys.readouterr().err
    assert main(["run", "--out", str(tmp_path)]) == 2


def test_gamma_zero_exits_2(tmp_path, capsys):
    code = main(["run", "--preset", "lorenz-square-noiseless", "--set", "observer.gamma=0", "--out", str(tmp_path)])
    assert code == 2
    assert "observer.gamma" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_line_anchored_error(tmp_path, capsys):
    data = preset_data("lorenz-analog")
    data["simulation"]["horizn"] = 3
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data, indent=2))
    assert main(["validate", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    line = next(i for i, l in enumerate(path.read_text().splitlines(), 1) if "horizn" in l)
    assert f"{path}:{line}: simulation.horizn" in err


def test_guard_fault_exits_3(tmp_path, capsys, compiled_kernel):
    code = main(["run", "--preset", "lorenz-analog", "--set", "simulation.guard=1", "--out", str(tmp_path)])
    assert code == 3
    assert "integration fault" in capsys.readouterr().err


def test_run_square_preset_writes_outputs(tmp_path, capsys, compiled_kernel):
    assert main(["run", "--preset", "lorenz-square-noiseless", "--out", str(tmp_path)]) == 0
    csv = tmp_path / "lorenz-square-noiseless.csv"
    header = csv.read_text().splitlines()[0]
    assert header == "t,y_r,e,e_hat,vartheta,vartheta_hat,eps1,eps2,eps3"
    summary = json.loads((tmp_path / "lorenz-square-noiseless.summary.json").read_text())
    assert summary["metrics"]["ber"] == 0.0
    assert summary["config"]["observer"]["gamma"] == 0.45
    assert summary["pe"]["is_pe"]
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]

    # analyze pe on the written file
    capsys.readouterr()
    assert main(["analyze", "pe", "--input", str(csv), "--window", "5", "--channels", "y_r"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["alpha_hat"] > 0 and report["is_pe"]
    assert main(["analyze", "pe", "--input", str(csv), "--window", "5", "--channels", "nope"]) == 2


def test_csv_round_trip_is_exact(tmp_path, compiled_kernel):
    res = run_scenario(load_preset("lorenz-square-noisy", ["simulation.horizon=1"]))
    path = tmp_path / "r.csv"
    res.full.to_csv(path)
    back = TimeSeries.from_csv(path)
    assert back.names == res.full.names
    assert np.array_equal(back.t, res.full.t)
    for name in back.names:
        assert np.array_equal(back[name], res.full[name])


def test_analyze_bound(tmp_path, capsys, compiled_kernel):
    overrides = ["simulation.horizon=20", "simulation.record=[\"theta1\",\"theta_hat1\",\"xi\",\"xi_e\"]"]
    assert main(["run", "--preset", "lorenz-square-noisy", "--out", str(tmp_path)] +
                [a for o in overrides for a in ("--set", o)]) == 0
    capsys.readouterr()
    csv = tmp_path / "lorenz-square-noisy.csv"
    assert main(["analyze", "bound", "--input", str(csv), "--theta-star", "0.11", "--gamma", "0.45"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bound"] >= (0.1 + 0.22) ** 2 and out["inside"]
    assert main(["analyze", "bound", "--input", str(tmp_path / "missing.csv"),
                 "--theta-star", "0.1", "--gamma", "1"]) == 2


def test_parallel_jobs(tmp_path, capsys, compiled_kernel):
    args = ["run", "--preset", "lorenz-analog", "--preset", "ae-synthetic", "--jobs", "2",
            "--set", "simulation.horizon=5", "--out", str(tmp_path)]
    assert main(args) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["ae-synthetic.csv", "ae-synthetic.summary.json",
                     "lorenz-analog.csv", "lorenz-analog.summary.json"]


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_within_budget(name, compiled_kernel):
    cfg = load_preset(name)
    started = time.perf_counter()
    res = run_scenario(cfg)
    assert time.perf_counter() - started <= cfg.budget
    assert np.isfinite(res.metrics.rmse_theta)
