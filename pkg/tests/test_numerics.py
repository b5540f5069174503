import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adapt_sync.numerics import (IntegrationFault, OdeSystem, StateLayout, TimeSeries, rk4_step, simulate,
                                 step_count)

from conftest import lorenz_rhs


def test_rk4_zero_dynamics():
    sys = OdeSystem(1, lambda t, x: np.zeros(1))
    assert rk4_step(sys, 0.0, np.array([3.0]), 0.1)[0] == 3.0


@pytest.mark.parametrize("rate, h, tol", [(1.0, 0.1, 3e-7), (-2.0, 0.05, 1e-7)])
def test_rk4_exponential(rate, h, tol):
    sys = OdeSystem(1, lambda t, x: rate * x)
    assert abs(rk4_step(sys, 0.0, np.array([1.0]), h)[0] - math.exp(rate * h)) <= tol


def test_rk4_rejects_bad_step_and_shape():
    sys = OdeSystem(2, lambda t, x: x)
    with pytest.raises(ValueError):
        rk4_step(sys, 0.0, np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        rk4_step(sys, 0.0, np.zeros(3), 0.1)


def test_rk4_nonfinite_stage_reports_time_and_channel():
    sys = OdeSystem(2, lambda t, x: np.array([0.0, np.nan]))
    with pytest.raises(IntegrationFault) as info:
        rk4_step(sys, 1.5, np.zeros(2), 0.1)
    assert info.value.t == 1.5 and info.value.channel == 1


def test_harmonic_oscillator_energy():
    sys = OdeSystem(2, lambda t, x: np.array([x[1], -x[0]]))
    ts = simulate(sys, [1.0, 0.0], 0.0, 2 * np.pi, 1e-3)
    energy = ts["x0"] ** 2 + ts["x1"] ** 2
    assert np.max(np.abs(energy - 1.0)) <= 1e-6


def test_zero_dynamics_constant_channels():
    sys = OdeSystem(2, lambda t, x: np.zeros(2))
    ts = simulate(sys, [1.0, 2.0], 0.0, 3.0, 0.1)
    assert np.all(ts["x0"] == 1.0) and np.all(ts["x1"] == 2.0)


def test_lorenz_reference_run_bounded():
    sys = OdeSystem(3, lorenz_rhs())
    ts = simulate(sys, [1.0, 1.0, 1.0], 0.0, 50.0, 1e-3, guard=1e3)
    assert max(np.max(np.abs(ts[n])) for n in ts.names) < 1e3


def test_guard_trips_with_time():
    sys = OdeSystem(1, lambda t, x: x)
    with pytest.raises(IntegrationFault) as info:
        simulate(sys, [1.0], 0.0, 10.0, 0.01, guard=100.0)
    assert 4.5 < info.value.t < 4.7   # e^t crosses 100 at t = 4.605


def test_order_ratio_on_smooth_system():
    sys = OdeSystem(2, lambda t, x: np.array([x[1], -np.sin(x[0])]))

    def end(h):
        ts = simulate(sys, [1.0, 0.0], 0.0, 2.0, h)
        return np.array([ts["x0"][-1], ts["x1"][-1]])

    ref = end(1e-4)
    ratio = np.linalg.norm(end(0.02) - ref) / np.linalg.norm(end(0.01) - ref)
    assert 10.0 <= ratio <= 22.0


def test_determinism_bit_identical():
    sys = OdeSystem(3, lorenz_rhs())
    a = simulate(sys, [1.0, 2.0, 3.0], 0.0, 2.0, 1e-3)
    b = simulate(sys, [1.0, 2.0, 3.0], 0.0, 2.0, 1e-3)
    assert all(np.array_equal(a[n], b[n]) for n in a.names)


def test_held_value_constant_within_step():
    seen = []

    def f(t, x, u):
        seen.append(u)
        return np.zeros(1)

    simulate(OdeSystem(1, f, held=lambda k: float(k)), [0.0], 0.0, 0.3, 0.1)
    assert seen == [0.0] * 4 + [1.0] * 4 + [2.0] * 4


def test_step_count_tolerates_rounding():
    assert step_count(0.0, 100.0, 1e-3) == 100000
    assert step_count(0.0, 0.3, 0.1) == 3
    with pytest.raises(ValueError):
        step_count(1.0, 1.0, 0.1)


def test_timeseries_rejects_ragged_and_irregular():
    with pytest.raises(ValueError):
        TimeSeries(np.arange(3.0), {"a": np.zeros(2)})
    with pytest.raises(ValueError):
        TimeSeries(np.array([0.0, 1.0, 3.0]), {})


@given(values=st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=2, max_size=30),
       h=st.floats(1e-6, 10.0))
def test_csv_round_trip_bit_exact(values, h, tmp_path_factory):
    t = h * np.arange(len(values))
    ts = TimeSeries(t, {"a": np.array(values), "b": -np.array(values)}, h)
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    ts.to_csv(path)
    back = TimeSeries.from_csv(path)
    assert back.names == ["a", "b"]
    assert np.array_equal(back.t, ts.t) and np.array_equal(back["a"], ts["a"])


def test_mask_after_fraction():
    ts = TimeSeries(np.arange(11.0), {})
    assert np.flatnonzero(ts.mask_after(0.1)).tolist() == [9, 10]


def test_state_layout_pack_split():
    lay = StateLayout([("a", 2), ("b", 3)])
    X = lay.pack(b=[1, 2, 3])
    parts = lay.split(np.vstack([X, 2 * X]))
    assert lay.size == 5 and parts["a"].shape == (2, 2)
    assert parts["b"][1].tolist() == [2, 4, 6]
    assert "b" in lay and lay.extend([("c", 1)]).size == 6
    with pytest.raises(ValueError):
        StateLayout([("a", 1), ("a", 1)])
