"""Schedule layout, timing budget, limits and clamping."""

import math

import numpy as np
import pytest

from rydnet.pulse import (CHANNELS, ChannelLimits, ClampWarning, PulseSchedule,
                          PulseTiming, breakpoints_for_holds, build_schedule,
                          hold_value, sample)


def test_timing_durations():
    assert PulseTiming(n_intervals=3).total_duration == pytest.approx(0.65, abs=1e-12)
    assert PulseTiming(n_intervals=19).total_duration == pytest.approx(3.85, abs=1e-12)


def test_timing_budget_enforced():
    with pytest.raises(ValueError, match="4.0"):
        PulseTiming(n_intervals=20)
    with pytest.raises(ValueError):
        PulseTiming(n_intervals=0)
    with pytest.raises(ValueError):
        PulseTiming(n_intervals=1, hold=0.0)
    with pytest.raises(ValueError):
        PulseTiming(n_intervals=1, initial_ramp=-0.01)


def test_hold_windows():
    t = PulseTiming(n_intervals=3)
    assert t.hold_window(0) == pytest.approx((0.05, 0.2))
    assert t.hold_window(1) == pytest.approx((0.25, 0.4))
    assert t.hold_window(2) == pytest.approx((0.45, 0.6))
    with pytest.raises(ValueError):
        t.hold_window(3)


def test_hold_value_oracle():
    assert hold_value(1.0, 1.0, math.pi / 2) == pytest.approx(2.5707963267948966, rel=1e-15)
    assert hold_value(0.0, -3.0, 100.0) == -3.0


def test_channel_limits():
    lim = ChannelLimits()
    assert lim.bounds("rabi") == (0.0, 15.8)
    assert lim.bounds("detuning") == (-125.0, 125.0)
    assert lim.bounds("local_detuning") == (-125.0, 125.0)
    with pytest.raises(ValueError):
        lim.bounds("phase")
    with pytest.raises(ValueError):
        ChannelLimits(rabi=(2.0, 2.0)).bounds("rabi")


def test_rabi_breakpoint_layout():
    timing = PulseTiming(n_intervals=1)
    times, values = breakpoints_for_holds("rabi", timing, [4.0])
    np.testing.assert_allclose(times, [0.0, 0.05, 0.2, 0.25], atol=1e-12)
    np.testing.assert_allclose(values, [0.0, 4.0, 4.0, 0.0], atol=1e-12)


def test_detuning_breakpoint_layout():
    timing = PulseTiming(n_intervals=2)
    times, values = breakpoints_for_holds("detuning", timing, [4.0, -1.0])
    np.testing.assert_allclose(times, [0.0, 0.05, 0.2, 0.25, 0.4, 0.45], atol=1e-12)
    # starts at the first hold value, keeps the last one through the end
    np.testing.assert_allclose(values, [4.0, 4.0, 4.0, -1.0, -1.0, -1.0], atol=1e-12)


def test_zero_ramp_drops_leading_breakpoint():
    timing = PulseTiming(n_intervals=1, initial_ramp=0.0)
    times, values = breakpoints_for_holds("rabi", timing, [4.0])
    np.testing.assert_allclose(times, [0.0, 0.15, 0.2], atol=1e-12)
    np.testing.assert_allclose(values, [4.0, 4.0, 0.0], atol=1e-12)


def test_breakpoints_linear_in_holds():
    timing = PulseTiming(n_intervals=4)
    rng = np.random.default_rng(1)
    for channel in CHANNELS:
        h1, h2 = rng.normal(size=(2, 4))
        a, b = rng.normal(size=2)
        _, v1 = breakpoints_for_holds(channel, timing, h1)
        _, v2 = breakpoints_for_holds(channel, timing, h2)
        _, v12 = breakpoints_for_holds(channel, timing, a * h1 + b * h2)
        np.testing.assert_allclose(v12, a * v1 + b * v2, atol=1e-12)


def test_build_schedule_clamps_and_warns():
    timing = PulseTiming(n_intervals=2)
    thetas = np.array([[1.0, 0.0], [1.0, 100.0]])  # second hold exceeds 15.8
    with pytest.warns(ClampWarning):
        sched = build_schedule("rabi", thetas, 4.0, timing)
    assert sched.hold_clamped == (False, True)
    assert sample(sched, 0.1) == pytest.approx(4.0)
    assert sample(sched, 0.3) == pytest.approx(15.8)
    # negative rabi holds clamp to zero
    with pytest.warns(ClampWarning):
        low = build_schedule("rabi", np.array([[0.0, -5.0], [1.0, 0.0]]), 4.0, timing)
    assert sample(low, 0.1) == 0.0


def test_build_schedule_no_warning_inside_limits():
    import warnings as w
    timing = PulseTiming(n_intervals=1)
    with w.catch_warnings():
        w.simplefilter("error")
        sched = build_schedule("detuning", np.array([[1.0, 0.5]]), 3.0, timing)
    assert sched.hold_clamped == (False,)
    assert sched.duration == pytest.approx(0.25)


def test_rabi_endpoints_always_zero():
    import warnings as w
    timing = PulseTiming(n_intervals=3)
    rng = np.random.default_rng(2)
    for _ in range(20):
        thetas = rng.uniform(-2, 2, size=(3, 2))
        with w.catch_warnings():
            w.simplefilter("ignore", ClampWarning)
            sched = build_schedule("rabi", thetas, rng.uniform(0.5, 6.5), timing)
        assert sched.values[0] == 0.0
        assert sched.values[-1] == 0.0
        assert np.all(sched.values >= 0.0)
        assert np.all(sched.values <= 15.8)


def test_sample_interpolation_and_domain():
    sched = PulseSchedule.from_breakpoints("detuning", [0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
    assert sample(sched, 0.5) == pytest.approx(1.0)
    assert sample(sched, 1.5) == pytest.approx(1.0)
    np.testing.assert_allclose(sample(sched, [0.0, 1.0, 2.0]), [0.0, 2.0, 0.0])
    with pytest.raises(ValueError):
        sample(sched, 2.1)
    with pytest.raises(ValueError):
        sample(sched, -0.1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        PulseSchedule.from_breakpoints("rabi", [0.5, 1.0], [0.0, 0.0])  # not at 0
    with pytest.raises(ValueError):
        PulseSchedule.from_breakpoints("rabi", [0.0, 0.0], [0.0, 1.0])  # not increasing
    with pytest.raises(ValueError):
        PulseSchedule.from_breakpoints("rabi", [0.0, 1.0], [0.0, np.nan])
    with pytest.raises(ValueError):
        PulseSchedule.from_breakpoints("laser", [0.0, 1.0], [0.0, 1.0])


def test_build_schedule_rejects_bad_thetas():
    timing = PulseTiming(n_intervals=2)
    with pytest.raises(ValueError):
        build_schedule("rabi", np.ones((3, 2)), 1.0, timing)
