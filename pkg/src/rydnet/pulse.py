"""Piecewise-linear drive schedules.

Every drive channel (rabi amplitude, global detuning, local detuning) is a
piecewise-linear function of time built from M hold intervals. During hold k
the channel sits at theta_scale_k * omega + theta_offset_k, where omega is
the encoded input feature for that channel; consecutive holds are joined by
linear transitions. Times are in us, channel values in rad/us.

Schedule layout with initial ramp r, hold h, transition s and M intervals:

    0 ........ r ........ r+h ...... r+h+s ...... etc ...... T = r + M*(h+s)

The rabi channel starts at 0, ramps to the first hold value over the initial
ramp, and returns to 0 inside the final transition. Detuning channels start
at their first hold value and keep their last hold value through the final
transition (hardware constrains only the rabi endpoints).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

# Defaults matched to the pulse-level constraints of current hardware.
HOLD_DURATION = 0.15          # us
TRANSITION_DURATION = 0.05    # us
INITIAL_RAMP = 0.05           # us
MAX_DURATION = 4.0            # us
RABI_MAX = 15.8               # rad/us
DETUNING_MAX = 125.0          # rad/us

CHANNELS = ("rabi", "detuning", "local_detuning")

_T_TOL = 1e-12


class ClampWarning(UserWarning):
    """A hold value fell outside the channel limits and was clamped."""


@dataclass(frozen=True)
class PulseTiming:
    """Interval structure shared by all three channels of one program."""

    n_intervals: int
    hold: float = HOLD_DURATION
    transition: float = TRANSITION_DURATION
    initial_ramp: float = INITIAL_RAMP

    def __post_init__(self):
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 1:
            raise ValueError(f"n_intervals must be a positive integer, got {self.n_intervals}")
        if self.hold <= 0 or self.transition <= 0:
            raise ValueError("hold and transition durations must be positive")
        if self.initial_ramp < 0:
            raise ValueError("initial_ramp must be >= 0")
        if self.total_duration > MAX_DURATION + _T_TOL:
            raise ValueError(
                f"total duration {self.total_duration:.3f} us exceeds the "
                f"{MAX_DURATION} us hardware budget"
            )

    @property
    def total_duration(self) -> float:
        return self.initial_ramp + self.n_intervals * (self.hold + self.transition)

    def hold_window(self, k: int) -> tuple[float, float]:
        """Start and end time of hold k (0-based)."""
        if not 0 <= k < self.n_intervals:
            raise ValueError(f"hold index {k} out of range for M={self.n_intervals}")
        start = self.initial_ramp + k * (self.hold + self.transition)
        return start, start + self.hold


@dataclass(frozen=True)
class ChannelLimits:
    """Inclusive value bounds per channel, rad/us."""

    rabi: tuple[float, float] = (0.0, RABI_MAX)
    detuning: tuple[float, float] = (-DETUNING_MAX, DETUNING_MAX)
    local_detuning: tuple[float, float] = (-DETUNING_MAX, DETUNING_MAX)

    def bounds(self, channel: str) -> tuple[float, float]:
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}; expected one of {CHANNELS}")
        lo, hi = getattr(self, channel)
        if not lo < hi:
            raise ValueError(f"empty limit range for channel {channel!r}: ({lo}, {hi})")
        return lo, hi


@dataclass(frozen=True)
class PulseSchedule:
    """Breakpoint representation of one channel; linear between breakpoints."""

    channel: str
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    # Per-hold clamp flags for schedules produced by build_schedule; empty
    # for schedules constructed directly from breakpoints.
    hold_clamped: tuple[bool, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("times and values must be matching 1-d arrays of length >= 2")
        if abs(t[0]) > _T_TOL:
            raise ValueError("schedules must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @classmethod
    def from_breakpoints(cls, channel: str, times, values) -> "PulseSchedule":
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}; expected one of {CHANNELS}")
        return cls(channel=channel, times=np.asarray(times, float),
                   values=np.asarray(values, float))


def hold_value(theta_scale: float, theta_offset: float, omega: float) -> float:
    """Channel value held during one interval: theta_scale * omega + theta_offset."""
    return theta_scale * omega + theta_offset


def breakpoints_for_holds(channel: str, timing: PulseTiming, hold_values) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoint times/values realizing the stated schedule layout.

    This is linear in hold_values, so it doubles as the parameter-sensitivity
    map: feeding d(hold)/d(theta) per interval yields d(schedule)/d(theta)
    breakpoints (the pinned rabi endpoints have zero sensitivity).
    """
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}; expected one of {CHANNELS}")
    holds = np.asarray(hold_values, dtype=float)
    if holds.shape != (timing.n_intervals,):
        raise ValueError(
            f"expected {timing.n_intervals} hold values, got shape {holds.shape}"
        )
    times: list[float] = []
    values: list[float] = []
    if timing.initial_ramp > 0:
        times.append(0.0)
        values.append(0.0 if channel == "rabi" else holds[0])
    for k in range(timing.n_intervals):
        start, end = timing.hold_window(k)
        times += [start, end]
        values += [holds[k], holds[k]]
    times.append(timing.total_duration)
    values.append(0.0 if channel == "rabi" else holds[-1])
    return np.asarray(times), np.asarray(values)


def build_schedule(channel: str, thetas, omega: float, timing: PulseTiming,
                   limits: ChannelLimits | None = None) -> PulseSchedule:
    """Realize one channel from per-interval (theta_scale, theta_offset) pairs.

    thetas has shape (M, 2). Hold values falling outside the channel limits
    are clamped and reported through a ClampWarning.
    """
    limits = limits or ChannelLimits()
    lo, hi = limits.bounds(channel)
    th = np.asarray(thetas, dtype=float)
    if th.shape != (timing.n_intervals, 2):
        raise ValueError(
            f"thetas must have shape ({timing.n_intervals}, 2), got {th.shape}"
        )
    raw = th[:, 0] * omega + th[:, 1]
    holds = np.clip(raw, lo, hi)
    clamped = holds != raw
    if np.any(clamped):
        warnings.warn(
            f"{int(clamped.sum())} of {timing.n_intervals} {channel} hold values "
            f"clamped to [{lo}, {hi}]",
            ClampWarning,
            stacklevel=2,
        )
    times, values = breakpoints_for_holds(channel, timing, holds)
    return PulseSchedule(channel=channel, times=times, values=values,
                         hold_clamped=tuple(bool(c) for c in clamped))


def sample(schedule: PulseSchedule, t) -> float | np.ndarray:
    """Evaluate the schedule at time(s) t in [0, duration]."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < -_T_TOL) or np.any(tt > schedule.duration + _T_TOL):
        raise ValueError(
            f"t outside [0, {schedule.duration}] for channel {schedule.channel!r}"
        )
    out = np.interp(np.clip(tt, 0.0, schedule.duration), schedule.times, schedule.values)
    return float(out) if np.isscalar(t) or tt.ndim == 0 else out
