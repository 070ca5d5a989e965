"""Hardware program export with constraint validation.

An AnalogProgram is the device-facing view of one realized Hamiltonian:
register coordinates (um), the global driving field (amplitude, phase,
detuning breakpoint series, rad/us over us) and the shifting field (local
detuning series plus the per-atom weight pattern). Programs violating any
hardware invariant are refused with every violation named; nothing is written
in that case. The file layout mirrors the public cloud analog-Hamiltonian
program schema structurally, with SI units (meters, seconds, rad/s).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import MIN_SPACING
from .hamiltonian import HamiltonianSpec
from .pulse import MAX_DURATION, ChannelLimits

_UM_TO_M = 1e-6
_US_TO_S = 1e-6
_RAD_PER_US_TO_RAD_PER_S = 1e6


class ProgramValidationError(ValueError):
    """Raised when a program violates hardware constraints; lists all of them."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        lines = "\n  - ".join(self.violations)
        super().__init__(f"program violates hardware constraints:\n  - {lines}")


@dataclass(frozen=True)
class AnalogProgram:
    """Device program in native units (um, us, rad/us)."""

    positions: np.ndarray        # (n, 2) um
    times: np.ndarray            # (n_bp,) us, shared by all series
    rabi_values: np.ndarray      # rad/us
    phase_values: np.ndarray     # rad
    detuning_values: np.ndarray  # rad/us
    local_values: np.ndarray     # rad/us
    h_pattern: np.ndarray        # (n,) dimensionless weights

    @property
    def duration(self) -> float:
        return float(self.times[-1])


def program_from_spec(spec: HamiltonianSpec) -> AnalogProgram:
    """Collect a realized spec's series on the merged breakpoint grid."""
    from .engine import merged_breakpoints
    from .pulse import sample

    times = merged_breakpoints(spec)
    return AnalogProgram(
        positions=spec.grid.positions.copy(),
        times=times,
        rabi_values=sample(spec.rabi, times),
        phase_values=np.zeros_like(times),
        detuning_values=sample(spec.detuning, times),
        local_values=sample(spec.local_detuning, times),
        h_pattern=spec.h.copy(),
    )


def validate_program(program: AnalogProgram,
                     limits: ChannelLimits | None = None) -> list[str]:
    """All hardware-constraint violations, empty when the program is valid."""
    limits = limits or ChannelLimits()
    v: list[str] = []
    t = program.times

    lo, hi = limits.rabi
    for tk, val in zip(t, program.rabi_values):
        if not lo <= val <= hi:
            v.append(f"rabi value {val:g} rad/us at t={tk:g} us outside [{lo:g}, {hi:g}]")
    if program.rabi_values[0] != 0.0:
        v.append(f"rabi must start at 0 rad/us, got {program.rabi_values[0]:g} at t=0")
    if program.rabi_values[-1] != 0.0:
        v.append(f"rabi must end at 0 rad/us, got {program.rabi_values[-1]:g} "
                 f"at t={t[-1]:g} us")

    if program.duration > MAX_DURATION + 1e-12:
        v.append(f"duration {program.duration:g} us exceeds {MAX_DURATION:g} us")

    for name, series in (("detuning", program.detuning_values),
                         ("local_detuning", program.local_values)):
        lo, hi = limits.bounds(name)
        for tk, val in zip(t, series):
            if not lo <= val <= hi:
                v.append(f"{name} value {val:g} rad/us at t={tk:g} us "
                         f"outside [{lo:g}, {hi:g}]")

    pos = program.positions
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            d = float(np.hypot(*(pos[i] - pos[j])))
            if d < MIN_SPACING - 1e-12:
                v.append(f"atoms {i} and {j} are {d:g} um apart, below the "
                         f"{MIN_SPACING:g} um floor")

    for i, val in enumerate(program.h_pattern):
        if not 0.0 <= val <= 1.0:
            v.append(f"h pattern entry {i} is {val:g}, outside [0, 1]")
    return v


def program_to_dict(program: AnalogProgram) -> dict:
    """Public-layout document: sites in meters, times in s, values in rad/s."""
    times_s = (program.times * _US_TO_S).tolist()

    def series(values: np.ndarray, scale: float) -> dict:
        return {"times": times_s, "values": (values * scale).tolist()}

    return {
        "setup": {
            "ahs_register": {
                "sites": (program.positions * _UM_TO_M).tolist(),
                "filling": [1] * len(program.positions),
            }
        },
        "hamiltonian": {
            "drivingFields": [{
                "amplitude": {"pattern": "uniform",
                              "time_series": series(program.rabi_values,
                                                    _RAD_PER_US_TO_RAD_PER_S)},
                "phase": {"pattern": "uniform",
                          "time_series": series(program.phase_values, 1.0)},
                "detuning": {"pattern": "uniform",
                             "time_series": series(program.detuning_values,
                                                   _RAD_PER_US_TO_RAD_PER_S)},
            }],
            "localDetuning": [{
                "magnitude": {
                    "time_series": series(program.local_values,
                                          _RAD_PER_US_TO_RAD_PER_S),
                    "pattern": program.h_pattern.tolist(),
                }
            }],
        },
    }


def export_program(spec: HamiltonianSpec, path: str | Path | None = None,
                   limits: ChannelLimits | None = None) -> dict:
    """Validate and emit the program document, writing nothing on refusal."""
    program = program_from_spec(spec)
    violations = validate_program(program, limits)
    if violations:
        raise ProgramValidationError(violations)
    doc = program_to_dict(program)
    if path is not None:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc
