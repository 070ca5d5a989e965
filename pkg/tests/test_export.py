"""Device-program export: unit conversion, layout and constraint refusal."""

import json

import numpy as np
import pytest

from rydnet.engine import merged_breakpoints
from rydnet.export import (AnalogProgram, ProgramValidationError,
                           export_program, program_from_spec, program_to_dict,
                           validate_program)
from rydnet.hamiltonian import assemble
from rydnet.pulse import (ChannelLimits, PulseSchedule, breakpoints_for_holds,
                          sample)
from rydnet.training import realize


def test_program_from_spec_collects_series(tiny_params, tiny_dataset):
    spec = realize(tiny_params, tiny_dataset.pulse[0], tiny_dataset.couplings[0])
    program = program_from_spec(spec)
    np.testing.assert_array_equal(program.times, merged_breakpoints(spec))
    np.testing.assert_allclose(program.rabi_values, sample(spec.rabi, program.times))
    np.testing.assert_allclose(program.detuning_values,
                               sample(spec.detuning, program.times))
    np.testing.assert_allclose(program.local_values,
                               sample(spec.local_detuning, program.times))
    np.testing.assert_array_equal(program.phase_values, 0.0)
    np.testing.assert_array_equal(program.h_pattern, spec.h)
    assert program.duration == pytest.approx(spec.duration)
    assert validate_program(program) == []


def test_export_layout_and_si_units(tmp_path, tiny_params, tiny_dataset):
    spec = realize(tiny_params, tiny_dataset.pulse[0], tiny_dataset.couplings[0])
    path = tmp_path / "program.json"
    doc = export_program(spec, path)

    register = doc["setup"]["ahs_register"]
    np.testing.assert_allclose(register["sites"], spec.grid.positions * 1e-6)
    assert register["filling"] == [1, 1]

    drive = doc["hamiltonian"]["drivingFields"][0]
    program = program_from_spec(spec)
    times_s = (program.times * 1e-6).tolist()
    for field, values in (("amplitude", program.rabi_values),
                          ("detuning", program.detuning_values)):
        ts = drive[field]["time_series"]
        assert drive[field]["pattern"] == "uniform"
        assert ts["times"] == times_s
        np.testing.assert_allclose(ts["values"], values * 1e6)
    assert drive["amplitude"]["time_series"]["values"][0] == 0.0
    assert drive["amplitude"]["time_series"]["values"][-1] == 0.0
    np.testing.assert_array_equal(drive["phase"]["time_series"]["values"], 0.0)

    local = doc["hamiltonian"]["localDetuning"][0]["magnitude"]
    assert local["pattern"] == [0.35, 0.6]
    np.testing.assert_allclose(local["time_series"]["values"],
                               program.local_values * 1e6)

    text = path.read_text()
    assert text.endswith("\n")
    assert json.loads(text) == doc
    assert doc == program_to_dict(program)


def test_all_violations_are_named():
    program = AnalogProgram(
        positions=np.array([[0.0, 0.0], [2.0, 0.0]]),
        times=np.array([0.0, 1.0, 4.5]),
        rabi_values=np.array([5.0, 20.0, 1.0]),
        phase_values=np.zeros(3),
        detuning_values=np.array([200.0, 0.0, 0.0]),
        local_values=np.array([0.0, -200.0, 0.0]),
        h_pattern=np.array([-0.1, 1.5]),
    )
    v = validate_program(program)
    assert len(v) == 9
    text = "\n".join(v)
    assert "rabi value 20" in text
    assert "rabi must start at 0" in text
    assert "rabi must end at 0" in text
    assert "duration 4.5 us exceeds 4" in text
    assert "detuning value 200" in text
    assert "local_detuning value -200" in text
    assert "atoms 0 and 1 are 2 um apart" in text
    assert "h pattern entry 1 is 1.5" in text and "entry 0 is -0.1" in text


def test_refusal_writes_nothing(tmp_path, tiny_params):
    timing = tiny_params.timing
    times, _ = breakpoints_for_holds("rabi", timing, np.zeros(1))
    rabi = PulseSchedule.from_breakpoints("rabi", times, [0.0, 20.0, 20.0, 0.0])
    dt_times, dt_vals = breakpoints_for_holds("detuning", timing, np.array([1.0]))
    lt_times, lt_vals = breakpoints_for_holds("local_detuning", timing,
                                              np.array([-1.0]))
    spec = assemble(tiny_params.grid, rabi,
                    PulseSchedule.from_breakpoints("detuning", dt_times, dt_vals),
                    PulseSchedule.from_breakpoints("local_detuning", lt_times, lt_vals),
                    np.array([0.5, 0.5]))
    path = tmp_path / "refused.json"
    with pytest.raises(ProgramValidationError) as err:
        export_program(spec, path)
    assert not path.exists()
    assert all("rabi value 20" in s for s in err.value.violations)
    assert len(err.value.violations) == 2
    assert "program violates hardware constraints" in str(err.value)


def test_custom_limits_are_enforced(tmp_path, tiny_params, tiny_dataset):
    spec = realize(tiny_params, tiny_dataset.pulse[0], tiny_dataset.couplings[0])
    path = tmp_path / "tight.json"
    with pytest.raises(ProgramValidationError):
        export_program(spec, path, limits=ChannelLimits(rabi=(0.0, 1.0)))
    assert not path.exists()
