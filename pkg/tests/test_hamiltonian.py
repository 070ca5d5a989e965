"""Dense Hamiltonian assembly, basis conventions and norm bounds."""

import numpy as np
import pytest

from rydnet.grid import build_grid, interaction_matrix
from rydnet.hamiltonian import MAX_ATOMS, HamiltonianSpec, assemble, evaluate
from rydnet.pulse import (PulseSchedule, PulseTiming, breakpoints_for_holds,
                          build_schedule, sample)

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
NUM = np.array([[0.0, 0.0], [0.0, 1.0]])
I2 = np.eye(2)


def _embed(n, i, op):
    """Single-atom operator on atom i; atom 0 occupies the least significant bit."""
    out = np.array([[1.0]])
    for j in reversed(range(n)):
        out = np.kron(out, op if j == i else I2)
    return out


def _reference_h(grid, omega, delta, local, h):
    """Independent sum-of-Kronecker-products construction."""
    n = grid.n_atoms
    v = interaction_matrix(grid)
    dim = 1 << n
    ham = np.zeros((dim, dim), dtype=complex)
    for i in range(n):
        ham += 0.5 * omega * _embed(n, i, SX)
        ham -= (delta + local * h[i]) * _embed(n, i, NUM)
    for i in range(n):
        for j in range(i + 1, n):
            ham += v[i, j] * (_embed(n, i, NUM) @ _embed(n, j, NUM))
    return ham


def _constant_spec(grid, h, rabi=2.0, det=1.0, loc=0.5, n_intervals=2):
    timing = PulseTiming(n_intervals=n_intervals)
    chans = []
    for channel, value in (("rabi", rabi), ("detuning", det), ("local_detuning", loc)):
        t, v = breakpoints_for_holds(channel, timing, np.full(n_intervals, value))
        chans.append(PulseSchedule.from_breakpoints(channel, t, v))
    return assemble(grid, chans[0], chans[1], chans[2], h)


def test_single_atom_matrix():
    spec = _constant_spec(build_grid("chain", 1, 5.0), [0.5])
    ham = spec.from_values(omega=2.0, delta=3.0, local=4.0)
    # |g> at index 0; |r> picks up -Delta - delta*h with no interaction
    expected = np.array([[0.0, 1.0], [1.0, -5.0]], dtype=complex)
    np.testing.assert_allclose(ham, expected, atol=1e-15)


def test_two_atom_matrix_oracle():
    grid = build_grid("chain", 2, 9.0)
    spec = _constant_spec(grid, [1.0, 0.25])
    ham = spec.from_values(omega=3.0, delta=2.0, local=1.5)
    v = 10.199516282429766  # C6 / 9**6
    expected = np.array([
        [0.0, 1.5, 1.5, 0.0],
        [1.5, -3.5, 0.0, 1.5],
        [1.5, 0.0, -2.375, 1.5],
        [0.0, 1.5, 1.5, -5.875 + v],
    ], dtype=complex)
    np.testing.assert_allclose(ham, expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("config,n,spacing", [
    ("chain", 3, 8.0),
    ("square", 4, 12.0),
    ("ring", 5, 10.0),
])
def test_matches_kron_construction(config, n, spacing):
    grid = build_grid(config, n, spacing)
    rng = np.random.default_rng(17)
    h = rng.uniform(0.0, 1.0, n)
    spec = _constant_spec(grid, h)
    for omega, delta, local in [(0.0, 0.0, 0.0), (15.8, -125.0, 60.0), (4.2, 7.7, -3.3)]:
        got = spec.from_values(omega, delta, local)
        want = _reference_h(grid, omega, delta, local, h)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(got, got.conj().T, atol=1e-12)


def test_evaluate_samples_all_channels():
    grid = build_grid("chain", 2, 10.0)
    timing = PulseTiming(n_intervals=2)
    rabi = build_schedule("rabi", [[0.0, 3.0], [0.0, 5.0]], 1.0, timing)
    det = build_schedule("detuning", [[1.0, 0.0], [2.0, 1.0]], 4.0, timing)
    loc = build_schedule("local_detuning", [[0.0, -2.0], [0.0, 6.0]], 1.0, timing)
    spec = assemble(grid, rabi, det, loc, [0.3, 0.9])
    for t in (0.0, 0.02, 0.1, 0.225, 0.3, spec.duration):
        want = spec.from_values(sample(rabi, t), sample(det, t), sample(loc, t))
        np.testing.assert_allclose(evaluate(spec, t), want, atol=1e-15)


def test_local_term_follows_bit_order():
    # h = [1, 0]: only basis states with atom 0 excited (odd indices) shift
    spec = _constant_spec(build_grid("chain", 2, 12.0), [1.0, 0.0])
    diag = spec.diagonal_from_values(delta=0.0, local=1.0) - spec.diagonal_from_values(0.0, 0.0)
    np.testing.assert_allclose(diag, [0.0, -1.0, 0.0, -1.0], atol=1e-15)


def test_occupations_layout():
    spec = _constant_spec(build_grid("chain", 3, 7.0), [0.0, 0.5, 1.0])
    occ = spec.occupations()
    assert occ.shape == (3, 8)
    for i in range(3):
        for b in range(8):
            assert occ[i, b] == ((b >> i) & 1)


def test_diagonal_matches_dense():
    spec = _constant_spec(build_grid("square", 4, 11.0), [0.2, 0.4, 0.6, 0.8])
    ham = spec.from_values(omega=6.0, delta=-3.0, local=2.0)
    np.testing.assert_allclose(
        np.diag(ham).real, spec.diagonal_from_values(-3.0, 2.0), atol=1e-12
    )
    # the drive never touches the diagonal
    np.testing.assert_allclose(
        np.diag(spec.from_values(9.0, -3.0, 2.0)), np.diag(ham), atol=1e-12
    )


def test_norm_bound_dominates_spectral_norm():
    grid = build_grid("square", 4, 9.0)
    rng = np.random.default_rng(3)
    h = rng.uniform(0.0, 1.0, 4)
    spec = _constant_spec(grid, h)
    for _ in range(25):
        om = rng.uniform(0.0, 15.8)
        de = rng.uniform(-125.0, 125.0)
        lo = rng.uniform(-125.0, 125.0)
        bound = spec.norm_bound(om, abs(de), abs(lo))
        actual = np.linalg.norm(spec.from_values(om, de, lo), 2)
        assert actual <= bound + 1e-9


def test_properties():
    spec = _constant_spec(build_grid("chain", 3, 6.0), [0.0, 0.0, 0.0], n_intervals=2)
    assert spec.n_atoms == 3
    assert spec.dim == 8
    assert spec.duration == pytest.approx(0.45)


def test_atom_cap():
    grid = build_grid("chain", MAX_ATOMS + 1, 5.0)
    with pytest.raises(ValueError, match="cap"):
        _constant_spec(grid, np.zeros(MAX_ATOMS + 1))


def test_h_validation():
    grid = build_grid("chain", 2, 8.0)
    with pytest.raises(ValueError, match="shape"):
        _constant_spec(grid, [0.5])
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        _constant_spec(grid, [0.5, 1.2])
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        _constant_spec(grid, [-0.1, 0.5])


def test_duration_mismatch_rejected():
    grid = build_grid("chain", 2, 8.0)
    t2 = PulseTiming(n_intervals=2)
    t3 = PulseTiming(n_intervals=3)
    rabi = build_schedule("rabi", [[0.0, 1.0]] * 2, 1.0, t2)
    det = build_schedule("detuning", [[0.0, 1.0]] * 3, 1.0, t3)
    loc = build_schedule("local_detuning", [[0.0, 1.0]] * 2, 1.0, t2)
    with pytest.raises(ValueError, match="durations differ"):
        assemble(grid, rabi, det, loc, [0.0, 0.0])


def test_channel_slot_order_enforced():
    grid = build_grid("chain", 2, 8.0)
    timing = PulseTiming(n_intervals=1)
    rabi = build_schedule("rabi", [[0.0, 1.0]], 1.0, timing)
    det = build_schedule("detuning", [[0.0, 1.0]], 1.0, timing)
    loc = build_schedule("local_detuning", [[0.0, 1.0]], 1.0, timing)
    with pytest.raises(ValueError, match="channel slots"):
        assemble(grid, det, rabi, loc, [0.0, 0.0])


def test_assemble_coerces_h():
    spec = _constant_spec(build_grid("chain", 2, 8.0), [0, 1])
    assert spec.h.dtype == np.float64
    assert isinstance(spec, HamiltonianSpec)
