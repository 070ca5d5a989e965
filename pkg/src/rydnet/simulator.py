"""Statevector simulation, measurement and noise perturbations.

States are dense complex vectors over the basis described in `hamiltonian`.
Evolution always starts from the all-ground state |0...0>.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .engine import BatchEngine, EvolutionConfig
from .grid import MIN_SPACING, AtomGrid
from .hamiltonian import HamiltonianSpec
from .pulse import ChannelLimits, PulseSchedule

__all__ = [
    "EvolutionConfig", "NoiseSpec", "evolve", "evolve_trajectory",
    "rydberg_probabilities", "predict", "hard_label", "sample_shots", "perturb",
]

_NORM_TOL = 1e-6


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian hardware-imperfection model.

    position_sigma displaces each atom coordinate (um); rabi_relative_sigma
    multiplies each rabi breakpoint by 1 + N(0, sigma^2); detuning_sigma
    shifts each detuning breakpoint additively (rad/us). All draws are
    independent and come from a generator seeded with `seed`.
    """

    position_sigma: float = 0.1
    rabi_relative_sigma: float = 0.01
    detuning_sigma: float = 0.5
    seed: int | tuple[int, ...] = 0
    max_position_retries: int = 100

    def __post_init__(self):
        if min(self.position_sigma, self.rabi_relative_sigma, self.detuning_sigma) < 0:
            raise ValueError("noise sigmas must be >= 0")
        if self.max_position_retries < 1:
            raise ValueError("max_position_retries must be >= 1")

    def scaled(self, multiplier: float) -> "NoiseSpec":
        """All sigmas multiplied by a common factor (seed kept)."""
        if multiplier < 0:
            raise ValueError("multiplier must be >= 0")
        return replace(
            self,
            position_sigma=self.position_sigma * multiplier,
            rabi_relative_sigma=self.rabi_relative_sigma * multiplier,
            detuning_sigma=self.detuning_sigma * multiplier,
        )


def evolve(spec: HamiltonianSpec, config: EvolutionConfig | None = None) -> np.ndarray:
    """Final state after the full schedule, starting from |0...0>.

    Midpoint-exponential integration; see `engine` for the step rule and the
    exact treatment of constant segments. Raises if the state norm drifts
    beyond the accepted tolerance, which would signal an integrator bug.
    """
    psi = BatchEngine.from_specs([spec], config).final_states()[0]
    drift = abs(float(np.vdot(psi, psi).real) - 1.0)
    if drift > _NORM_TOL:
        raise RuntimeError(f"state norm drifted by {drift:.2e} during evolution")
    return psi


def evolve_trajectory(spec: HamiltonianSpec,
                      config: EvolutionConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(times, states) at every literal integration step, including t=0."""
    return BatchEngine.from_specs([spec], config).trajectory()


def rydberg_probabilities(state: np.ndarray) -> np.ndarray:
    """Per-atom probability of |r> for a state over 2^n basis states."""
    state = np.asarray(state)
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim != 1 << n or n < 1:
        raise ValueError(f"state length {dim} is not a power of two >= 2")
    w = np.abs(state) ** 2
    bits = ((np.arange(dim)[None, :] >> np.arange(n)[:, None]) & 1).astype(float)
    return w @ bits.T


def predict(state: np.ndarray) -> float:
    """Soft label: mean Rydberg probability over the atoms."""
    return float(rydberg_probabilities(state).mean(axis=-1))


def hard_label(soft: float) -> int:
    """Threshold at 0.5; the tie goes to class 1."""
    return 1 if soft >= 0.5 else 0


def sample_shots(state: np.ndarray, n_shots: int,
                 seed: int | tuple[int, ...]) -> dict[str, int]:
    """Multinomial projective measurement in the computational basis.

    Returns observed bitstring counts; keys read atom (n-1) down to atom 0,
    i.e. the binary rendering of the basis index.
    """
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    state = np.asarray(state)
    n = state.shape[-1].bit_length() - 1
    p = np.abs(state) ** 2
    p = p / p.sum()
    counts = np.random.default_rng(seed).multinomial(n_shots, p)
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c > 0}


def perturb(spec: HamiltonianSpec, noise: NoiseSpec,
            limits: ChannelLimits | None = None) -> HamiltonianSpec:
    """One noisy realization of a spec.

    Draw order is fixed (positions, then rabi, then detuning, then local
    detuning) so a given seed always produces the same realization. Position
    sets violating the hardware spacing floor are redrawn a bounded number of
    times. Perturbed rabi values are re-clamped to the channel limits.
    """
    limits = limits or ChannelLimits()
    rng = np.random.default_rng(noise.seed)
    grid = spec.grid

    pos = None
    for _ in range(noise.max_position_retries):
        cand = grid.positions + rng.normal(0.0, noise.position_sigma, grid.positions.shape)
        diff = cand[:, None, :] - cand[None, :, :]
        d = np.sqrt((diff ** 2).sum(axis=-1))
        iu = np.triu_indices(grid.n_atoms, k=1)
        if grid.n_atoms < 2 or d[iu].min() >= MIN_SPACING - 1e-9:
            pos = cand
            break
    if pos is None:
        raise RuntimeError(
            f"could not draw positions above the {MIN_SPACING} um floor in "
            f"{noise.max_position_retries} attempts (position_sigma="
            f"{noise.position_sigma})"
        )
    new_grid = AtomGrid(config=grid.config, n_atoms=grid.n_atoms,
                        spacing=grid.spacing, positions=pos)

    lo, hi = limits.bounds("rabi")
    rabi_vals = spec.rabi.values * (
        1.0 + rng.normal(0.0, noise.rabi_relative_sigma, spec.rabi.values.shape)
    )
    rabi = PulseSchedule(channel="rabi", times=spec.rabi.times,
                         values=np.clip(rabi_vals, lo, hi))
    det = PulseSchedule(
        channel="detuning", times=spec.detuning.times,
        values=spec.detuning.values + rng.normal(0.0, noise.detuning_sigma,
                                                 spec.detuning.values.shape))
    loc = PulseSchedule(
        channel="local_detuning", times=spec.local_detuning.times,
        values=spec.local_detuning.values + rng.normal(0.0, noise.detuning_sigma,
                                                       spec.local_detuning.values.shape))
    return HamiltonianSpec(grid=new_grid, rabi=rabi, detuning=det,
                           local_detuning=loc, h=spec.h)
