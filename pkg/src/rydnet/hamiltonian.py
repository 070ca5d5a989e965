"""Dense Hamiltonian assembly for globally driven Rydberg arrays.

Basis convention: computational index b labels the product state whose i-th
bit (least significant bit = atom 0) is 1 when atom i is in the Rydberg
state |r> and 0 for the ground state |g>. With hbar = 1 the Hamiltonian is

    H(t) = Omega(t)/2 * sum_i (|g><r|_i + |r><g|_i)
         - Delta(t)   * sum_i n_i
         - delta(t)   * sum_i h_i n_i
         + sum_{i<j} V_ij n_i n_j

with the drive phase fixed to zero, n_i = |r><r|_i, per-atom weights
h_i in [0, 1], and V_ij from grid.interaction_matrix. Energies are rad/us.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import AtomGrid, interaction_matrix
from .pulse import PulseSchedule, sample

# Dense-statevector cap; 2^12 x 2^12 complex matrices are the practical limit.
MAX_ATOMS = 12

_T_TOL = 1e-9


@dataclass(frozen=True)
class HamiltonianSpec:
    """A grid, three channel schedules and local weights, ready to evaluate.

    Operator pieces that do not depend on time are precomputed once:
    the symmetric bit-flip matrix of the drive, the Rydberg-count diagonal,
    the h-weighted count diagonal and the interaction diagonal.
    """

    grid: AtomGrid
    rabi: PulseSchedule
    detuning: PulseSchedule
    local_detuning: PulseSchedule
    h: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.grid.n_atoms
        if n > MAX_ATOMS:
            raise ValueError(f"n_atoms={n} exceeds the dense-simulation cap {MAX_ATOMS}")
        h = np.asarray(self.h, dtype=float)
        if h.shape != (n,):
            raise ValueError(f"h must have shape ({n},), got {h.shape}")
        if np.any(h < 0.0) or np.any(h > 1.0):
            raise ValueError("local weights h must lie in [0, 1]")
        durs = {s.channel: s.duration for s in (self.rabi, self.detuning, self.local_detuning)}
        if max(durs.values()) - min(durs.values()) > _T_TOL:
            raise ValueError(f"channel durations differ: {durs}")
        if (self.rabi.channel, self.detuning.channel, self.local_detuning.channel) != (
            "rabi", "detuning", "local_detuning"
        ):
            raise ValueError("schedules passed in the wrong channel slots")
        object.__setattr__(self, "h", h)

        dim = 1 << n
        bits = ((np.arange(dim)[None, :] >> np.arange(n)[:, None]) & 1).astype(float)
        xtot = np.zeros((dim, dim))
        rows = np.arange(dim)
        for i in range(n):
            xtot[rows, rows ^ (1 << i)] = 1.0
        vmat = interaction_matrix(self.grid)
        iu = np.triu_indices(n, k=1)
        vdiag = np.einsum("p,pb->b", vmat[iu], bits[iu[0]] * bits[iu[1]]) if n >= 2 \
            else np.zeros(dim)
        object.__setattr__(self, "_bits", bits)
        object.__setattr__(self, "_xtotal", xtot)
        object.__setattr__(self, "_popcount", bits.sum(axis=0))
        object.__setattr__(self, "_hdiag", h @ bits)
        object.__setattr__(self, "_vdiag", vdiag)
        object.__setattr__(self, "_vsum", float(vmat[iu].sum()) if n >= 2 else 0.0)

    @property
    def n_atoms(self) -> int:
        return self.grid.n_atoms

    @property
    def dim(self) -> int:
        return 1 << self.grid.n_atoms

    @property
    def duration(self) -> float:
        return self.rabi.duration

    def occupations(self) -> np.ndarray:
        """(n_atoms, dim) 0/1 array; row i marks basis states with atom i excited."""
        return self._bits

    def from_values(self, omega: float, delta: float, local: float) -> np.ndarray:
        """Dense H for explicit channel values (rad/us)."""
        hmat = (0.5 * omega) * self._xtotal + 0j
        np.fill_diagonal(
            hmat,
            -delta * self._popcount - local * self._hdiag + self._vdiag,
        )
        return hmat

    def diagonal_from_values(self, delta: float, local: float) -> np.ndarray:
        return -delta * self._popcount - local * self._hdiag + self._vdiag

    def norm_bound(self, omega_max: float, delta_max: float, local_max: float) -> float:
        """Upper bound on the spectral norm for channel magnitudes <= the given values.

        Triangle inequality: the drive contributes at most omega/2 * n (the
        bit-flip matrix has norm n) and the diagonal at most its max modulus.
        """
        n = self.grid.n_atoms
        return (
            0.5 * abs(omega_max) * n
            + abs(delta_max) * n
            + abs(local_max) * float(self.h.sum())
            + self._vsum
        )


def assemble(grid: AtomGrid, rabi: PulseSchedule, detuning: PulseSchedule,
             local_detuning: PulseSchedule, h) -> HamiltonianSpec:
    """Bundle grid, schedules and local weights after validating consistency."""
    return HamiltonianSpec(grid=grid, rabi=rabi, detuning=detuning,
                           local_detuning=local_detuning, h=np.asarray(h, float))


def evaluate(spec: HamiltonianSpec, t: float) -> np.ndarray:
    """Dense Hermitian H(t) at a single time, complex128 of shape (2^n, 2^n)."""
    return spec.from_values(
        sample(spec.rabi, t), sample(spec.detuning, t), sample(spec.local_detuning, t)
    )
