"""Atom placement geometry and van der Waals interactions.

Lengths are in micrometers, energies in rad/us (hbar = 1). The interaction
between two atoms in the Rydberg state is C6 / d**6 with d their Euclidean
distance; C6 matches the published coefficient for the 70S state used by
current neutral-atom hardware.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Van der Waals coefficient, rad/us * um^6.
C6 = 862690.0 * 2.0 * math.pi

# Hardware floor on the distance between any two trap sites, um.
MIN_SPACING = 4.0

# Slack for floating-point distance comparisons against the floor.
_FLOOR_TOL = 1e-9

GRID_CONFIGS = ("chain", "ring", "square", "triangle")


@dataclass(frozen=True)
class AtomGrid:
    """A fixed planar arrangement of atoms.

    positions has shape (n_atoms, 2); row k is the (x, y) coordinate of
    atom k in um. Atom indices are the qubit indices everywhere downstream.
    """

    config: str
    n_atoms: int
    spacing: float
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != (self.n_atoms, 2):
            raise ValueError(
                f"positions shape {pos.shape} does not match n_atoms={self.n_atoms}"
            )
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        if self.n_atoms >= 2:
            d = min_pair_distance(self)
            if d < MIN_SPACING - _FLOOR_TOL:
                raise ValueError(
                    f"minimum pairwise distance {d:.6f} um is below the "
                    f"hardware floor {MIN_SPACING} um"
                )


def build_grid(config: str, n_atoms: int, spacing: float) -> AtomGrid:
    """Place n_atoms on a named lattice with the given nearest-neighbor spacing.

    Parameters
    ----------
    config : one of "chain", "ring", "square", "triangle".
    n_atoms : number of atoms, >= 1.
    spacing : nearest-neighbor distance in um, >= 4.0 (hardware floor).

    Conventions: the chain runs along +x from the origin. The square lattice
    fills row-major with side ceil(sqrt(n)). The triangle lattice is the same
    row-major fill with odd rows shifted by spacing/2 and row pitch
    spacing*sqrt(3)/2. The ring places atoms evenly on a circle whose
    neighbor chord equals spacing; sites are then ordered row-major (by y,
    then x) like the other lattices, which makes the 4-atom ring coincide
    with the 4-atom square up to a rigid translation, atom labels included.
    """
    if config not in GRID_CONFIGS:
        raise ValueError(f"unknown grid config {config!r}; expected one of {GRID_CONFIGS}")
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    if spacing < MIN_SPACING:
        raise ValueError(
            f"spacing {spacing} um is below the hardware floor {MIN_SPACING} um"
        )

    if n_atoms == 1:
        pos = np.zeros((1, 2))
    elif config == "chain":
        pos = np.stack([spacing * np.arange(n_atoms), np.zeros(n_atoms)], axis=1)
    elif config == "square":
        side = math.isqrt(n_atoms - 1) + 1
        k = np.arange(n_atoms)
        pos = np.stack([(k % side) * spacing, (k // side) * spacing], axis=1)
    elif config == "triangle":
        side = math.isqrt(n_atoms - 1) + 1
        k = np.arange(n_atoms)
        row, col = k // side, k % side
        pos = np.stack(
            [col * spacing + (row % 2) * (spacing / 2.0),
             row * (spacing * math.sqrt(3.0) / 2.0)],
            axis=1,
        )
    elif config == "ring" and n_atoms == 4:
        # chord geometry is exact here: the 4-ring IS the square, and going
        # through libm trig would smear the coincidence by an ulp
        half = spacing / 2.0
        pos = np.array([[-half, -half], [half, -half], [-half, half], [half, half]])
    else:  # ring
        radius = spacing / (2.0 * math.sin(math.pi / n_atoms))
        angles = math.pi / n_atoms + 2.0 * math.pi * np.arange(n_atoms) / n_atoms
        pos = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
        # Row-major site order; keys rounded so symmetric +-y pairs group.
        order = np.lexsort((np.round(pos[:, 0], 9), np.round(pos[:, 1], 9)))
        pos = pos[order]

    return AtomGrid(config=config, n_atoms=n_atoms, spacing=float(spacing), positions=pos)


def min_pair_distance(grid: AtomGrid) -> float:
    """Smallest distance between any two atoms, in um."""
    if grid.n_atoms < 2:
        raise ValueError("min_pair_distance needs at least 2 atoms")
    diff = grid.positions[:, None, :] - grid.positions[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=-1))
    iu = np.triu_indices(grid.n_atoms, k=1)
    return float(d[iu].min())


def interaction_matrix(grid: AtomGrid) -> np.ndarray:
    """Pairwise Rydberg interaction energies C6/d^6 in rad/us.

    Returns a symmetric (n, n) array with zero diagonal. Entry (i, j) is the
    energy penalty when atoms i and j are both in the Rydberg state.
    """
    diff = grid.positions[:, None, :] - grid.positions[None, :, :]
    d2 = (diff ** 2).sum(axis=-1)
    with np.errstate(divide="ignore"):
        v = C6 / (d2 ** 3)
    np.fill_diagonal(v, 0.0)
    if grid.n_atoms >= 2:
        iu = np.triu_indices(grid.n_atoms, k=1)
        if not np.all(np.isfinite(v[iu])):
            raise ValueError("coincident atoms give a divergent interaction")
    return v
