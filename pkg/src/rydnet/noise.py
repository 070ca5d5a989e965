"""Robustness of trained classifiers under hardware imperfections.

Each evaluation sample is re-run under an ensemble of noisy realizations of
its Hamiltonian. Flip analysis compares hard labels of the ideal soft label
and the ensemble-mean soft label (hardware runs average many shots, so the
mean is the deployed quantity); per-member flip rates are reported too.

The ideal spec rides along in the same evolution batch as its ensemble, so
member and ideal predictions always come from the same integration plan; with
all sigmas zero the members are bitwise identical to the ideal run and both
the flip rate and the mean absolute shift are exactly zero.

Seeds split per (sample, member), so enlarging the ensemble or reordering
samples never changes the draws a given member sees. Aggregates use numpy
mean reductions (pairwise summation, deterministic for a fixed member order).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import EncodedDataset
from .engine import BatchEngine, EvolutionConfig
from .simulator import NoiseSpec, perturb
from .training import ModelParameters, realize

SWEEP_MULTIPLIERS = (0.0, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class RobustnessReport:
    """Per-sample and aggregate effects of one noise setting.

    flip rates and the accuracy delta derive from the stored per-sample
    columns; `accuracy_delta` is accuracy(noisy-mean labels) minus
    accuracy(ideal labels) against `labels`.
    """

    ideal_soft: np.ndarray     # (n,)
    noisy_mean: np.ndarray     # (n,)
    noisy_std: np.ndarray      # (n,)
    flipped: np.ndarray        # (n,) bool, ideal vs noisy-mean hard labels
    labels: np.ndarray         # (n,)
    flip_rate: float
    member_flip_rate: float
    mean_abs_shift: float
    accuracy_delta: float
    n_members: int


def _hard(soft: np.ndarray) -> np.ndarray:
    return np.asarray(soft) >= 0.5


def robustness_eval(params: ModelParameters, dataset: EncodedDataset,
                    noise: NoiseSpec, n_ensemble: int,
                    seed: int | tuple[int, ...] = 0,
                    config: EvolutionConfig | None = None) -> RobustnessReport:
    """Ensemble inference under one noise setting.

    Runs n_ensemble perturbed forward passes plus the ideal pass per sample
    and aggregates flip, shift and accuracy statistics.
    """
    if n_ensemble < 1:
        raise ValueError("n_ensemble must be >= 1")
    if len(dataset) == 0:
        raise ValueError("evaluation set is empty")
    base = (seed,) if isinstance(seed, int) else tuple(seed)
    n = len(dataset)
    ideal = np.empty(n)
    members = np.empty((n, n_ensemble))
    for i in range(n):
        spec = realize(params, dataset.pulse[i], dataset.couplings[i])
        stack = [spec] + [
            perturb(spec, replace(noise, seed=(*base, i, e)), params.limits)
            for e in range(n_ensemble)
        ]
        engine = BatchEngine.from_specs(stack, config)
        states = engine.final_states()
        # per-row reduction, not a matvec: BLAS may round SIMD-tail rows of a
        # batch differently, which would break the zero-sigma identity between
        # bitwise-equal member and ideal states
        soft = (np.abs(states) ** 2 * engine.pop).sum(axis=1) / params.n_atoms
        ideal[i] = soft[0]
        members[i] = soft[1:]

    # statistics on deviations from the ideal value: better conditioned, and
    # an identity ensemble reports exactly zero shift and spread
    dev = members - ideal[:, None]
    dev_mean = dev.mean(axis=1)
    noisy_mean = ideal + dev_mean
    noisy_std = np.sqrt(((dev - dev_mean[:, None]) ** 2).mean(axis=1))
    flipped = _hard(ideal) != _hard(noisy_mean)
    labels = dataset.labels
    acc_ideal = float(np.mean(_hard(ideal) == (labels == 1)))
    acc_noisy = float(np.mean(_hard(noisy_mean) == (labels == 1)))
    return RobustnessReport(
        ideal_soft=ideal,
        noisy_mean=noisy_mean,
        noisy_std=noisy_std,
        flipped=flipped,
        labels=labels.copy(),
        flip_rate=float(np.mean(flipped)),
        member_flip_rate=float(np.mean(_hard(members) != _hard(ideal)[:, None])),
        mean_abs_shift=float(np.mean(np.abs(dev_mean))),
        accuracy_delta=acc_noisy - acc_ideal,
        n_members=n_ensemble,
    )


# -- rank statistics ---------------------------------------------------------

def _ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties shared."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rank(x, y) -> float:
    """Spearman rho; 0.0 when either side is constant."""
    rx, ry = _ranks(np.asarray(x)), _ranks(np.asarray(y))
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def spearman_exact_test(x, y) -> tuple[float, float]:
    """(rho, one-sided exact p-value for positive association).

    The null distribution enumerates every permutation of y, so the inputs
    must be short (the default sweep has five points, 120 permutations).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("need matching 1-d arrays with at least 3 points")
    if x.size > 8:
        raise ValueError("exact permutation test limited to 8 points")
    rho = spearman_rank(x, y)
    hits = sum(
        spearman_rank(x, perm) >= rho - 1e-12
        for perm in itertools.permutations(y)
    )
    return rho, hits / float(math.factorial(x.size))


# -- sigma sweep ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    """Robustness across a common noise scale factor, with a trend test.

    The Spearman statistic and its exact one-sided p-value test positive
    association between the multiplier and the mean absolute shift.
    """

    multipliers: tuple[float, ...]
    reports: tuple[RobustnessReport, ...]
    spearman: float
    p_value: float

    @property
    def flip_rates(self) -> tuple[float, ...]:
        return tuple(r.flip_rate for r in self.reports)

    @property
    def mean_abs_shifts(self) -> tuple[float, ...]:
        return tuple(r.mean_abs_shift for r in self.reports)

    def is_monotone_trend(self, alpha: float = 0.05) -> bool:
        return self.spearman > 0.0 and self.p_value <= alpha


def sigma_sweep(params: ModelParameters, dataset: EncodedDataset,
                noise: NoiseSpec | None = None,
                multipliers: tuple[float, ...] = SWEEP_MULTIPLIERS,
                n_ensemble: int = 20, seed: int = 0,
                config: EvolutionConfig | None = None) -> SweepResult:
    """robustness_eval at each sigma multiplier, seeds split per sweep point."""
    noise = noise or NoiseSpec()
    if len(multipliers) < 3:
        raise ValueError("a sweep needs at least 3 multipliers")
    reports = tuple(
        robustness_eval(params, dataset, noise.scaled(mult), n_ensemble,
                        seed=(seed, m_idx), config=config)
        for m_idx, mult in enumerate(multipliers)
    )
    rho, p = spearman_exact_test(multipliers, [r.mean_abs_shift for r in reports])
    return SweepResult(
        multipliers=tuple(float(m) for m in multipliers),
        reports=reports, spearman=rho, p_value=p,
    )
