"""Ensemble robustness reports, rank statistics and the sigma sweep."""

from dataclasses import replace

import numpy as np
import pytest
import scipy.stats

from rydnet.data import EncodedDataset
from rydnet.noise import (SWEEP_MULTIPLIERS, robustness_eval, sigma_sweep,
                          spearman_exact_test, spearman_rank)
from rydnet.simulator import NoiseSpec, evolve, perturb, predict
from rydnet.training import predict_batch, realize

ZERO_NOISE = NoiseSpec(position_sigma=0.0, rabi_relative_sigma=0.0,
                       detuning_sigma=0.0)


def test_zero_sigma_ensemble_is_bitwise_ideal(tiny_params, tiny_dataset):
    report = robustness_eval(tiny_params, tiny_dataset, ZERO_NOISE, n_ensemble=3)
    np.testing.assert_array_equal(report.noisy_mean, report.ideal_soft)
    assert np.all(report.noisy_std == 0.0)
    assert report.flip_rate == 0.0
    assert report.member_flip_rate == 0.0
    assert report.mean_abs_shift == 0.0
    assert report.accuracy_delta == 0.0
    assert not report.flipped.any()
    assert report.n_members == 3
    # the ideal column is the plain forward pass
    np.testing.assert_allclose(report.ideal_soft,
                               predict_batch(tiny_params, tiny_dataset),
                               atol=1e-12)


def test_report_internal_consistency(tiny_params, tiny_dataset):
    report = robustness_eval(tiny_params, tiny_dataset, NoiseSpec(), n_ensemble=6,
                             seed=4)
    hard_ideal = report.ideal_soft >= 0.5
    hard_noisy = report.noisy_mean >= 0.5
    np.testing.assert_array_equal(report.flipped, hard_ideal != hard_noisy)
    assert report.flip_rate == pytest.approx(report.flipped.mean())
    acc_ideal = np.mean(hard_ideal == (report.labels == 1))
    acc_noisy = np.mean(hard_noisy == (report.labels == 1))
    assert report.accuracy_delta == pytest.approx(acc_noisy - acc_ideal)
    assert np.all(report.noisy_std >= 0.0)
    assert np.all((report.noisy_mean >= 0.0) & (report.noisy_mean <= 1.0))
    # a flip requires the pair to straddle the threshold
    lo = np.minimum(report.ideal_soft, report.noisy_mean)
    hi = np.maximum(report.ideal_soft, report.noisy_mean)
    assert np.all(~report.flipped | ((lo < 0.5) & (hi >= 0.5)))


def test_members_match_direct_perturbation(tiny_params, tiny_dataset):
    # a one-member ensemble is a single perturbed forward pass with the
    # documented (seed, sample, member) split
    noise = NoiseSpec()
    report = robustness_eval(tiny_params, tiny_dataset, noise, n_ensemble=1, seed=9)
    for i in range(len(tiny_dataset)):
        spec = realize(tiny_params, tiny_dataset.pulse[i], tiny_dataset.couplings[i])
        noisy = perturb(spec, replace(noise, seed=(9, i, 0)), tiny_params.limits)
        assert report.noisy_mean[i] == pytest.approx(predict(evolve(noisy)),
                                                     abs=1e-12)


def test_robustness_determinism_and_validation(tiny_params, tiny_dataset):
    a = robustness_eval(tiny_params, tiny_dataset, NoiseSpec(), 4, seed=2)
    b = robustness_eval(tiny_params, tiny_dataset, NoiseSpec(), 4, seed=2)
    np.testing.assert_array_equal(a.noisy_mean, b.noisy_mean)
    assert a.mean_abs_shift == b.mean_abs_shift
    with pytest.raises(ValueError, match="n_ensemble"):
        robustness_eval(tiny_params, tiny_dataset, NoiseSpec(), 0)
    empty = EncodedDataset(pulse=np.zeros((0, 3)), couplings=np.zeros((0, 1)),
                           labels=np.zeros(0, dtype=int))
    with pytest.raises(ValueError, match="empty"):
        robustness_eval(tiny_params, empty, NoiseSpec(), 2)


def test_spearman_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.normal(size=12)
        y = rng.normal(size=12)
        ref = scipy.stats.spearmanr(x, y).statistic
        assert spearman_rank(x, y) == pytest.approx(ref, abs=1e-12)
    # ties get average ranks
    x = np.array([1.0, 1.0, 2.0, 3.0, 3.0, 4.0])
    y = np.array([2.0, 1.0, 1.0, 5.0, 4.0, 4.0])
    ref = scipy.stats.spearmanr(x, y).statistic
    assert spearman_rank(x, y) == pytest.approx(ref, abs=1e-12)
    assert spearman_rank([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) == 0.0


def test_spearman_exact_p_values():
    rho, p = spearman_exact_test([0.0, 0.5, 1.0, 2.0, 4.0],
                                 [0.1, 0.2, 0.3, 0.4, 0.5])
    assert rho == pytest.approx(1.0)
    assert p == pytest.approx(1.0 / 120.0)
    rho, p = spearman_exact_test([1.0, 2.0, 3.0], [3.0, 2.0, 1.0])
    assert rho == pytest.approx(-1.0)
    assert p == pytest.approx(1.0)
    with pytest.raises(ValueError, match="at least 3"):
        spearman_exact_test([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError, match="8 points"):
        spearman_exact_test(np.arange(9.0), np.arange(9.0))


def test_sigma_sweep_structure(tiny_params, tiny_dataset):
    sweep = sigma_sweep(tiny_params, tiny_dataset, multipliers=(0.0, 1.0, 3.0),
                        n_ensemble=3, seed=1)
    assert sweep.multipliers == (0.0, 1.0, 3.0)
    assert len(sweep.reports) == 3
    assert sweep.mean_abs_shifts == tuple(r.mean_abs_shift for r in sweep.reports)
    assert sweep.flip_rates == tuple(r.flip_rate for r in sweep.reports)
    # the zero point of any sweep is the bitwise-exact identity run
    assert sweep.reports[0].mean_abs_shift == 0.0
    assert sweep.reports[0].flip_rate == 0.0
    rho, p = spearman_exact_test(sweep.multipliers, sweep.mean_abs_shifts)
    assert sweep.spearman == rho and sweep.p_value == p
    assert sweep.is_monotone_trend(alpha=1.0) == (sweep.spearman > 0.0)
    with pytest.raises(ValueError, match="at least 3"):
        sigma_sweep(tiny_params, tiny_dataset, multipliers=(0.0, 1.0))


def test_sweep_default_multipliers_and_determinism(tiny_params, tiny_dataset):
    assert SWEEP_MULTIPLIERS == (0.0, 0.5, 1.0, 2.0, 4.0)
    a = sigma_sweep(tiny_params, tiny_dataset, n_ensemble=2, seed=7)
    b = sigma_sweep(tiny_params, tiny_dataset, n_ensemble=2, seed=7)
    assert a.mean_abs_shifts == b.mean_abs_shifts
    assert a.spearman == b.spearman and a.p_value == b.p_value
