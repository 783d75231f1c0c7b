"""Tests for simulator.paths and simulator.estimate."""

import math

import numpy as np
import pytest

from common.constants import PATHS_PER_BLOCK, SimulationError
from common.tester import run_tests_for_function, test_module
from pricing.vol_models import HestonParams, SabrParams, m0
from simulator.estimate import McEstimate, estimate_from_samples, fold_pairs
from simulator.paths import PathBatch, SimConfig, simulate_asset_terminal, simulate_vol_paths, simulation_fingerprint

HESTON = HestonParams(sigma0=20.0, kappa=2.0, theta=400.0, nu=20.0)
SABR = SabrParams(sigma0=20.0, nu=0.5)
SMALL = SimConfig(n_paths=10_000, steps_per_year=50, seed=11)


def test_sim_config_validation():
    def build(n_paths, antithetic, steps, seed, workers):
        return SimConfig(n_paths, steps, seed, antithetic, False, workers).n_paths

    assert run_tests_for_function(
        [(10, True, 50, 1, 1), (11, True, 50, 1, 1), (11, False, 50, 1, 1), (10, True, 0, 1, 1),
         (10, True, 50, -1, 1), (10, True, 50, 2**64, 1), (10, True, 50, 1, 0)],
        [10, "error", 11, "error", "error", "error", "error"],
        build,
        "path count, grid, seed and worker checks",
    )


def test_step_count():
    cfg = SimConfig(n_paths=2, steps_per_year=252)
    assert run_tests_for_function(
        [(1.0,), (0.8,), (1.2,), (0.001,)], [252, 202, 302, 1], cfg.n_steps, "round(steps_per_year * T), at least 1"
    )


def test_batch_shapes_and_read_only():
    batch = simulate_asset_terminal(HESTON, 100.0, 1.0, SimConfig(4, 10, 3, keep_grid=True), couple_rho0=True)
    assert batch.integrated_variance.shape == (4,)
    assert batch.sigma_sq_nodes.shape == (4, 11)
    assert batch.times[0] == 0.0 and batch.times[-1] == 1.0
    assert batch.terminal_x_rho0 is not None
    with pytest.raises(ValueError):
        batch.integrated_variance[0] = 1.0
    assert simulate_vol_paths(HESTON, 1.0, SimConfig(4, 10, 3)).sigma_sq_nodes is None


def test_batch_copies_caller_arrays():
    iv = np.full(4, 400.0)
    batch = PathBatch(model=SABR, T=1.0, config=SimConfig(4, 1, 0), times=np.array([0.0, 1.0]), integrated_variance=iv)
    iv[0] = 0.0
    assert iv.flags.writeable
    assert batch.integrated_variance[0] == 400.0
    with pytest.raises(ValueError):
        batch.integrated_variance[0] = 1.0


def test_deterministic_volatility():
    batch = simulate_vol_paths(SabrParams(20.0, 0.0), 1.0, SMALL)
    assert np.allclose(batch.integrated_variance, 400.0, rtol=1e-13)
    assert batch.negative_variance_steps == 0


def test_integrated_variance_matches_variance_swap():
    for model in (HESTON, SABR):
        batch = simulate_vol_paths(model, 1.0, SMALL)
        estimate = estimate_from_samples(batch.integrated_variance, batch.antithetic)
        # 4 standard errors plus the discretisation bias of the trapezoid rule
        assert abs(estimate.value - m0(model, 1.0)) < 4 * estimate.std_error + 2e-3 * m0(model, 1.0)


def test_antithetic_pairs_are_mirrored():
    cfg = SimConfig(n_paths=4, steps_per_year=20, seed=5)
    batch = simulate_asset_terminal(SabrParams(1.0, 0.0), 0.0, 1.0, cfg)
    # deterministic vol: X_T is linear in the noise, so each pair is symmetric
    assert np.allclose(batch.terminal_x[0::2], -batch.terminal_x[1::2], atol=1e-12)


def test_same_seed_same_output_any_worker_count():
    n = 2 * PATHS_PER_BLOCK + 6
    reference = simulate_asset_terminal(HESTON, 100.0, 0.5, SimConfig(n, 30, 99, workers=1), couple_rho0=True)
    for workers in (2, 3):
        other = simulate_asset_terminal(HESTON, 100.0, 0.5, SimConfig(n, 30, 99, workers=workers), couple_rho0=True)
        assert np.array_equal(reference.integrated_variance, other.integrated_variance)
        assert np.array_equal(reference.terminal_x, other.terminal_x)
        assert np.array_equal(reference.terminal_x_rho0, other.terminal_x_rho0)
    different = simulate_vol_paths(HESTON, 0.5, SimConfig(n, 30, 100))
    assert not np.array_equal(reference.integrated_variance, different.integrated_variance)


def test_vol_paths_shared_between_runs():
    cfg = SimConfig(n_paths=64, steps_per_year=30, seed=7)
    vol_only = simulate_vol_paths(SABR.with_rho(-0.5), 1.0, cfg)
    with_asset = simulate_asset_terminal(SABR.with_rho(-0.5), 100.0, 1.0, cfg)
    assert np.array_equal(vol_only.integrated_variance, with_asset.integrated_variance)
    assert vol_only.fingerprint == simulation_fingerprint(SABR, 1.0, cfg)


def test_terminal_mean_is_spot():
    batch = simulate_asset_terminal(HESTON.with_rho(-0.3), 100.0, 1.0, SMALL, couple_rho0=True)
    for values in (batch.terminal_x, batch.terminal_x_rho0):
        estimate = estimate_from_samples(values, batch.antithetic)
        assert estimate.covers(100.0, z=4.0)


def test_rho_zero_twin_matches_asset():
    batch = simulate_asset_terminal(HESTON, 100.0, 1.0, SimConfig(64, 20, 1), couple_rho0=True)
    assert np.allclose(batch.terminal_x, batch.terminal_x_rho0, rtol=1e-13)


def test_heston_truncation_diagnostic():
    # Feller violated hard: the Euler variance crosses zero often
    harsh = HestonParams(sigma0=0.2, kappa=1.0, theta=0.04, nu=2.0)
    batch = simulate_vol_paths(harsh, 1.0, SimConfig(2_000, 50, 4))
    assert 0.0 < batch.negative_variance_fraction < 1.0
    assert np.all(batch.integrated_variance >= 0.0)


def test_fold_pairs_and_estimates():
    assert run_tests_for_function(
        [(np.array([1.0, 3.0, 5.0, 7.0]), True), (np.array([1.0, 3.0]), False), (np.array([1.0, 2.0, 3.0]), True)],
        [np.array([2.0, 6.0]), np.array([1.0, 3.0]), "error"],
        fold_pairs,
        "pair means",
    )
    estimate = estimate_from_samples(np.array([1.0, 3.0, 5.0, 7.0]), antithetic=True)
    assert estimate.value == 4.0
    assert estimate.std_error == pytest.approx(2.0 * math.sqrt(2.0) / math.sqrt(2.0))
    assert estimate.n_paths == 4
    assert McEstimate(1.0, 0.5, 10).ci95 == pytest.approx((1.0 - 0.98, 1.0 + 0.98))
    assert McEstimate(1.0, 0.1, 10).agrees_with(McEstimate(1.2, 0.1, 10))
    with pytest.raises(SimulationError):
        estimate_from_samples(np.array([]), antithetic=False)


if __name__ == "__main__":
    test_module(
        "paths",
        [
            test_sim_config_validation,
            test_step_count,
            test_batch_shapes_and_read_only,
            test_batch_copies_caller_arrays,
            test_deterministic_volatility,
            test_integrated_variance_matches_variance_swap,
            test_antithetic_pairs_are_mirrored,
            test_same_seed_same_output_any_worker_count,
            test_vol_paths_shared_between_runs,
            test_terminal_mean_is_spot,
            test_rho_zero_twin_matches_asset,
            test_heston_truncation_diagnostic,
            test_fold_pairs_and_estimates,
        ],
    )
