"""Tests for the integrator benchmark harnesses."""

import numpy as np
import pytest

from dlglab.bench import BenchResult, gaussian_benchmark, gaussian_terminal_error, mixture_benchmark
from dlglab.integrators import IntegratorSpec


DET = IntegratorSpec(name="karras_det")
ALL_FIXED = tuple(
    IntegratorSpec(name=n)
    for n in ("euler_maruyama", "reverse_diffusion", "prob_flow_euler", "karras_det")
)


class TestGaussianTerminalError:
    def test_deterministic(self, wide_schedule):
        a = gaussian_terminal_error(DET, wide_schedule, 0.5, 0.01, 16)
        b = gaussian_terminal_error(DET, wide_schedule, 0.5, 0.01, 16)
        assert a == b
        assert isinstance(a, BenchResult)
        assert a.integrator == "karras_det"
        assert a.sigma_start == 0.5
        assert a.budget == 16

    def test_nfe_matches_scheme_accounting(self, wide_schedule):
        for budget in (8, 16, 33):
            res = gaussian_terminal_error(DET, wide_schedule, 0.5, 0.01, budget)
            assert res.nfe == 2 * max(1, (budget + 1) // 2) - 1
        res = gaussian_terminal_error(
            IntegratorSpec(name="euler_maruyama"), wide_schedule, 0.5, 0.01, 12
        )
        assert res.nfe == 12

    def test_error_shrinks_with_budget(self, wide_schedule):
        errs = [
            gaussian_terminal_error(DET, wide_schedule, 0.5, 0.01, b).error
            for b in (8, 32, 128)
        ]
        assert errs[0] > errs[1] > errs[2]

    def test_zero_churn_matches_deterministic(self, wide_schedule):
        stoch = IntegratorSpec(name="karras_stoch", churn=0.0)
        a = gaussian_terminal_error(DET, wide_schedule, 2.0, 0.01, 16)
        b = gaussian_terminal_error(stoch, wide_schedule, 2.0, 0.01, 16)
        assert a.error == b.error

    def test_near_start_beats_far_start_at_matched_budget(self, wide_schedule):
        near = gaussian_terminal_error(DET, wide_schedule, 0.5, 0.01, 16)
        far = gaussian_terminal_error(DET, wide_schedule, 50.0, 0.01, 16)
        assert near.error < far.error

    def test_stochastic_schemes_recover_moments_at_high_budget(self, wide_schedule):
        # The distributional probe is exact for affine schemes, so even
        # the noise-injecting integrators converge cleanly.
        for name in ("euler_maruyama", "reverse_diffusion"):
            res = gaussian_terminal_error(
                IntegratorSpec(name=name), wide_schedule, 0.5, 0.01, 256
            )
            assert res.error < 0.02, name


class TestGaussianBenchmark:
    def test_grid_of_cells(self, wide_schedule):
        results = gaussian_benchmark(
            ALL_FIXED, wide_schedule, sigma_starts=(0.5, 50.0), budgets=(8, 16)
        )
        assert len(results) == 4 * 2 * 2
        keys = {(r.integrator, r.sigma_start, r.budget) for r in results}
        assert len(keys) == 16
        assert all(r.sigma_end == 0.01 for r in results)

    def test_cells_match_single_evaluations(self, wide_schedule):
        results = gaussian_benchmark(
            (DET,), wide_schedule, sigma_starts=(0.5,), budgets=(8, 16)
        )
        for res in results:
            single = gaussian_terminal_error(
                DET, wide_schedule, res.sigma_start, res.sigma_end, res.budget
            )
            assert res == single

    def test_explicit_sigma_end(self, wide_schedule):
        (res,) = gaussian_benchmark(
            (DET,), wide_schedule, sigma_starts=(0.5,), budgets=(16,), sigma_end=0.05
        )
        assert res.sigma_end == 0.05


class TestMixtureBenchmark:
    def test_reproducible_and_keyed_by_cell(self, benchmark_mixture, chain_schedule):
        specs = (DET, IntegratorSpec(name="prob_flow_euler"))
        full = mixture_benchmark(
            specs, benchmark_mixture, chain_schedule, budgets=(8, 16), n_samples=60, master_seed=5
        )
        again = mixture_benchmark(
            specs, benchmark_mixture, chain_schedule, budgets=(8, 16), n_samples=60, master_seed=5
        )
        assert full == again
        assert len(full) == 4
        # each cell derives its own stream: a subset sweep reproduces
        # the same cell values
        subset = mixture_benchmark(
            specs, benchmark_mixture, chain_schedule, budgets=(16,), n_samples=60, master_seed=5
        )
        cells = {(r.integrator, r.budget): r for r in full}
        for r in subset:
            assert cells[(r.integrator, r.budget)] == r

    def test_seed_changes_results(self, benchmark_mixture, chain_schedule):
        a = mixture_benchmark(
            (DET,), benchmark_mixture, chain_schedule, budgets=(8,), n_samples=60, master_seed=5
        )
        b = mixture_benchmark(
            (DET,), benchmark_mixture, chain_schedule, budgets=(8,), n_samples=60, master_seed=6
        )
        assert a[0].error != b[0].error

    def test_fgd_is_finite_and_small_for_good_integrator(
        self, benchmark_mixture, chain_schedule
    ):
        (res,) = mixture_benchmark(
            (DET,), benchmark_mixture, chain_schedule, budgets=(32,), n_samples=200, master_seed=1
        )
        assert np.isfinite(res.error)
        assert res.error < 5.0
        assert res.nfe == 32  # 31-step ladder + the final posterior-mean map

    def test_rejects_tiny_sample_count(self, benchmark_mixture, chain_schedule):
        with pytest.raises(ValueError):
            mixture_benchmark(
                (DET,), benchmark_mixture, chain_schedule, budgets=(8,), n_samples=1, master_seed=0
            )
