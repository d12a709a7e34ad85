"""Metric tests with direct-formula and brute-force recount oracles."""

import numpy as np
import pytest

from gpexplore.gp import GPModel, Hyperparameters
from gpexplore.metrics import (
    EvaluationGrid,
    build_evaluation_grid,
    coverage,
    default_cells_per_dim,
    rmse,
)
from gpexplore.systems import make_system


class PerfectModel:
    """Stub whose posterior mean is exactly the true next state."""

    def __init__(self, grid):
        self._lookup = {tuple(z): y for z, y in zip(grid.inputs, grid.true_next)}

    def predict_means(self, Z):
        return np.array([self._lookup[tuple(z)] for z in Z])


@pytest.fixture(scope="module")
def pendulum_grid():
    system = make_system("pendulum")
    return build_evaluation_grid(system, 50, np.random.default_rng(0))


class TestRmse:
    def test_perfect_model_scores_zero(self, pendulum_grid, monkeypatch):
        perfect = PerfectModel(pendulum_grid)
        import gpexplore.metrics as metrics_mod

        monkeypatch.setattr(
            metrics_mod, "predict_batch", lambda model, Z: (model.predict_means(Z), None)
        )
        assert rmse(perfect, pendulum_grid) == 0.0

    def test_empty_gp_matches_direct_formula(self, pendulum_grid):
        h = Hyperparameters(1.0, np.ones(3), 0.05)
        model = GPModel.prior([h, h])
        expected = np.sqrt(np.mean(pendulum_grid.true_next**2))
        assert rmse(model, pendulum_grid) == pytest.approx(expected, rel=1e-12)

    def test_permutation_invariant(self, pendulum_grid):
        h = Hyperparameters(1.0, np.ones(3), 0.05)
        model = GPModel.prior([h, h])
        perm = np.random.default_rng(1).permutation(pendulum_grid.size)
        shuffled = EvaluationGrid(pendulum_grid.inputs[perm], pendulum_grid.true_next[perm])
        assert rmse(model, shuffled) == pytest.approx(rmse(model, pendulum_grid), rel=1e-12)

    def test_grid_is_reproducible_and_hashable(self):
        system = make_system("pendulum")
        a = build_evaluation_grid(system, 30, np.random.default_rng(5))
        b = build_evaluation_grid(system, 30, np.random.default_rng(5))
        assert a.digest() == b.digest()
        c = build_evaluation_grid(system, 30, np.random.default_rng(6))
        assert a.digest() != c.digest()


class TestCoverage:
    ROI_LO = np.array([0.0, 0.0])
    ROI_HI = np.array([1.0, 1.0])

    def test_single_cell(self):
        states = np.tile([0.55, 0.55], (20, 1))
        assert coverage(states, self.ROI_LO, self.ROI_HI, 10) == pytest.approx(100 / 100)

    def test_full_cover_from_cell_centers(self):
        centers = (np.arange(4) + 0.5) / 4
        states = np.array([[a, b] for a in centers for b in centers])
        assert coverage(states, self.ROI_LO, self.ROI_HI, 4) == 100.0

    def test_matches_brute_force_recount(self):
        rng = np.random.default_rng(2)
        states = rng.uniform(-0.2, 1.2, size=(200, 2))
        cells = 7
        got = coverage(states, self.ROI_LO, self.ROI_HI, cells)
        seen = set()
        for x, y in states:
            i = min(max(int(np.floor(x * cells)), 0), cells - 1)
            j = min(max(int(np.floor(y * cells)), 0), cells - 1)
            seen.add((i, j))
        assert got == pytest.approx(100.0 * len(seen) / cells**2)

    def test_out_of_region_clamps(self):
        states = np.array([[5.0, 5.0], [-5.0, -5.0]])
        assert coverage(states, self.ROI_LO, self.ROI_HI, 10) == pytest.approx(2.0)

    def test_never_exceeds_hundred(self):
        rng = np.random.default_rng(3)
        states = rng.uniform(-10, 10, size=(5000, 2))
        assert coverage(states, self.ROI_LO, self.ROI_HI, 3) <= 100.0

    def test_monotone_in_prefix_length(self):
        rng = np.random.default_rng(4)
        states = rng.uniform(0, 1, size=(100, 2))
        values = [coverage(states[:k], self.ROI_LO, self.ROI_HI, 5) for k in range(1, 101)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_default_cell_rule(self):
        assert default_cells_per_dim(2) == 10
        assert default_cells_per_dim(4) == 6


class TestRmseTrend:
    def test_rmse_falls_as_data_grows(self):
        # statistical trend over seeds, not per-sample: more data, lower error
        from gpexplore.harness import ExperimentConfig, GPUpdateConfig, MetricsConfig, run_trial

        cfg = ExperimentConfig(
            system="pendulum", strategy="prbs", trials=1, steps=60, horizon=15,
            gp=GPUpdateConfig(restarts=1, max_iterations=30),
            metrics=MetricsConfig(grid_points=300),
        )
        first, last = [], []
        for seed in range(4):
            result = run_trial(cfg, seed=seed)
            series = dict(result.rmse_series)
            first.append(series[10])
            last.append(series[60])
        assert np.mean(last) < np.mean(first)
