"""Evaluation criteria: prediction RMSE over a random grid, and coverage of
the region of interest by the visited states."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .gp import GPModel, predict_batch
from .systems import DynamicalSystem


@dataclass(frozen=True)
class EvaluationGrid:
    """Random state-action queries with their noise-free true next states.

    One grid is built per (system, evaluation seed) and shared by every
    strategy and trial of a benchmark run.
    """

    inputs: np.ndarray
    true_next: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] != self.true_next.shape[0] or self.inputs.shape[0] == 0:
            raise ValueError("grid inputs and targets must have the same nonzero length")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    def digest(self) -> str:
        payload = self.inputs.tobytes() + self.true_next.tobytes()
        return hashlib.sha256(payload).hexdigest()


def build_evaluation_grid(
    system: DynamicalSystem, n_points: int, rng: np.random.Generator
) -> EvaluationGrid:
    """Sample (state, control) pairs uniformly from the region of interest
    and the control bounds; record the true next state for each."""
    spec = system.spec
    states = rng.uniform(spec.roi_lower, spec.roi_upper, size=(n_points, spec.state_dim))
    controls = rng.uniform(spec.control_lower, spec.control_upper, size=(n_points, spec.control_dim))
    true_next = np.array([system.true_step(states[i], controls[i]) for i in range(n_points)])
    return EvaluationGrid(inputs=np.hstack([states, controls]), true_next=true_next)


def rmse(model: GPModel, grid: EvaluationGrid) -> float:
    """Root mean square prediction error, pooled over grid points and
    output dimensions."""
    means, _ = predict_batch(model, grid.inputs)
    return float(np.sqrt(np.mean((means - grid.true_next) ** 2)))


def coverage(
    states: np.ndarray, roi_lower: np.ndarray, roi_upper: np.ndarray, cells_per_dim: int
) -> float:
    """Percentage of region-of-interest cells visited by the states.

    The region is discretized into cells_per_dim bins per dimension; states
    outside the region clamp to the boundary cells, so excursions still
    count and the result never exceeds 100.
    """
    if cells_per_dim < 1:
        raise ValueError("cells_per_dim must be at least 1")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    roi_lower = np.asarray(roi_lower, dtype=float)
    roi_upper = np.asarray(roi_upper, dtype=float)
    rel = (states - roi_lower) / (roi_upper - roi_lower)
    bins = np.clip(np.floor(rel * cells_per_dim).astype(int), 0, cells_per_dim - 1)
    visited = len({tuple(row) for row in bins})
    total = cells_per_dim ** states.shape[1]
    return 100.0 * visited / total


def default_cells_per_dim(state_dim: int) -> int:
    """10 cells per dimension for planar systems, 6 for four-dimensional
    ones (keeps the total cell count near or below ~1300)."""
    return 10 if state_dim <= 2 else 6
