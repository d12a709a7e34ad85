"""Informative control generation through the learned dynamics.

Solves for the bounded M-step control sequence that maximizes the summed
predictive entropy along the GP mean rollout (single shooting: the dynamics
constraint is an explicit recursion, so rolling forward through the
posterior mean spans the same feasible set as a constrained formulation).
The search is a cross-entropy-style population method with elite retention,
followed by a coordinate-probing refinement of the best candidate. A
goal-reaching variant with the same machinery steers toward a target state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import gp
from .errors import PlanningFailureError

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """Population-search settings. Defaults are deliberately conservative."""

    restarts: int = 2
    population_size: int = 64
    elite_fraction: float = 0.125
    iterations: int = 15
    refinement_steps: int = 20
    convergence_tolerance: float = 1e-6
    control_penalty_weight: float = 0.01

    def __post_init__(self):
        if self.restarts < 1 or self.population_size < 2 or self.iterations < 0:
            raise ValueError("optimizer counts must be positive")
        if not 0.0 < self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.elite_fraction * self.population_size < 2:
            raise ValueError("elite_fraction * population_size must be at least 2")
        if self.control_penalty_weight < 0:
            raise ValueError("control_penalty_weight must be nonnegative")


@dataclass(frozen=True)
class PlannedTrajectory:
    """Optimized controls with their mean rollout and achieved objective."""

    controls: np.ndarray
    predicted_states: np.ndarray
    objective_value: float


def mean_rollout(model: gp.GPModel, x0: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """Roll the posterior mean forward; returns (M+1, d_x) states."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    states, _ = _batch_rollout(model, x0, controls[None, :, :])
    return states[0]


def _batch_rollout(
    model: gp.GPModel, x0: np.ndarray, control_batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean rollout of many control sequences at once.

    control_batch is (q, M, d_u). Returns predicted states (q, M+1, d_x) and
    the entropy of each visited state-action pair, (q, M).
    """
    q, M, _ = control_batch.shape
    d_x = x0.size
    states = np.zeros((q, M + 1, d_x))
    states[:, 0, :] = x0
    entropies = np.zeros((q, M))
    for i in range(M):
        Z = np.hstack([states[:, i, :], control_batch[:, i, :]])
        try:
            means, variances = gp.predict_batch(model, Z)
        except ValueError as err:
            raise PlanningFailureError(f"mean rollout produced invalid queries: {err}") from err
        if not np.all(np.isfinite(means)):
            raise PlanningFailureError("non-finite prediction during mean rollout")
        states[:, i + 1, :] = means
        entropies[:, i] = np.sum(gp._ENTROPY_CONST + 0.5 * np.log(variances), axis=1)
    return states, entropies


def entropy_objective(
    model: gp.GPModel, x0: np.ndarray, controls: np.ndarray, penalty_weight: float
) -> float:
    """Summed entropy along the mean rollout minus the control penalty."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    _, entropies = _batch_rollout(model, x0, controls[None, :, :])
    return float(entropies.sum() - penalty_weight * np.sum(controls**2))


def goal_objective(
    model: gp.GPModel,
    x0: np.ndarray,
    controls: np.ndarray,
    goal_state: np.ndarray,
    state_weights: np.ndarray,
    penalty_weight: float,
) -> float:
    """Negative weighted terminal distance minus control penalty (maximized)."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    states = mean_rollout(model, np.asarray(x0, dtype=float), controls)
    err = states[-1] - np.asarray(goal_state, dtype=float)
    return float(-np.sum(state_weights * err**2) - penalty_weight * np.sum(controls**2))


def effective_penalty_weight(config: OptimizerConfig, lower: np.ndarray, upper: np.ndarray) -> float:
    """Penalty weight normalized by the mean squared control-bound span."""
    span2 = np.mean((np.asarray(upper) - np.asarray(lower)) ** 2)
    return config.control_penalty_weight / float(span2)


def _cem_maximize(
    objective,
    lower: np.ndarray,
    upper: np.ndarray,
    config: OptimizerConfig,
    rng: np.random.Generator,
    seeds: tuple[np.ndarray, ...] = (),
    init_sampler=None,
    trace: list | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize a batch objective over a box; returns (argmax, value).

    The returned value is never below the best of any evaluated candidate,
    including the seeded and initial random populations. `init_sampler`,
    when given, draws the initial population (e.g. with temporal structure
    for control sequences); later iterations resample around the elites.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    span = upper - lower
    n_elite = max(2, int(round(config.elite_fraction * config.population_size)))
    best_x: np.ndarray | None = None
    best_val = -np.inf

    for _ in range(config.restarts):
        if init_sampler is None:
            X = rng.uniform(lower, upper, size=(config.population_size, dim))
        else:
            X = np.clip(init_sampler(rng, config.population_size), lower, upper)
        for i, seed in enumerate(seeds[: config.population_size]):
            X[i] = np.clip(np.asarray(seed, dtype=float).reshape(-1), lower, upper)
        for _ in range(max(1, config.iterations)):
            vals = np.asarray(objective(X), dtype=float)
            vals[~np.isfinite(vals)] = -np.inf
            order = np.argsort(-vals, kind="stable")
            if vals[order[0]] > best_val:
                best_val = float(vals[order[0]])
                best_x = X[order[0]].copy()
            if trace is not None:
                trace.append(best_val)
            if not np.isfinite(best_val):
                raise PlanningFailureError("no finite candidate in the population")
            elites = X[order[:n_elite]]
            mean = elites.mean(axis=0)
            std = elites.std(axis=0)
            if np.all(std <= config.convergence_tolerance * span):
                break
            X = mean + std * rng.standard_normal((config.population_size, dim))
            np.clip(X, lower, upper, out=X)
            X[:n_elite] = elites

    assert best_x is not None
    # coordinate probing around the incumbent with a shrinking step
    delta = 0.1 * span
    for _ in range(max(0, config.refinement_steps)):
        probes = np.repeat(best_x[None, :], 2 * dim, axis=0)
        idx = np.arange(dim)
        probes[idx, idx] += delta
        probes[dim + idx, idx] -= delta
        np.clip(probes, lower, upper, out=probes)
        vals = np.asarray(objective(probes), dtype=float)
        vals[~np.isfinite(vals)] = -np.inf
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val = float(vals[j])
            best_x = probes[j]
        else:
            delta *= 0.5
            if np.all(delta < 1e-8 * span):
                break
        if trace is not None:
            trace.append(best_val)
    return best_x, best_val


def _control_init_sampler(horizon: int, lower: np.ndarray, upper: np.ndarray):
    """Initial population for control sequences: half white uniform noise,
    half piecewise-constant (each dimension holds one random level over a
    random segment split). Sustained pushes excite oscillatory plants far
    better than white noise, so they deserve representation from the start.
    """
    d_u = lower.size

    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        white = rng.uniform(lower, upper, size=(count, horizon, d_u))
        n_held = count // 2
        if n_held and horizon > 1:
            split = rng.integers(1, horizon, size=n_held)
            levels = rng.uniform(lower, upper, size=(n_held, 2, d_u))
            t = np.arange(horizon)
            first = (t[None, :] < split[:, None])[:, :, None]
            white[:n_held] = np.where(first, levels[:, :1, :], levels[:, 1:, :])
        return white.reshape(count, horizon * d_u)

    return sampler


def optimize_entropy(
    model: gp.GPModel,
    x0: np.ndarray,
    horizon: int,
    lower: np.ndarray,
    upper: np.ndarray,
    config: OptimizerConfig,
    rng: np.random.Generator,
    warm_start: np.ndarray | None = None,
    trace: list | None = None,
) -> PlannedTrajectory:
    """Most informative M-step control sequence from x0.

    The zero sequence is always seeded into the population (it resolves the
    flat-entropy tie toward minimal control effort); a warm start, when
    given, is seeded as well.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d_u = lower.size
    w = effective_penalty_weight(config, lower, upper)

    def batch_objective(flat: np.ndarray) -> np.ndarray:
        controls = flat.reshape(-1, horizon, d_u)
        _, entropies = _batch_rollout(model, x0, controls)
        return entropies.sum(axis=1) - w * np.sum(flat**2, axis=1)

    seeds = [np.zeros(horizon * d_u)]
    if warm_start is not None:
        seeds.append(np.asarray(warm_start, dtype=float).reshape(-1))
    best_flat, best_val = _cem_maximize(
        batch_objective,
        np.tile(lower, horizon),
        np.tile(upper, horizon),
        config,
        rng,
        seeds=tuple(seeds),
        init_sampler=_control_init_sampler(horizon, lower, upper),
        trace=trace,
    )
    controls = best_flat.reshape(horizon, d_u)
    states, _ = _batch_rollout(model, x0, controls[None, :, :])
    return PlannedTrajectory(controls=controls, predicted_states=states[0], objective_value=best_val)


def optimize_goal(
    model: gp.GPModel,
    x0: np.ndarray,
    goal_state: np.ndarray,
    state_weights: np.ndarray,
    horizon: int,
    lower: np.ndarray,
    upper: np.ndarray,
    config: OptimizerConfig,
    rng: np.random.Generator,
) -> PlannedTrajectory:
    """Steer the mean rollout toward goal_state over M steps.

    Maximizes the negative weighted terminal error (weights normalize each
    state dimension, e.g. by region-of-interest span) minus the control
    penalty. The zero sequence is seeded, so the result is never worse than
    not actuating at all.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    goal_state = np.asarray(goal_state, dtype=float).reshape(-1)
    state_weights = np.asarray(state_weights, dtype=float).reshape(-1)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d_u = lower.size
    w = effective_penalty_weight(config, lower, upper)

    def batch_objective(flat: np.ndarray) -> np.ndarray:
        controls = flat.reshape(-1, horizon, d_u)
        states, _ = _batch_rollout(model, x0, controls)
        err = states[:, -1, :] - goal_state
        return -np.sum(state_weights * err**2, axis=1) - w * np.sum(flat**2, axis=1)

    best_flat, best_val = _cem_maximize(
        batch_objective,
        np.tile(lower, horizon),
        np.tile(upper, horizon),
        config,
        rng,
        seeds=(np.zeros(horizon * d_u),),
        init_sampler=_control_init_sampler(horizon, lower, upper),
    )
    controls = best_flat.reshape(horizon, d_u)
    states, _ = _batch_rollout(model, x0, controls[None, :, :])
    return PlannedTrajectory(controls=controls, predicted_states=states[0], objective_value=best_val)


def maximize_entropy_point(
    model: gp.GPModel,
    lower: np.ndarray,
    upper: np.ndarray,
    config: OptimizerConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Highest-entropy state-action pair inside a box (best found)."""

    def batch_objective(Z: np.ndarray) -> np.ndarray:
        return gp.entropy_batch(model, Z)

    center = 0.5 * (np.asarray(lower, dtype=float) + np.asarray(upper, dtype=float))
    return _cem_maximize(batch_objective, lower, upper, config, rng, seeds=(center,))
