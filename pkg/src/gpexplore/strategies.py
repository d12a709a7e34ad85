"""The six excitation strategies of the benchmark.

Open-loop signals (PRBS, chirp) ignore the model entirely; the model-based
strategies differ in how far they look ahead and how often the model they
plan with is refreshed:

* greedy - one-step entropy maximization, model updated every step
* rec    - M-step entropy plan re-solved every step, first control applied
* pa     - M-step entropy plan applied in full, model batch-updated after
* sep    - pick the highest-entropy state-action target, steer to it, then
           apply the target action

Every strategy emits blocks of admissible controls; the harness applies
them one step at a time and owns the model-update cadence.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PlanningFailureError
from .gp import GPModel
from .trajopt import (
    OptimizerConfig,
    maximize_entropy_point,
    optimize_entropy,
    optimize_goal,
)

_log = logging.getLogger(__name__)


class StrategyKind(enum.Enum):
    PRBS = "prbs"
    CHIRP = "chirp"
    GREEDY = "greedy"
    SEP = "sep"
    REC = "rec"
    PA = "pa"


@dataclass(frozen=True)
class StrategyContext:
    """Everything a strategy needs to know about the experiment."""

    control_lower: np.ndarray
    control_upper: np.ndarray
    roi_lower: np.ndarray
    roi_upper: np.ndarray
    dt: float
    horizon: int
    sweep_steps: int
    optimizer: OptimizerConfig = OptimizerConfig()
    chirp_f_low: float = 0.1
    chirp_f_high: float = 2.0

    @property
    def control_dim(self) -> int:
        return np.asarray(self.control_lower).size


@dataclass
class ExplorationState:
    """Per-trial bookkeeping shared between the harness and the strategy."""

    model: GPModel | None = None
    step: int = 0
    pending: deque = field(default_factory=deque)


class ExplorationStrategy:
    """Base class; subclasses fill in next_block."""

    # when the harness refreshes the GP: every step, at the end of each
    # emitted block, or only at evaluation checkpoints
    update_event = "step"

    def __init__(self, ctx: StrategyContext):
        self.ctx = ctx
        self.last_status = "ok"

    def next_block(self, model: GPModel | None, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _random_control(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.ctx.control_lower, self.ctx.control_upper)


class PRBSStrategy(ExplorationStrategy):
    """Bang-bang excitation: each dimension independently holds min or max
    for a random number of steps, then resamples."""

    update_event = "checkpoint"

    def __init__(self, ctx: StrategyContext):
        super().__init__(ctx)
        self._level = np.zeros(ctx.control_dim)
        self._hold = np.zeros(ctx.control_dim, dtype=int)

    def next_block(self, model, x, rng):
        lo, hi = self.ctx.control_lower, self.ctx.control_upper
        for j in range(self.ctx.control_dim):
            if self._hold[j] == 0:
                self._level[j] = lo[j] if rng.random() < 0.5 else hi[j]
                self._hold[j] = int(rng.integers(1, self.ctx.horizon + 1))
            self._hold[j] -= 1
        return self._level.copy()[None, :]


class ChirpStrategy(ExplorationStrategy):
    """Swept sine spanning f_low to f_high over the trial, centered in the
    bounds with amplitude half the bound span."""

    update_event = "checkpoint"

    def __init__(self, ctx: StrategyContext):
        super().__init__(ctx)
        self._k = 0

    def next_block(self, model, x, rng):
        ctx = self.ctx
        t = self._k * ctx.dt
        duration = max(ctx.sweep_steps, 1) * ctx.dt
        sweep_rate = (ctx.chirp_f_high - ctx.chirp_f_low) / duration
        phase = 2.0 * np.pi * (ctx.chirp_f_low * t + 0.5 * sweep_rate * t**2)
        self._k += 1
        center = 0.5 * (ctx.control_lower + ctx.control_upper)
        amplitude = 0.5 * (ctx.control_upper - ctx.control_lower)
        return (center + amplitude * np.sin(phase))[None, :]


class GreedyStrategy(ExplorationStrategy):
    """One-step-ahead entropy maximization from the current state."""

    update_event = "step"

    def next_block(self, model, x, rng):
        self.last_status = "ok"
        if model is None:
            self.last_status = "random:no-model"
            return self._random_control(rng)[None, :]
        try:
            plan = optimize_entropy(
                model, x, 1, self.ctx.control_lower, self.ctx.control_upper,
                self.ctx.optimizer, rng,
            )
        except PlanningFailureError as err:
            _log.warning("greedy planning failed (%s); applying a random control", err)
            self.last_status = f"random:{err}"
            return self._random_control(rng)[None, :]
        return plan.controls[:1]


class RecedingHorizonStrategy(ExplorationStrategy):
    """Re-solve the M-step entropy problem every step, apply the first
    control. The previous solution, shifted by one step, warm-starts the
    search."""

    update_event = "step"

    def __init__(self, ctx: StrategyContext):
        super().__init__(ctx)
        self._previous: np.ndarray | None = None

    def _warm_start(self) -> np.ndarray | None:
        if self._previous is None:
            return None
        return np.vstack([self._previous[1:], self._previous[-1:]])

    def next_block(self, model, x, rng):
        self.last_status = "ok"
        if model is None:
            self.last_status = "random:no-model"
            return self._random_control(rng)[None, :]
        try:
            plan = optimize_entropy(
                model, x, self.ctx.horizon, self.ctx.control_lower, self.ctx.control_upper,
                self.ctx.optimizer, rng, warm_start=self._warm_start(),
            )
        except PlanningFailureError as err:
            _log.warning("receding-horizon planning failed (%s); applying a random control", err)
            self.last_status = f"random:{err}"
            self._previous = None
            return self._random_control(rng)[None, :]
        self._previous = plan.controls
        return plan.controls[:1]


class PlanAndApplyStrategy(ExplorationStrategy):
    """Solve the M-step entropy problem once, apply the whole plan, and let
    the harness batch-update the model afterwards."""

    update_event = "block"

    def next_block(self, model, x, rng):
        self.last_status = "ok"
        if model is None:
            self.last_status = "random:no-model"
            return self._random_control(rng)[None, :]
        try:
            plan = optimize_entropy(
                model, x, self.ctx.horizon, self.ctx.control_lower, self.ctx.control_upper,
                self.ctx.optimizer, rng,
            )
        except PlanningFailureError as err:
            _log.warning("plan-and-apply planning failed (%s); applying a random control", err)
            self.last_status = f"random:{err}"
            return self._random_control(rng)[None, :]
        return plan.controls


class SepStrategy(ExplorationStrategy):
    """Separated search and control: find the highest-entropy state-action
    pair in the region of interest, steer toward its state over M steps,
    then apply its action. If the target turns out unreachable the best
    plan found is applied anyway."""

    update_event = "block"

    def next_block(self, model, x, rng):
        ctx = self.ctx
        self.last_status = "ok"
        if model is None:
            self.last_status = "random:no-model"
            return self._random_control(rng)[None, :]
        lower = np.concatenate([ctx.roi_lower, ctx.control_lower])
        upper = np.concatenate([ctx.roi_upper, ctx.control_upper])
        try:
            z_goal, _ = maximize_entropy_point(model, lower, upper, ctx.optimizer, rng)
        except PlanningFailureError as err:
            _log.warning("sep target search failed (%s); falling back to greedy", err)
            self.last_status = f"fallback-greedy:{err}"
            return GreedyStrategy(ctx).next_block(model, x, rng)
        d_x = ctx.roi_lower.size
        x_goal, u_goal = z_goal[:d_x], z_goal[d_x:]
        weights = 1.0 / (ctx.roi_upper - ctx.roi_lower) ** 2
        # steering is all about progress toward the target; with the full
        # penalty, the small reachability gains an early model predicts are
        # cheaper to forgo than the actuation they need, and sep stalls
        steer_cfg = replace(
            ctx.optimizer, control_penalty_weight=0.01 * ctx.optimizer.control_penalty_weight
        )
        try:
            plan = optimize_goal(
                model, x, x_goal, weights, ctx.horizon,
                ctx.control_lower, ctx.control_upper, steer_cfg, rng,
            )
        except PlanningFailureError as err:
            _log.warning("sep steering failed (%s); applying an entropy plan instead", err)
            self.last_status = f"fallback-entropy:{err}"
            plan = optimize_entropy(
                model, x, ctx.horizon, ctx.control_lower, ctx.control_upper, ctx.optimizer, rng
            )
            return plan.controls
        return np.vstack([plan.controls, u_goal[None, :]])


_STRATEGY_CLASSES = {
    StrategyKind.PRBS: PRBSStrategy,
    StrategyKind.CHIRP: ChirpStrategy,
    StrategyKind.GREEDY: GreedyStrategy,
    StrategyKind.SEP: SepStrategy,
    StrategyKind.REC: RecedingHorizonStrategy,
    StrategyKind.PA: PlanAndApplyStrategy,
}


def available_strategies() -> list[str]:
    return [kind.value for kind in StrategyKind]


def make_strategy(kind: StrategyKind | str, ctx: StrategyContext) -> ExplorationStrategy:
    kind = StrategyKind(kind)
    return _STRATEGY_CLASSES[kind](ctx)
