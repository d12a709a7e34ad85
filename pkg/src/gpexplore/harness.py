"""Experiment runner: multi-seed trials, aggregation, and persistent results.

A trial applies exactly `steps` controls to one plant under one strategy,
keeps the GP up to date at the strategy's cadence, and records the RMSE over
the shared evaluation grid at every checkpoint plus the final coverage.
Everything is reproducible from (config, seed); a run manifest replays to
byte-identical summary output.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import SimulationDivergenceError
from .gp import (
    Dataset,
    HyperOptConfig,
    add_observations,
    fit,
    initial_hyperparameters,
    optimize_hyperparameters,
)
from .metrics import build_evaluation_grid, coverage, default_cells_per_dim, rmse
from .strategies import ExplorationState, StrategyContext, make_strategy
from .trajopt import OptimizerConfig

# a trial is abandoned if the planner needs this many consecutive fallbacks
_MAX_CONSECUTIVE_FALLBACKS = 25


@dataclass(frozen=True)
class GPUpdateConfig:
    """Hyperparameter-fitting schedule used by the harness."""

    restarts: int = 3
    max_iterations: int = 100
    gradient_tolerance: float = 1e-5
    min_fit_points: int = 10
    optimize_noise: bool = False
    # lengthscales are confined to [min, max] x the explorable span of each
    # input dimension; unbounded fits on data stuck near the start state
    # drift to near-flat kernels and kill the exploration signal. State
    # dimensions are capped near the region scale so unvisited states stay
    # uncertain; control dimensions may fit much longer (their one-step
    # imprint on the targets is small), which keeps mere input dithering
    # from masquerading as information gain.
    lengthscale_span_min: float = 0.01
    state_lengthscale_span_max: float = 0.5
    control_lengthscale_span_max: float = 10.0
    # per output dimension, the signal std never fits below this fraction of
    # the region-of-interest span: next states range over the region, and a
    # prior that collapses to "all noise" on home-confined data would freeze
    # exploration for good
    signal_span_floor: float = 0.25
    # above the threshold, re-optimize hyperparameters only every
    # `reopt_interval` update events (runtime concession)
    reopt_cap_threshold: int = 200
    reopt_interval: int = 5

    def hyperopt_configs(
        self, state_spans: np.ndarray, control_spans: np.ndarray
    ) -> list[HyperOptConfig]:
        """One config per output dimension (the signal floor is per-dim)."""
        ls_bounds = tuple(
            (self.lengthscale_span_min * s, self.state_lengthscale_span_max * s)
            for s in state_spans
        ) + tuple(
            (self.lengthscale_span_min * s, self.control_lengthscale_span_max * s)
            for s in control_spans
        )
        shared = dict(
            restarts=self.restarts,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            min_fit_points=self.min_fit_points,
            optimize_noise=self.optimize_noise,
            lengthscale_bounds=ls_bounds,
        )
        configs = []
        for span in state_spans:
            floor = (self.signal_span_floor * span) ** 2
            configs.append(
                HyperOptConfig(signal_variance_bounds=(floor, np.exp(30.0)), **shared)
            )
        return configs


@dataclass(frozen=True)
class MetricsConfig:
    grid_points: int = 2000
    cells_per_dim: int | None = None  # None: 10 for d_x=2, 6 for d_x=4


@dataclass(frozen=True)
class ExperimentConfig:
    """One (system, strategy) cell of the benchmark."""

    system: str = "pendulum"
    strategy: str = "rec"
    trials: int = 10
    steps: int = 150
    horizon: int = 15
    base_seed: int = 0
    eval_seed: int = 9000
    checkpoint_interval: int = 10
    warmup_steps: int = 5
    chirp_f_low: float = 0.1
    chirp_f_high: float = 2.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    gp: GPUpdateConfig = field(default_factory=GPUpdateConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    systems_file: str | None = None

    def __post_init__(self):
        from .strategies import StrategyKind

        StrategyKind(self.strategy)  # unknown names fail here, not mid-run
        if not (self.steps >= self.horizon >= 1):
            raise ValueError("need steps >= horizon >= 1")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint_interval must be at least 1")
        if not 0 <= self.warmup_steps <= self.steps:
            raise ValueError("warmup_steps must lie in [0, steps]")

    def trial_seed(self, index: int) -> int:
        return self.base_seed ^ index


@dataclass
class TrialResult:
    """Per-seed outcome: RMSE time series, final coverage, and a step log."""

    seed: int
    status: str
    rmse_series: list[tuple[int, float]]
    coverage_final: float | None
    wall_seconds: float
    n_controls: int
    n_observations: int
    final_dataset_size: int
    step_log: list[tuple[int, tuple[float, ...], str]]

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def final_rmse(self) -> float | None:
        return self.rmse_series[-1][1] if self.rmse_series else None


@dataclass
class CellResult:
    system: str
    strategy: str
    steps: int
    results: list[TrialResult]

    @property
    def successful(self) -> list[TrialResult]:
        return [r for r in self.results if r.ok]


@dataclass
class BenchmarkReport:
    cells: list[CellResult]
    configs: list[ExperimentConfig]
    grid_digests: dict[str, str]
    package_version: str = __version__


def checkpoint_steps(steps: int, interval: int) -> list[int]:
    """Multiples of the interval up to the budget, always including it."""
    marks = set(range(interval, steps + 1, interval))
    marks.add(steps)
    return sorted(marks)


def run_trial(config: ExperimentConfig, seed: int) -> TrialResult:
    """Execute one trial: exactly `steps` controls and observations."""
    from .systems import make_system

    t_start = time.perf_counter()
    system = make_system(config.system, config.systems_file)
    spec = system.spec
    grid = build_evaluation_grid(
        system, config.metrics.grid_points, np.random.default_rng(config.eval_seed)
    )
    ctx = StrategyContext(
        control_lower=spec.control_lower,
        control_upper=spec.control_upper,
        roi_lower=spec.roi_lower,
        roi_upper=spec.roi_upper,
        dt=spec.dt,
        horizon=config.horizon,
        sweep_steps=max(config.steps - config.warmup_steps, 1),
        optimizer=config.optimizer,
        chirp_f_low=config.chirp_f_low,
        chirp_f_high=config.chirp_f_high,
    )
    strategy = make_strategy(config.strategy, ctx)
    rng = np.random.default_rng(seed)
    checkpoints = checkpoint_steps(config.steps, config.checkpoint_interval)
    cells = config.metrics.cells_per_dim or default_cells_per_dim(spec.state_dim)
    gp_cfg = config.gp

    state = ExplorationState()
    dataset = Dataset.empty(spec.state_dim + spec.control_dim, spec.state_dim)
    hypers = None
    buffer_X: list[np.ndarray] = []
    buffer_Y: list[np.ndarray] = []
    update_events = 0
    hyperopt_cfgs = gp_cfg.hyperopt_configs(
        spec.roi_upper - spec.roi_lower, spec.control_upper - spec.control_lower
    )

    x = spec.initial_state.copy()
    visited = [x.copy()]
    rmse_series: list[tuple[int, float]] = []
    step_log: list[tuple[int, tuple[float, ...], str]] = []
    status = "ok"
    consecutive_fallbacks = 0

    def refresh_model():
        nonlocal dataset, hypers, update_events, buffer_X, buffer_Y
        if not buffer_X:
            return
        new_X = np.array(buffer_X)
        new_Y = np.array(buffer_Y)
        buffer_X, buffer_Y = [], []
        dataset = dataset.extended(new_X, new_Y)
        update_events += 1
        n = dataset.n
        if n < gp_cfg.min_fit_points or hypers is None:
            hypers = [
                initial_hyperparameters(
                    dataset, spec.noise_variance, d,
                    hyperopt_cfgs[d].lengthscale_bounds,
                    hyperopt_cfgs[d].signal_variance_bounds,
                )
                for d in range(spec.state_dim)
            ]
            state.model = fit(dataset, hypers)
            return
        reopt = n <= gp_cfg.reopt_cap_threshold or update_events % gp_cfg.reopt_interval == 0
        if reopt:
            hypers = [
                optimize_hyperparameters(dataset, hypers[d], hyperopt_cfgs[d], d, rng)
                for d in range(spec.state_dim)
            ]
            state.model = fit(dataset, hypers)
        else:
            state.model = add_observations(state.model, new_X, new_Y)

    try:
        for k in range(config.steps):
            if k < config.warmup_steps:
                u = rng.uniform(spec.control_lower, spec.control_upper)
                planner_status = "warmup"
            else:
                if not state.pending:
                    block = strategy.next_block(state.model, x, rng)
                    state.pending.extend(block[: config.steps - k])
                planner_status = strategy.last_status
                u = np.asarray(state.pending.popleft())
                if planner_status != "ok":
                    consecutive_fallbacks += 1
                    if consecutive_fallbacks >= _MAX_CONSECUTIVE_FALLBACKS:
                        raise RuntimeError("planner kept failing; aborting the trial")
                else:
                    consecutive_fallbacks = 0
            x_next = system.true_step(x, u)
            y = system.observe(x_next, rng)
            buffer_X.append(np.concatenate([x, u]))
            buffer_Y.append(y)
            step_log.append((k, tuple(float(v) for v in u), planner_status))
            x = x_next
            visited.append(x.copy())
            state.step = k + 1

            if (
                strategy.update_event == "step"
                or (strategy.update_event == "block" and not state.pending)
                or (strategy.update_event == "checkpoint" and (k + 1) in checkpoints)
            ):
                refresh_model()
            if (k + 1) in checkpoints:
                rmse_series.append((k + 1, rmse(state.model, grid)))
    except (SimulationDivergenceError, RuntimeError) as err:
        status = f"failed:{err}"

    coverage_final = (
        coverage(np.array(visited), spec.roi_lower, spec.roi_upper, cells)
        if status == "ok"
        else None
    )
    return TrialResult(
        seed=seed,
        status=status,
        rmse_series=rmse_series,
        coverage_final=coverage_final,
        wall_seconds=time.perf_counter() - t_start,
        n_controls=len(step_log),
        n_observations=len(step_log),
        final_dataset_size=dataset.n,
        step_log=step_log,
    )


def _trial_task(payload: tuple[int, ExperimentConfig, int]) -> tuple[int, TrialResult]:
    index, config, seed = payload
    return index, run_trial(config, seed)


def run_benchmark(configs: list[ExperimentConfig], workers: int = 1) -> BenchmarkReport:
    """Run every cell; trials are independent and may run in a process pool."""
    from .systems import make_system

    if not configs:
        raise ValueError("need at least one experiment configuration")
    # resolve systems and record the shared evaluation grids up front, so a
    # bad name or path fails before any trial starts
    digests = {}
    for config in configs:
        if config.system not in digests:
            system = make_system(config.system, config.systems_file)
            grid = build_evaluation_grid(
                system, config.metrics.grid_points, np.random.default_rng(config.eval_seed)
            )
            digests[config.system] = grid.digest()

    tasks = []
    for c_idx, config in enumerate(configs):
        for t_idx in range(config.trials):
            tasks.append((c_idx, config, config.trial_seed(t_idx)))
    indexed = list(enumerate(tasks))
    results: dict[int, TrialResult] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, result in pool.map(
                _trial_task, [(i, cfg, seed) for i, (_, cfg, seed) in indexed]
            ):
                results[i] = result
    else:
        for i, (_, cfg, seed) in indexed:
            results[i] = run_trial(cfg, seed)

    cells = [
        CellResult(system=c.system, strategy=c.strategy, steps=c.steps, results=[])
        for c in configs
    ]
    for i, (c_idx, _, _) in indexed:
        cells[c_idx].results.append(results[i])
    return BenchmarkReport(cells=cells, configs=configs, grid_digests=digests)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_rows(report: BenchmarkReport) -> list[dict]:
    """Aggregate rows: per-checkpoint RMSE mean/std, coverage on the final row."""
    rows = []
    for cell in report.cells:
        good = cell.successful
        n_failed = len(cell.results) - len(good)
        steps = sorted({step for r in good for step, _ in r.rmse_series})
        for step in steps:
            values = [dict(r.rmse_series)[step] for r in good if step in dict(r.rmse_series)]
            row = {
                "system": cell.system,
                "strategy": cell.strategy,
                "step": step,
                "rmse_mean": float(np.mean(values)),
                "rmse_std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
                "coverage_mean": None,
                "coverage_std": None,
                "n_trials": len(values),
                "n_failed": n_failed,
            }
            if step == cell.steps:
                covs = [r.coverage_final for r in good]
                row["coverage_mean"] = float(np.mean(covs)) if covs else None
                row["coverage_std"] = (
                    float(np.std(covs, ddof=1)) if len(covs) > 1 else (0.0 if covs else None)
                )
            rows.append(row)
        if not steps:  # cell with zero successful trials stays visible
            rows.append(
                {
                    "system": cell.system,
                    "strategy": cell.strategy,
                    "step": cell.steps,
                    "rmse_mean": None,
                    "rmse_std": None,
                    "coverage_mean": None,
                    "coverage_std": None,
                    "n_trials": 0,
                    "n_failed": n_failed,
                }
            )
    return rows


_TRIAL_HEADER = ["system", "strategy", "seed", "step", "rmse", "coverage_final", "wall_s", "status"]
_SUMMARY_HEADER = [
    "system", "strategy", "step", "rmse_mean", "rmse_std",
    "coverage_mean", "coverage_std", "n_trials", "n_failed",
]


def emit_results(report: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    """Write trials.csv, summary.csv, and a replayable manifest.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory '{out}': {err}") from err
    paths = {
        "trials": out / "trials.csv",
        "summary": out / "summary.csv",
        "manifest": out / "manifest.json",
    }

    with open(paths["trials"], "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_TRIAL_HEADER)
        for cell in report.cells:
            for r in cell.results:
                if r.ok:
                    for step, value in r.rmse_series:
                        writer.writerow(
                            [
                                cell.system, cell.strategy, r.seed, step, _fmt(value),
                                _fmt(r.coverage_final), _fmt(round(r.wall_seconds, 3)), r.status,
                            ]
                        )
                else:
                    writer.writerow(
                        [
                            cell.system, cell.strategy, r.seed, r.n_controls, "", "",
                            _fmt(round(r.wall_seconds, 3)), r.status,
                        ]
                    )

    with open(paths["summary"], "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_SUMMARY_HEADER)
        for row in summary_rows(report):
            writer.writerow([_fmt(row[key]) for key in _SUMMARY_HEADER])

    manifest = {
        "schema": 1,
        "package_version": report.package_version,
        "grid_digests": report.grid_digests,
        "configs": [asdict(c) for c in report.configs],
    }
    with open(paths["manifest"], "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return paths


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    for key, cls in (("optimizer", OptimizerConfig), ("gp", GPUpdateConfig), ("metrics", MetricsConfig)):
        if key in data and isinstance(data[key], dict):
            data[key] = cls(**data[key])
    return ExperimentConfig(**data)


def load_manifest(path: str | Path) -> list[ExperimentConfig]:
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("schema") != 1:
        raise ValueError(f"unsupported manifest schema in '{path}'")
    return [config_from_dict(c) for c in manifest["configs"]]


def replay(manifest_path: str | Path, out_dir: str | Path, workers: int = 1) -> dict[str, Path]:
    """Re-run the experiments recorded in a manifest and emit fresh results."""
    configs = load_manifest(manifest_path)
    report = run_benchmark(configs, workers=workers)
    return emit_results(report, out_dir)


_PER_SYSTEM_DEFAULTS = {
    "pendulum": {"steps": 150, "horizon": 15},
    "cartpole": {"steps": 150, "horizon": 15},
    "twolink": {"steps": 250, "horizon": 15},
}


def _resolve(raw, system: str, key: str):
    if isinstance(raw, dict):
        if system in raw:
            return raw[system]
        return _PER_SYSTEM_DEFAULTS.get(system, {}).get(key)
    return raw


def expand_config(data: dict | None, overrides: dict | None = None) -> list[ExperimentConfig]:
    """Build the (system x strategy) cell list from a config mapping.

    `steps` and `horizon` may be a single value or a per-system mapping;
    CLI overrides (system, strategy, trials, base_seed) narrow the run.
    """
    from .strategies import available_strategies

    data = dict(data or {})
    data.pop("workers", None)  # execution option, not part of a cell
    overrides = overrides or {}
    systems = data.pop("systems", ["pendulum"])
    strategies = data.pop("strategies", available_strategies())
    if isinstance(systems, str):
        systems = [systems]
    if isinstance(strategies, str):
        strategies = [strategies]
    if overrides.get("system"):
        systems = [overrides["system"]]
    if overrides.get("strategy"):
        strategies = [overrides["strategy"]]
    steps_raw = data.pop("steps", None)
    horizon_raw = data.pop("horizon", None)
    for key in ("trials", "base_seed"):
        if overrides.get(key) is not None:
            data[key] = overrides[key]

    configs = []
    for system in systems:
        per_system = dict(data)
        steps = _resolve(steps_raw, system, "steps")
        horizon = _resolve(horizon_raw, system, "horizon")
        defaults = _PER_SYSTEM_DEFAULTS.get(system, {})
        per_system["steps"] = steps if steps is not None else defaults.get("steps", 150)
        per_system["horizon"] = horizon if horizon is not None else defaults.get("horizon", 15)
        for strategy in strategies:
            configs.append(config_from_dict({**per_system, "system": system, "strategy": strategy}))
    return configs


def load_config_file(path: str | Path | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"config file '{path}' must contain a mapping")
    return data
