"""Exact Gaussian-process regression with a squared-exponential ARD kernel.

One independent single-output GP per output dimension, all sharing the same
inputs. Models are immutable: fitting, adding observations, and
hyperparameter optimization all return new values, so a fitted model is safe
to read from concurrent workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import FactorizationError

_log = logging.getLogger(__name__)

# Diagonal jitter added before factorization, relative to signal variance.
# Escalates by x10 on failure, up to the cap.
JITTER_REL = 1e-8
JITTER_REL_MAX = 1e-2

# Predicted variances are clamped here so differential entropy stays finite.
VARIANCE_FLOOR = 1e-12

# 0.5 * log(2*pi*e), the per-dimension entropy of a unit-variance Gaussian.
_ENTROPY_CONST = 0.5 * float(np.log(2.0 * np.pi * np.e))

# Log-hyperparameters are clipped to this box during optimization to keep
# the marginal likelihood finite on degenerate data.
_LOG_HYPER_BOUND = 15.0


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel and noise parameters of one single-output GP.

    Attributes
    ----------
    signal_variance : float
        Kernel amplitude (output units squared).
    lengthscales : np.ndarray
        One positive lengthscale per input dimension (input units).
    noise_variance : float
        Observation noise variance (output units squared).
    """

    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).reshape(-1).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not np.isfinite(self.signal_variance) or self.signal_variance <= 0.0:
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0.0):
            raise ValueError("lengthscales must be strictly positive and finite")
        if not np.isfinite(self.noise_variance) or self.noise_variance <= 0.0:
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")
        if self.noise_variance < JITTER_REL * self.signal_variance:
            raise ValueError(
                "noise_variance below the jitter floor "
                f"({JITTER_REL * self.signal_variance:.3e})"
            )

    @property
    def input_dim(self) -> int:
        return self.lengthscales.size

    def to_log_vector(self) -> np.ndarray:
        """Pack as (log sig_var, log ls_1..d, log noise_var)."""
        return np.log(
            np.concatenate(([self.signal_variance], self.lengthscales, [self.noise_variance]))
        )

    @staticmethod
    def from_log_vector(v: np.ndarray) -> "Hyperparameters":
        v = np.asarray(v, dtype=float)
        return Hyperparameters(
            signal_variance=float(np.exp(v[0])),
            lengthscales=np.exp(v[1:-1]),
            noise_variance=float(np.exp(v[-1])),
        )


@dataclass(frozen=True)
class Dataset:
    """Training data shared by all output dimensions.

    inputs:  (n, d_in) state-action pairs.
    targets: (n, d_out) noisy next-state observations.
    """

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float)).copy()
        Y = np.atleast_2d(np.asarray(self.targets, dtype=float)).copy()
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"inputs have {X.shape[0]} rows but targets have {Y.shape[0]}")
        if X.size and not np.all(np.isfinite(X)):
            raise ValueError("inputs contain non-finite entries")
        if Y.size and not np.all(np.isfinite(Y)):
            raise ValueError("targets contain non-finite entries")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", Y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    @staticmethod
    def empty(input_dim: int, output_dim: int) -> "Dataset":
        return Dataset(np.zeros((0, input_dim)), np.zeros((0, output_dim)))

    def extended(self, new_inputs: np.ndarray, new_targets: np.ndarray) -> "Dataset":
        new_inputs = np.atleast_2d(np.asarray(new_inputs, dtype=float))
        new_targets = np.atleast_2d(np.asarray(new_targets, dtype=float))
        if new_inputs.shape[0] == 0:
            return self
        if new_inputs.shape[1] != self.input_dim or new_targets.shape[1] != self.output_dim:
            raise ValueError("new rows are dimensionally inconsistent with the dataset")
        return Dataset(
            np.vstack([self.inputs, new_inputs]), np.vstack([self.targets, new_targets])
        )


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and per-dimension variance at one query point."""

    mean: np.ndarray
    variance: np.ndarray


def kernel_eval(a: np.ndarray, b: np.ndarray, h: Hyperparameters) -> float:
    """Squared-exponential ARD kernel k(a, b)."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size != h.input_dim or b.size != h.input_dim:
        raise ValueError(
            f"kernel inputs must have dimension {h.input_dim}, got {a.size} and {b.size}"
        )
    r2 = float(np.sum(((a - b) / h.lengthscales) ** 2))
    return h.signal_variance * float(np.exp(-0.5 * r2))


def _cross_kernel(A: np.ndarray, B: np.ndarray, h: Hyperparameters) -> np.ndarray:
    """Kernel matrix k(A_i, B_j), shape (len(A), len(B))."""
    As = A / h.lengthscales
    Bs = B / h.lengthscales
    sq = (
        np.sum(As**2, axis=1)[:, None]
        + np.sum(Bs**2, axis=1)[None, :]
        - 2.0 * (As @ Bs.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return h.signal_variance * np.exp(-0.5 * sq)


def _gram(X: np.ndarray, h: Hyperparameters) -> np.ndarray:
    K = _cross_kernel(X, X, h)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, h.signal_variance)
    return K


def _factorize(K: np.ndarray, h: Hyperparameters) -> tuple[np.ndarray, float]:
    """Cholesky of K + (noise + jitter) I with jitter escalation.

    Returns the lower factor and the absolute jitter that succeeded.
    """
    n = K.shape[0]
    rel = JITTER_REL
    while True:
        jitter = rel * h.signal_variance
        try:
            L = cholesky(K + (h.noise_variance + jitter) * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        if rel >= JITTER_REL_MAX:
            raise FactorizationError(
                "Gram matrix is not positive definite", final_jitter=rel * h.signal_variance
            )
        rel *= 10.0


@dataclass(frozen=True)
class _PredictCache:
    """Per-dimension precomputations that make batched prediction cheap.

    scaled_inputs = X / lengthscales, sq_norms its squared row norms,
    scaled_weights = signal_variance * alpha, and prec is
    signal_variance^2 * (K + noise I)^-1, so that for the normalized
    cross-kernel E: mean = E^T scaled_weights and
    variance = signal_variance - sum(E * (prec @ E), axis=0).
    """

    scaled_inputs: np.ndarray
    sq_norms: np.ndarray
    scaled_weights: np.ndarray
    prec: np.ndarray


@dataclass(frozen=True)
class GPModel:
    """Independent per-output-dimension GPs over a shared dataset.

    chol_factors[d] is the lower Cholesky factor of K_d + (noise_d + jitter_d) I
    and weights[d] = (K_d + noise_d I)^-1 Y[:, d]. Instances are immutable.
    """

    dataset: Dataset
    hyperparameters: tuple[Hyperparameters, ...]
    chol_factors: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    jitters: tuple[float, ...]
    caches: tuple[_PredictCache, ...]

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def input_dim(self) -> int:
        return self.hyperparameters[0].input_dim

    @property
    def output_dim(self) -> int:
        return len(self.hyperparameters)

    @staticmethod
    def prior(hyperparameters: list[Hyperparameters] | tuple[Hyperparameters, ...]) -> "GPModel":
        """Model with no data: zero mean, prior variance everywhere."""
        hyperparameters = tuple(hyperparameters)
        d_in = hyperparameters[0].input_dim
        empty_cache = _PredictCache(
            np.zeros((0, d_in)), np.zeros(0), np.zeros(0), np.zeros((0, 0))
        )
        return GPModel(
            dataset=Dataset.empty(d_in, len(hyperparameters)),
            hyperparameters=hyperparameters,
            chol_factors=tuple(np.zeros((0, 0)) for _ in hyperparameters),
            weights=tuple(np.zeros(0) for _ in hyperparameters),
            jitters=tuple(JITTER_REL * h.signal_variance for h in hyperparameters),
            caches=tuple(empty_cache for _ in hyperparameters),
        )


def _build_cache(inputs: np.ndarray, h: Hyperparameters, L: np.ndarray, alpha: np.ndarray) -> _PredictCache:
    Xs = inputs / h.lengthscales
    K_inv = cho_solve((L, True), np.eye(L.shape[0]), check_finite=False)
    return _PredictCache(
        scaled_inputs=Xs,
        sq_norms=np.sum(Xs**2, axis=1),
        scaled_weights=h.signal_variance * alpha,
        prec=h.signal_variance**2 * K_inv,
    )


def fit(dataset: Dataset, hyperparameters: list[Hyperparameters] | tuple[Hyperparameters, ...]) -> GPModel:
    """Factorize the Gram matrix and precompute weights for each output dim."""
    hyperparameters = tuple(hyperparameters)
    if len(hyperparameters) != dataset.output_dim:
        raise ValueError(
            f"need {dataset.output_dim} hyperparameter sets, got {len(hyperparameters)}"
        )
    for h in hyperparameters:
        if h.input_dim != dataset.input_dim:
            raise ValueError("hyperparameter lengthscales do not match the input dimension")
    if dataset.n == 0:
        return GPModel.prior(hyperparameters)
    chols, weights, jitters, caches = [], [], [], []
    for d, h in enumerate(hyperparameters):
        K = _gram(dataset.inputs, h)
        L, jitter = _factorize(K, h)
        alpha = cho_solve((L, True), dataset.targets[:, d], check_finite=False)
        chols.append(L)
        weights.append(alpha)
        jitters.append(jitter)
        caches.append(_build_cache(dataset.inputs, h, L, alpha))
    return GPModel(
        dataset, hyperparameters, tuple(chols), tuple(weights), tuple(jitters), tuple(caches)
    )


def predict_batch(model: GPModel, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at many query points.

    Z is (q, d_in); returns means (q, d_out) and variances (q, d_out),
    variances clamped at the floor.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != model.input_dim:
        raise ValueError(f"queries must have dimension {model.input_dim}, got {Z.shape[1]}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("query points contain non-finite entries")
    q = Z.shape[0]
    means = np.zeros((q, model.output_dim))
    variances = np.zeros((q, model.output_dim))
    for d, h in enumerate(model.hyperparameters):
        if model.n == 0:
            variances[:, d] = h.signal_variance
            continue
        cache = model.caches[d]
        Qs = Z / h.lengthscales
        sq = cache.sq_norms[:, None] + np.sum(Qs**2, axis=1)[None, :] - 2.0 * (cache.scaled_inputs @ Qs.T)
        E = np.exp(-0.5 * np.maximum(sq, 0.0))  # normalized cross-kernel k_*/sig_var
        means[:, d] = E.T @ cache.scaled_weights
        variances[:, d] = h.signal_variance - np.einsum("ij,ij->j", E, cache.prec @ E)
    np.maximum(variances, VARIANCE_FLOOR, out=variances)
    return means, variances


def predict(model: GPModel, z: np.ndarray) -> Prediction:
    """Posterior mean and variance at a single state-action query."""
    means, variances = predict_batch(model, np.asarray(z, dtype=float).reshape(1, -1))
    return Prediction(mean=means[0], variance=variances[0])


def entropy_batch(model: GPModel, Z: np.ndarray) -> np.ndarray:
    """Differential entropy summed over output dimensions, one value per query."""
    _, variances = predict_batch(model, Z)
    return np.sum(_ENTROPY_CONST + 0.5 * np.log(variances), axis=1)


def entropy(model: GPModel, z: np.ndarray) -> float:
    """Sum of per-output-dimension differential entropies at one query."""
    return float(entropy_batch(model, np.asarray(z, dtype=float).reshape(1, -1))[0])


def log_marginal_likelihood(
    dataset: Dataset, h: Hyperparameters, dim: int
) -> tuple[float, np.ndarray]:
    """Marginal log likelihood of output `dim` and its analytic gradient.

    The gradient is taken with respect to the log-hyperparameters in the
    order (log signal_variance, log lengthscales..., log noise_variance).
    """
    if dataset.n == 0:
        raise ValueError("log marginal likelihood requires a non-empty dataset")
    X = dataset.inputs
    y = dataset.targets[:, dim]
    n = dataset.n
    K = _gram(X, h)
    L, jitter = _factorize(K, h)
    alpha = cho_solve((L, True), y, check_finite=False)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * float(np.log(2.0 * np.pi))
    )
    K_inv = cho_solve((L, True), np.eye(n), check_finite=False)
    # d(LML)/d(theta) = 0.5 tr((alpha alpha^T - K_inv) dK/dtheta)
    A = np.outer(alpha, alpha) - K_inv
    grad = np.zeros(h.input_dim + 2)
    # Both the kernel block and the jitter scale linearly with signal_variance.
    grad[0] = 0.5 * (float(np.sum(A * K)) + jitter * float(np.trace(A)))
    for i in range(h.input_dim):
        di = X[:, i] / h.lengthscales[i]
        D = (di[:, None] - di[None, :]) ** 2
        grad[1 + i] = 0.5 * float(np.sum(A * (K * D)))
    grad[-1] = 0.5 * h.noise_variance * float(np.trace(A))
    return value, grad


@dataclass(frozen=True)
class HyperOptConfig:
    """Settings for marginal-likelihood maximization over log-hyperparameters.

    lengthscale_bounds, when given, is one (lower, upper) pair per input
    dimension in input units. Bounding lengthscales near the scale of the
    explorable region keeps the posterior variance informative there;
    unbounded maximum-likelihood fits on data confined to a small
    neighborhood often drift to near-flat kernels that report false
    confidence far from the data.
    """

    restarts: int = 3
    max_iterations: int = 100
    gradient_tolerance: float = 1e-5
    min_fit_points: int = 10
    optimize_noise: bool = False
    restart_spread: float = 1.0
    lengthscale_bounds: tuple[tuple[float, float], ...] | None = None
    # (lower, upper) for the signal variance. A lower bound at the scale of
    # the explorable output range stops maximum likelihood from writing the
    # whole signal off as noise when the data is still confined near the
    # start state, which would freeze both the posterior mean and the
    # entropy landscape.
    signal_variance_bounds: tuple[float, float] | None = None


def optimize_hyperparameters(
    dataset: Dataset,
    init: Hyperparameters,
    config: HyperOptConfig,
    dim: int,
    rng: np.random.Generator,
) -> Hyperparameters:
    """Maximize the marginal log likelihood with multi-start L-BFGS-B.

    The search runs in log-hyperparameter space with analytic gradients;
    the noise variance is held fixed unless config.optimize_noise is set.
    Never returns hyperparameters worse than `init`; if no restart improves
    on it, `init` is returned unchanged and a warning is logged.
    """
    from scipy.optimize import minimize

    if dataset.n < config.min_fit_points or config.max_iterations == 0:
        return init

    n_params = init.input_dim + 2

    def negative_lml(v: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            value, grad = log_marginal_likelihood(dataset, Hyperparameters.from_log_vector(v), dim)
        except (FactorizationError, ValueError):
            return 1e25, np.zeros(v.size)
        return -value, -grad

    bounds = [(-_LOG_HYPER_BOUND, _LOG_HYPER_BOUND)] * n_params
    v_init = init.to_log_vector()
    if not config.optimize_noise:
        bounds[-1] = (v_init[-1], v_init[-1])
        # keep the noise above the jitter floor of the signal variance
        bounds[0] = (-_LOG_HYPER_BOUND, min(_LOG_HYPER_BOUND, v_init[-1] - np.log(JITTER_REL)))
    if config.lengthscale_bounds is not None:
        if len(config.lengthscale_bounds) != init.input_dim:
            raise ValueError("need one lengthscale bound pair per input dimension")
        for i, (lo, hi) in enumerate(config.lengthscale_bounds):
            bounds[1 + i] = (np.log(lo), np.log(hi))
    if config.signal_variance_bounds is not None:
        lo, hi = config.signal_variance_bounds
        bounds[0] = (np.log(lo), min(bounds[0][1], np.log(hi)))
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])

    # the improvement guarantee is relative to the init as given; the search
    # itself starts from its projection into the bounds
    init_val, init_neg_grad = negative_lml(v_init)
    init_val = -init_val
    v_start = np.clip(v_init, lower, upper)
    # near a warm optimum, L-BFGS-B legitimately stops without improving;
    # only a clearly unconverged start deserves a warning. Gradient
    # components pushing into an active bound cannot be followed and are
    # projected out.
    init_grad = -init_neg_grad
    at_lower = (v_start <= lower) & (init_grad < 0)
    at_upper = (v_start >= upper) & (init_grad > 0)
    projected = np.where(at_lower | at_upper, 0.0, init_grad)
    near_optimum = np.linalg.norm(projected) < 1e-2 * (1.0 + abs(init_val))
    best_v, best_val = v_init, init_val
    for restart in range(max(1, config.restarts)):
        v0 = v_start.copy()
        if restart > 0:
            v0 += rng.uniform(-config.restart_spread, config.restart_spread, size=n_params)
            v0 = np.clip(v0, lower, upper)
        result = minimize(
            negative_lml,
            v0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": config.max_iterations, "gtol": config.gradient_tolerance},
        )
        if np.isfinite(result.fun) and -result.fun > best_val:
            best_val, best_v = -result.fun, result.x

    if best_val <= init_val:
        if not near_optimum:
            _log.warning("hyperparameter optimization did not improve on init (dim %d)", dim)
        return init

    out = Hyperparameters.from_log_vector(best_v)
    if not config.optimize_noise:
        out = replace(out, noise_variance=init.noise_variance)
    return out


def initial_hyperparameters(
    dataset: Dataset,
    noise_variance: float,
    dim: int,
    lengthscale_bounds: tuple[tuple[float, float], ...] | None = None,
    signal_variance_bounds: tuple[float, float] | None = None,
) -> Hyperparameters:
    """Data-driven starting point: input stds as lengthscales, target variance as amplitude."""
    if dataset.n == 0:
        ls = np.ones(dataset.input_dim)
        sig = 1.0
    else:
        ls = np.std(dataset.inputs, axis=0)
        ls[~(ls > 1e-8)] = 1.0
        sig = float(np.var(dataset.targets[:, dim]))
        if not sig > 1e-8:
            sig = 1.0
    if lengthscale_bounds is not None:
        lo = np.array([b[0] for b in lengthscale_bounds])
        hi = np.array([b[1] for b in lengthscale_bounds])
        ls = np.clip(ls, lo, hi)
    if signal_variance_bounds is not None:
        sig = float(np.clip(sig, *signal_variance_bounds))
    sig = min(sig, noise_variance / JITTER_REL)  # keep noise above the jitter floor
    return Hyperparameters(sig, ls, noise_variance)


def add_observations(model: GPModel, new_inputs: np.ndarray, new_targets: np.ndarray) -> GPModel:
    """Extend the model with new rows under unchanged hyperparameters.

    Uses a block extension of each Cholesky factor; falls back to a full
    refit (with jitter escalation) if the Schur complement is not positive
    definite. Predictions match a full refit to numerical tolerance.
    """
    new_inputs = np.atleast_2d(np.asarray(new_inputs, dtype=float))
    new_targets = np.atleast_2d(np.asarray(new_targets, dtype=float))
    if new_inputs.shape[0] == 0:
        return model
    dataset = model.dataset.extended(new_inputs, new_targets)
    if model.n == 0:
        return fit(dataset, model.hyperparameters)
    m = new_inputs.shape[0]
    chols, weights, caches = [], [], []
    for d, h in enumerate(model.hyperparameters):
        L_old = model.chol_factors[d]
        jitter = model.jitters[d]
        B = _cross_kernel(model.dataset.inputs, new_inputs, h)
        C = _gram(new_inputs, h) + (h.noise_variance + jitter) * np.eye(m)
        S = solve_triangular(L_old, B, lower=True, check_finite=False)
        try:
            L_corner = cholesky(C - S.T @ S, lower=True)
        except np.linalg.LinAlgError:
            _log.warning("block Cholesky extension failed, refitting from scratch")
            return fit(dataset, model.hyperparameters)
        L = np.zeros((model.n + m, model.n + m))
        L[: model.n, : model.n] = L_old
        L[model.n :, : model.n] = S.T
        L[model.n :, model.n :] = L_corner
        alpha = cho_solve((L, True), dataset.targets[:, d], check_finite=False)
        chols.append(L)
        weights.append(alpha)
        caches.append(_build_cache(dataset.inputs, h, L, alpha))
    return GPModel(
        dataset, model.hyperparameters, tuple(chols), tuple(weights), model.jitters, tuple(caches)
    )
