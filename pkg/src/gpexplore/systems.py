"""Simulated ground-truth plants: damped pendulum, two-link arm, cart-pole.

Each plant integrates analytic continuous-time equations of motion with
fixed-step RK4 over one discrete time step. Stepping is pure; observation
noise comes from an explicit generator, so trials are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import SimulationDivergenceError

_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class SystemSpec:
    """Dimensions, bounds, and noise level of one simulated plant."""

    name: str
    state_dim: int
    control_dim: int
    control_lower: np.ndarray
    control_upper: np.ndarray
    dt: float
    noise_variance: float
    roi_lower: np.ndarray
    roi_upper: np.ndarray
    initial_state: np.ndarray

    def __post_init__(self):
        for field in ("control_lower", "control_upper", "roi_lower", "roi_upper", "initial_state"):
            arr = np.asarray(getattr(self, field), dtype=float).reshape(-1).copy()
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        if np.any(self.control_lower >= self.control_upper):
            raise ValueError(f"{self.name}: control bounds must satisfy min < max")
        if np.any(self.roi_lower >= self.roi_upper):
            raise ValueError(f"{self.name}: region of interest must satisfy min < max")
        if self.dt <= 0:
            raise ValueError(f"{self.name}: dt must be positive")
        if self.noise_variance < 0:
            raise ValueError(f"{self.name}: noise variance must be nonnegative")
        inside = (self.initial_state >= self.roi_lower) & (self.initial_state <= self.roi_upper)
        if not np.all(inside):
            raise ValueError(f"{self.name}: initial state lies outside the region of interest")


@dataclass(frozen=True)
class Trajectory:
    """Applied controls with the states and noisy observations they produced.

    states has one more row than controls; observations[k] is the noisy
    measurement of states[k + 1].
    """

    states: np.ndarray
    controls: np.ndarray
    observations: np.ndarray

    def __len__(self) -> int:
        return self.controls.shape[0]

    def records(self):
        """Yield (step, state, control, observation) tuples."""
        for k in range(len(self)):
            yield k, self.states[k], self.controls[k], self.observations[k]


class DynamicalSystem:
    """Base plant: subclasses provide the continuous-time derivative."""

    def __init__(self, spec: SystemSpec):
        self.spec = spec

    def _ode(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def true_step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Integrate one dt with classic RK4. Deterministic."""
        x = np.asarray(x, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float).reshape(-1)
        if x.shape[0] != self.spec.state_dim:
            raise ValueError(f"state must have dimension {self.spec.state_dim}")
        if u.shape[0] != self.spec.control_dim:
            raise ValueError(f"control must have dimension {self.spec.control_dim}")
        if not np.all(np.isfinite(x)):
            raise ValueError("state contains non-finite entries")
        lo, hi = self.spec.control_lower, self.spec.control_upper
        if np.any(u < lo - _BOUND_TOL) or np.any(u > hi + _BOUND_TOL):
            raise ValueError(f"control {u} outside bounds [{lo}, {hi}]")
        dt = self.spec.dt
        k1 = self._ode(x, u)
        k2 = self._ode(x + 0.5 * dt * k1, u)
        k3 = self._ode(x + 0.5 * dt * k2, u)
        k4 = self._ode(x + dt * k3, u)
        x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_next)):
            raise SimulationDivergenceError(self.spec.name)
        return x_next

    def observe(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """State plus i.i.d. Gaussian noise per dimension."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.spec.noise_variance == 0.0:
            return x.copy()
        return x + np.sqrt(self.spec.noise_variance) * rng.standard_normal(x.shape)

    def rollout(self, x0: np.ndarray, controls: np.ndarray, rng: np.random.Generator) -> Trajectory:
        """Apply a control sequence from x0, observing after every step."""
        controls = np.atleast_2d(np.asarray(controls, dtype=float))
        if controls.size == 0:
            controls = controls.reshape(0, self.spec.control_dim)
        states = [np.asarray(x0, dtype=float).reshape(-1)]
        observations = []
        for k in range(controls.shape[0]):
            try:
                x_next = self.true_step(states[-1], controls[k])
            except SimulationDivergenceError as err:
                raise SimulationDivergenceError(self.spec.name, step=k) from err
            states.append(x_next)
            observations.append(self.observe(x_next, rng))
        return Trajectory(
            states=np.array(states),
            controls=controls.copy(),
            observations=np.array(observations).reshape(len(observations), self.spec.state_dim),
        )


class Pendulum(DynamicalSystem):
    """Torque-limited damped pendulum, angle measured from hanging down."""

    def __init__(self, spec: SystemSpec, params: dict):
        super().__init__(spec)
        self.mass = float(params["mass"])
        self.length = float(params["length"])
        self.damping = float(params["damping"])
        self.gravity = float(params["gravity"])

    def _ode(self, x, u):
        theta, omega = x
        inertia = self.mass * self.length**2
        torque = u[0] - self.damping * omega - self.mass * self.gravity * self.length * np.sin(theta)
        return np.array([omega, torque / inertia])

    def energy(self, x) -> float:
        """Mechanical energy, zero at the hanging rest state."""
        theta, omega = x
        kinetic = 0.5 * self.mass * self.length**2 * omega**2
        potential = self.mass * self.gravity * self.length * (1.0 - np.cos(theta))
        return float(kinetic + potential)


class TwoLinkArm(DynamicalSystem):
    """Two-link arm in the horizontal plane with viscous joint friction.

    Standard rigid-body form M(q) ddq + C(q, dq) + F dq = tau; no gravity,
    so any resting configuration is an equilibrium.
    """

    def __init__(self, spec: SystemSpec, params: dict):
        super().__init__(spec)
        for key in ("m1", "m2", "l1", "l2", "r1", "r2", "I1", "I2", "f1", "f2"):
            setattr(self, key, float(params[key]))

    def _ode(self, x, u):
        q2 = x[1]
        dq = x[2:]
        c2 = np.cos(q2)
        s2 = np.sin(q2)
        a = self.I2 + self.m2 * self.r2**2
        b = self.m2 * self.l1 * self.r2
        m11 = self.I1 + self.m1 * self.r1**2 + self.m2 * (self.l1**2 + self.r2**2) + 2 * b * c2 + self.I2
        m12 = a + b * c2
        M = np.array([[m11, m12], [m12, a]])
        coriolis = np.array(
            [-b * s2 * dq[1] * (dq[1] + 2 * dq[0]), b * s2 * dq[0] ** 2]
        )
        friction = np.array([self.f1, self.f2]) * dq
        ddq = np.linalg.solve(M, u - coriolis - friction)
        return np.concatenate([dq, ddq])


class CartPole(DynamicalSystem):
    """Cart with a pendulum hanging below it; force acts on the cart."""

    def __init__(self, spec: SystemSpec, params: dict):
        super().__init__(spec)
        self.cart_mass = float(params["cart_mass"])
        self.pole_mass = float(params["pole_mass"])
        self.pole_length = float(params["pole_length"])
        self.gravity = float(params["gravity"])
        self.cart_damping = float(params["cart_damping"])
        self.pole_damping = float(params["pole_damping"])

    def _ode(self, x, u):
        _, v, theta, omega = x
        m, M, l = self.pole_mass, self.cart_mass, self.pole_length
        ct, st = np.cos(theta), np.sin(theta)
        # (M+m) dv + m l domega ct = F - c_cart v + m l omega^2 st
        # m l dv ct + m l^2 domega = -m g l st - c_pole omega
        A = np.array([[M + m, m * l * ct], [m * l * ct, m * l**2]])
        rhs = np.array(
            [
                u[0] - self.cart_damping * v + m * l * omega**2 * st,
                -m * self.gravity * l * st - self.pole_damping * omega,
            ]
        )
        dv, domega = np.linalg.solve(A, rhs)
        return np.array([v, dv, omega, domega])


_SYSTEM_CLASSES = {"pendulum": Pendulum, "twolink": TwoLinkArm, "cartpole": CartPole}


def _default_table() -> dict:
    text = resources.files("gpexplore.data").joinpath("systems.yaml").read_text()
    return yaml.safe_load(text)


def load_system_table(path: str | Path | None = None) -> dict:
    """Load the plant parameter table (packaged file unless a path is given)."""
    if path is None:
        return _default_table()
    with open(path) as f:
        return yaml.safe_load(f)


def available_systems(path: str | Path | None = None) -> list[str]:
    return sorted(load_system_table(path).keys())


def make_system(name: str, path: str | Path | None = None) -> DynamicalSystem:
    """Build a plant from the parameter table."""
    table = load_system_table(path)
    if name not in table:
        raise ValueError(f"unknown system '{name}'; available: {sorted(table)}")
    params = table[name]
    bounds = np.asarray(params["control_bounds"], dtype=float)
    roi = np.asarray(params["region_of_interest"], dtype=float)
    spec = SystemSpec(
        name=name,
        state_dim=roi.shape[0],
        control_dim=bounds.shape[0],
        control_lower=bounds[:, 0],
        control_upper=bounds[:, 1],
        dt=float(params["dt"]),
        noise_variance=float(params["noise_variance"]),
        roi_lower=roi[:, 0],
        roi_upper=roi[:, 1],
        initial_state=np.asarray(params["initial_state"], dtype=float),
    )
    return _SYSTEM_CLASSES[name](spec, params)
