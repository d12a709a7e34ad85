"""Exception types shared across the package."""


class GPExploreError(Exception):
    """Base class for all package-specific errors."""


class FactorizationError(GPExploreError):
    """Gram matrix could not be Cholesky-factorized even after jitter escalation."""

    def __init__(self, message: str, final_jitter: float):
        super().__init__(f"{message} (final jitter tried: {final_jitter:.3e})")
        self.final_jitter = final_jitter


class SimulationDivergenceError(GPExploreError):
    """A simulated plant produced a non-finite state."""

    def __init__(self, system: str, step: int | None = None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"simulation of '{system}' diverged{where}")
        self.system = system
        self.step = step


class PlanningFailureError(GPExploreError):
    """Trajectory optimization could not produce a finite candidate."""
