"""Exception hierarchy shared by the solvers, the analysis layer and the CLI."""

from __future__ import annotations


class NemstripError(Exception):
    """Base class for all package errors."""


class ContractViolation(NemstripError, ValueError):
    """An input broke a documented precondition (symmetry, trace, shape...)."""


class SingularScaleError(NemstripError, ValueError):
    """The scale parameter epsilon is zero where a 1/epsilon factor is needed."""


class CompatibilityError(NemstripError, ValueError):
    """A Poisson or antiderivative solve was asked for an incompatible source."""


class InsufficientData(NemstripError, ValueError):
    """A fit was requested on too short a time series."""


class SolverError(NemstripError, RuntimeError):
    """Base for time-stepping failures; carries the simulation time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t={t!r})")
        self.t = t


class StepRejected(SolverError):
    """The requested time step violates the CFL rule."""

    def __init__(self, t: float, dt: float, dt_max: float):
        super().__init__(f"step rejected: dt={dt!r} exceeds CFL limit {dt_max!r}", t)
        self.dt = dt
        self.dt_max = dt_max


class BlowUp(SolverError):
    """Non-finite values appeared in the state."""

    def __init__(self, t: float, field: str = "state"):
        super().__init__(f"blow-up: non-finite values in {field}", t)
        self.field = field


class SingularThetaError(NemstripError, ValueError):
    """The shear ratio theta is undefined or too close to a singular value."""

    def __init__(self, message: str, location: tuple[int, ...] | None = None):
        loc = "" if location is None else f" at grid index {location}"
        super().__init__(message + loc)
        self.location = location


class ShootingError(NemstripError, RuntimeError):
    """The Blasius shooting iteration did not converge."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message}; bracket={bracket}")
        self.bracket = bracket


class HypothesisViolation(NemstripError, RuntimeError):
    """A runtime-monitored theorem hypothesis was violated."""


class ConfigError(NemstripError, ValueError):
    """One or more configuration errors, each tagged with its line number."""

    def __init__(self, errors: list[tuple[int | None, str]]):
        self.errors = list(errors)
        lines = []
        for lineno, msg in self.errors:
            lines.append(f"line {lineno}: {msg}" if lineno is not None else msg)
        super().__init__("; ".join(lines))
