"""Exception types shared across the simulation modules.

Every error that maps to a well-defined mathematical degeneracy carries
enough context (offending step, candidates, thresholds) for a driver to
report it without re-running the computation.
"""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for domain errors raised by the solvers."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = dict(context)

    def payload(self) -> dict:
        """Machine-readable form used by the CLI error channel."""
        return {
            "error": type(self).__name__,
            "message": str(self),
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(value):
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return repr(value)


class BifurcationError(SimulationError):
    """A step problem has two global minimizers within tie tolerance."""


class DegenerateStepError(SimulationError):
    """A floor/threshold argument sits on (or too close to) a jump point."""


class DegenerateInputError(SimulationError):
    """Input data sits exactly on a regime boundary where the limit is ambiguous."""


class NoCycleError(SimulationError):
    """The periodic recursion failed to settle into a cycle within the step cap."""


class IncreaseTMaxError(SimulationError):
    """The motion is still pinned at the top of the bisection bracket."""


class NearSingularError(SimulationError):
    """A quadrature cannot reach the requested accuracy (integrand blowup)."""


class DivergedError(SimulationError):
    """Window analysis failed: the objective is unbounded below or the declared
    slope bound is violated, so no finite search window is trustworthy."""


class UnsupportedScheduleError(SimulationError):
    """The requested quantity is undefined for this schedule kind."""


class ConfigError(Exception):
    """Invalid experiment configuration; collects all messages, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

    def payload(self) -> dict:
        return {"error": "ConfigError", "message": "invalid configuration", "errors": self.errors}
