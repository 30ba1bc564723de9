"""Minimizing-movement schemes with step-dependent dissipation weights.

Library layout:

- ``perturbation``: dissipation-weight schedules and their interpolation
- ``scheme``: implicit descent steps, trajectories, energy balance
- ``lattice``: descent of a linear energy on one-dimensional lattices
- ``wiggly``: homogenized velocities for tilted periodic potentials
- ``crystal``: rectangle curvature motion driven by a discrete perimeter
- ``config``/``report``/``cli``: experiment configs, delimited output, figures
"""

__version__ = "0.1.0"

from .errors import (
    BifurcationError,
    ConfigError,
    DegenerateInputError,
    DegenerateStepError,
    DivergedError,
    IncreaseTMaxError,
    NearSingularError,
    NoCycleError,
    SimulationError,
    UnsupportedScheduleError,
)
from .perturbation import PerturbationSchedule

__all__ = [
    "__version__",
    "PerturbationSchedule",
    "SimulationError",
    "BifurcationError",
    "DegenerateStepError",
    "DegenerateInputError",
    "NoCycleError",
    "IncreaseTMaxError",
    "NearSingularError",
    "DivergedError",
    "UnsupportedScheduleError",
    "ConfigError",
]
