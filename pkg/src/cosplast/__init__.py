"""Finite-strain Cosserat plasticity on a structured grid.

Quaternion-parameterized micro-rotations, a discrete incremental energy
functional, and a limited-memory quasi-Newton solver with a two-pass
predictor/corrector preconditioning scheme.
"""

from . import backends
from .backends import backend_name
from .energy import (EnergyEvaluationError, MaterialParams, PlasticHistory,
                     constraint_violation, energy_and_gradient,
                     hardening_update, stretch_energy_integral, total_energy,
                     total_gradient)
from .grid import (DofLayout, FieldState, Grid3, GridError, build_grid,
                   dump_fields)
from .optimizer import (BandZ, CholeskyScalingH0, CurvaturePairs,
                        DivergenceError, IdentityH0, LbfgsConfig,
                        LineSearchError, MinimizeResult, PreconditionerError,
                        WarmPairsH0, minimize)
from .solver import (ScenarioSpec, SolverError, StepReport, run_simulation,
                     run_time_step)

__version__ = "0.1.0"

__all__ = [
    "backends", "backend_name", "__version__",
    "MaterialParams", "PlasticHistory", "EnergyEvaluationError",
    "energy_and_gradient", "total_energy", "total_gradient",
    "constraint_violation", "stretch_energy_integral", "hardening_update",
    "Grid3", "DofLayout", "FieldState", "GridError", "build_grid",
    "dump_fields",
    "LbfgsConfig", "CurvaturePairs", "MinimizeResult", "minimize",
    "IdentityH0", "CholeskyScalingH0", "BandZ", "WarmPairsH0",
    "LineSearchError", "PreconditionerError", "DivergenceError",
    "ScenarioSpec", "StepReport", "SolverError", "run_simulation",
    "run_time_step",
]
