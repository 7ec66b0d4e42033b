"""Obstacle problems for pure-jump Lévy dynamics: simulation, optimal stopping,
a finite-difference cross-check solver, and regularity probes."""
__version__ = "0.1.0"

from .coefficients import DriftSpec, JumpCoefficient
from .errors import (ConfigError, IntegrabilityError, LevyObstacleError,
                     NumericalPreconditionError, ParameterDomainError, ValidationError)
from .fourier import european_call, european_put
from .jump_sde import PathBatch, SimConfig, simulate_batch, simulate_coupled, vg_exact_increment
from .levy_models import (calibrate_drift, cgmy, characteristic_exponent, empty_measure,
                          levy_density, tabulated, variance_gamma, verify_assumptions)
from .optimal_stopping import (PricingConfig, ValueSurface, dpp_check, exercise_boundary,
                               price_evolution, price_perpetual)
from .pide_solver import Discretization, comparison_probe, refine_study, solve_pide
from .problem import ProblemData, affine_clamped, call, constant, put, table
from .regularity_probe import holder_fit, probe_evolution, probe_stationary
