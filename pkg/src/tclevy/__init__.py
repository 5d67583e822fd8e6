"""Simulation of SDEs driven by time-changed Levy noise.

The driver is an inverse alpha-stable subordinator ``E``; the solution is
approximated by the stochastic theta method on the random grid ``D_{n delta}``.
"""

from .convergence import (LevelLadder, StrongErrorReport, coupled_simulation, fit_order, strong_error,
                          validate_increment_scaling, validate_inverse_moments, validate_solution_moment_bound)
from .errors import DomainError, ExperimentAborted, SolverError
from .kernels import BACKEND
from .models import (FunctionModel, PolynomialModel, audit, builtin_cubic, builtin_linear, constant_envelope,
                     power_envelope, predicted_order, time_modulated, weierstrass_envelope)
from .noise import JumpMeasureSpec, make_panel, no_jumps, two_point_jumps, uniform_jumps
from .schemes import ThetaConfig, delta_star, fbem_path, implicit_solve, interpolate, simulate, st_path
from .special import exp_moment_power, mittag_leffler, moment_oracle
from .subordinator import SubordinatorPath, StableSpec, generate_path, inverse_at, sample_stable_increment

__version__ = "0.1.0"
