"""Delayed stochastic recursive optimal control: SDDE simulation, monotone BSDE solver,
lattice value functions, DPP residuals, HJB/viscosity checks and an Epstein-Zin application."""

from .core import (BudgetError, CoefficientSpec, ControlLattice, GeneratorSpec, GridError,
                   PathSegment, TimeGrid, make_grid, sup_norm_distance)
from .sdde import PathEnsemble, SimulationError, simulate, segment_at, moment_estimate
from .bsde import (BsdeSolution, NewtonError, RegressionError, SegmentBasis, comparison_check,
                   implicit_scalar_step, solve)
from .control import (ControlProblem, MCConfig, ValueEstimate, backward_semigroup, cost_functional,
                      dpp_residual, value_function, value_regularity_probe)
from .mollify import MollifierSpec, mollify, truncate, uniform_convergence_audit
from .hjb import Projection, ProjectedState, TestFunction, hamiltonian, ellipticity_audit
from .ezapp import EzParams, RamseyModel, ez_generator, solve_ez

__version__ = "0.1.0"
