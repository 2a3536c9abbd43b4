"""Finite-difference solvers for Allen-Cahn equations with volume constraints."""
from .grid import Field, Grid, Norm, apply_neumann_bc, grad_inner, inner_l2, laplacian_h, norm, quad
from .model import Constraint, Method, ModelParams, SchemeState, discrete_energy, init_state
from .schemes import StepReport, advance, startup_step, step_eq, step_sav
from .experiments import ExperimentConfig, converge_space, converge_time, run_experiment

__version__ = "0.1.0"
