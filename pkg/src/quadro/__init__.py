"""Sparse quadratic projections for two-class problems, chosen by Rayleigh quotient."""
from .errors import (
    DidNotConverge,
    EstimationError,
    InputError,
    QuadroError,
    SolverError,
)
from .estimate import EstimatorConfig, fit_model
from .model import (
    ClassModel,
    LabeledDataset,
    QuadraticProjection,
    SolverConfig,
    TwoClassModel,
    make_class_model,
)
from .moments import rayleigh
from .solve import SolverResult, solution_path, solve_quadro

__version__ = "0.1.0"
