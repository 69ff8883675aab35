"""Mean-square stability of Galerkin Euler-Maruyama and Milstein schemes for
linear stochastic heat equations with multiplicative Q-Wiener noise."""

from .discretization import FemSpace, SpectralSpace, make_space, project_initial
from .errors import (AccuracyError, BudgetExceeded, ConfigError, ContractViolation,
                     DenseCapExceeded, DomainError, InvariantViolation, MSStabError,
                     UnsupportedConfiguration)
from .montecarlo import EnsembleConfig, EnsembleResult, compare_to_reference, run_ensemble
from .noise import NoiseModel
from .schemes import DiffusionOperator, Integrator, RationalKind, SchemeConfig
from .stability import Classification, StabilityReport, analyze
from .tensor_ops import KroneckerSumOperator, spectral_radius

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "BudgetExceeded", "Classification", "ConfigError", "ContractViolation",
    "DenseCapExceeded", "DiffusionOperator", "DomainError", "EnsembleConfig", "EnsembleResult",
    "FemSpace", "Integrator", "InvariantViolation", "KroneckerSumOperator", "MSStabError",
    "NoiseModel", "RationalKind", "SchemeConfig", "SpectralSpace", "StabilityReport",
    "UnsupportedConfiguration", "analyze", "compare_to_reference", "make_space",
    "project_initial", "run_ensemble", "spectral_radius",
]
