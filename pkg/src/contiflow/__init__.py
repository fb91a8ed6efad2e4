"""Continuum hopping and birth-death dynamics on a torus, with the estimators
and exact identities used to check their scaling limits numerically."""

__version__ = "0.1.0"

from .config_space import Configuration, Torus, Window, StepFunction, indicator, sample_poisson
from .estimation import EstimateWithError
from .potentials import KawasakiRateParams, make_kernel, make_potential

__all__ = ["Configuration", "Torus", "Window", "StepFunction", "indicator", "sample_poisson",
           "EstimateWithError", "KawasakiRateParams", "make_kernel", "make_potential",
           "__version__"]
