"""Small gap solitons of nonlinear Dirac equations with a localized potential."""
from ._backend import BACKEND, HAVE_NUMBA
from .core import Grid, Nonlinearity, PotentialPair, SpinorField, inner_product
from .dirac_op import DiracOperator

__version__ = "0.1.0"

__all__ = ["BACKEND", "HAVE_NUMBA", "Grid", "Nonlinearity", "PotentialPair", "SpinorField", "inner_product",
           "DiracOperator", "__version__"]
