"""Galerkin simulation and hypothesis checking for fractional stochastic
reaction-diffusion equations with monotone polynomial drift and superlinear
multiplicative noise."""

__version__ = "0.1.0"

from .fracop import (
    FracOperator,
    SpaceConfig,
    assemble_integral_operator,
    assemble_spectral_operator,
    gagliardo_constant,
    norms,
)

__all__ = [
    "__version__",
    "FracOperator",
    "SpaceConfig",
    "assemble_integral_operator",
    "assemble_spectral_operator",
    "gagliardo_constant",
    "norms",
]
