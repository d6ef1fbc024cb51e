"""Turing-pattern workbench: a finite-difference solver for a two-species
reaction-diffusion model and a from-scratch physics-informed network that
infers the model's parameters from a steady pattern."""

__version__ = "0.1.0"

from .core import GridSpec, Pattern, RDParams, params_for_pattern  # noqa: E402

__all__ = ["GridSpec", "Pattern", "RDParams", "params_for_pattern", "__version__"]
