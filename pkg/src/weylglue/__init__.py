"""Weyl-energy gluing toolkit: curvature algebra, correction jets, boundary integrals and energy balance."""

__version__ = "0.1.0"
