"""Finite-wavenumber, finite-frequency homogenization of scalar waves on
2-D periodic media with Neumann/Dirichlet exclusions."""

__version__ = "0.1.0"
