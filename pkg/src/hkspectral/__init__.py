"""Spectral verification engine for hyperkähler structures built from holomorphic Poisson deformations on the flat 4-torus."""

__version__ = "0.1.0"
