"""Discontinuous Galerkin isogeometric solver for the surface biharmonic problem on multipatch NURBS surfaces."""

__version__ = "0.1.0"
