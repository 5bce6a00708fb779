"""Lattice simulation and statistical checks for stochastic Yang-Mills heat flow on the torus."""

from .lie_algebra import LieAlgebra, get_algebra
from .lattice import GaugeField, TorusGrid
from .gauge import GroupField, Path, gauge_transform, holonomy, wilson_loop

__all__ = [
    "GaugeField",
    "GroupField",
    "LieAlgebra",
    "Path",
    "TorusGrid",
    "gauge_transform",
    "get_algebra",
    "holonomy",
    "wilson_loop",
]
