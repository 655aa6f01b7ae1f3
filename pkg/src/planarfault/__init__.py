"""Bayesian inversion of surface displacements for a planar fault and its slip."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, GeometryError, NumericalError, PlanarFaultError
from .green import DislocationSource, ElasticMedium, green_surface
from .grid import FaultGrid, GeometryParam, Rake, build_difference_ops, build_grid
from .forward import ForwardSystem, StationSet, assemble, predict
from .solver import select_C_cell, select_C_global, solve
from .posterior import ParameterBox, PosteriorGrid, compute_summaries, slip_posterior, sweep

__all__ = [
    "ConfigError", "DataError", "GeometryError", "NumericalError", "PlanarFaultError",
    "DislocationSource", "ElasticMedium", "green_surface",
    "FaultGrid", "GeometryParam", "Rake", "build_difference_ops", "build_grid",
    "ForwardSystem", "StationSet", "assemble", "predict",
    "select_C_cell", "select_C_global", "solve",
    "ParameterBox", "PosteriorGrid", "compute_summaries", "slip_posterior", "sweep",
]
