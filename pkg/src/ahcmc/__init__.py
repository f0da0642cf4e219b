"""Constant mean curvature leaves in asymptotically hyperbolic ends."""

from .ambient import AmbientMetricSpec, DomainError, HypothesisConstants, MassAspect, QTerm
from .conformal import MobiusBoost, center_mass_aspect, kw_residual, uniformize
from .s2grid import GridS2, build_grid
from .solver import CmcProblem, FoliationLeaf, cmc_solve, continuation_in_t, foliation_sweep
from .surface import GraphSurface, SurfaceGeometry, geometry_of
from .verify import BallFit, EstimateReport, ball_fit, decay_fit, drift_estimate

__version__ = "0.1.0"

__all__ = [
    "AmbientMetricSpec",
    "BallFit",
    "CmcProblem",
    "DomainError",
    "EstimateReport",
    "FoliationLeaf",
    "GraphSurface",
    "GridS2",
    "HypothesisConstants",
    "MassAspect",
    "MobiusBoost",
    "QTerm",
    "SurfaceGeometry",
    "ball_fit",
    "build_grid",
    "center_mass_aspect",
    "cmc_solve",
    "continuation_in_t",
    "decay_fit",
    "drift_estimate",
    "foliation_sweep",
    "geometry_of",
    "kw_residual",
    "uniformize",
]
