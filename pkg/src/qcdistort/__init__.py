"""Numerical toolkit for Hausdorff-content distortion under planar quasiconformal maps."""

from .beltrami import BeltramiCoefficient, ConvergenceError, PrincipalMapSolution, solve_principal
from .beurling import (beurling_apply, cauchy_apply, maximal_mt, sq_apply, weighted_norm_estimate)
from .distortion import (ExperimentReport, FractalSpec, box_dimension, cantor_mask,
                         conformal_outside_experiment, content_distortion_experiment,
                         inverse_exponent_form, tau)
from .dyadic import DyadicCube, MeshCube, Square, mesh_cover
from .grid import GridField
from .packing import (CompactMask, PackingFamily, beta_weights, dyadic_content, minimizing_cover,
                      packing_construct, packing_properties, t_pack_norm, weight_measure)

__version__ = "0.1.0"

__all__ = [
    "BeltramiCoefficient", "CompactMask", "ConvergenceError", "DyadicCube", "ExperimentReport", "FractalSpec",
    "GridField", "MeshCube", "PackingFamily", "PrincipalMapSolution", "Square", "beta_weights", "beurling_apply",
    "box_dimension", "cantor_mask", "cauchy_apply", "conformal_outside_experiment", "content_distortion_experiment",
    "dyadic_content", "inverse_exponent_form", "maximal_mt", "mesh_cover", "minimizing_cover", "packing_construct",
    "packing_properties", "solve_principal", "sq_apply", "t_pack_norm", "tau", "weight_measure",
    "weighted_norm_estimate",
]
