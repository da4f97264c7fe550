"""Stabilised finite element and spectral estimators for Bayesian unique continuation.

Typical use::

    from ucfem import build_structured_mesh, make_spaces, observe, NoiseModel
    from ucfem import assemble_data_term, build_system, solve_map
"""
from ._accel import backend_name
from .forms import DataTerm, assemble_data_term
from .mesh import Mesh, Rect, Tag, build_structured_mesh
from .observe import NoiseModel, ObservationSet, observe
from .solve import (AssembledSystem, MapSolution, SolverError, build_system, empirical_gram_check,
                    expected_triple_norm_error, make_spaces, posterior_sample, solve_map)
from .space import FeFunction, FeSpace, lagrange_space, nodal_interpolate
from .spectral import HarmonicBasis, SpectralPrior, couple_dimension, solve_spectral_map
from .truth import GroundTruth, builtin_truth

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem", "DataTerm", "FeFunction", "FeSpace", "GroundTruth", "HarmonicBasis",
    "MapSolution", "Mesh", "NoiseModel", "ObservationSet", "Rect", "SolverError", "SpectralPrior",
    "Tag", "assemble_data_term", "backend_name", "build_structured_mesh", "build_system",
    "builtin_truth", "couple_dimension", "empirical_gram_check", "expected_triple_norm_error",
    "lagrange_space", "make_spaces", "nodal_interpolate", "observe", "posterior_sample",
    "solve_map", "solve_spectral_map",
]
