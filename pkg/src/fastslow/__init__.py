"""Analysis of discrete fast-slow maps.

Classification of critical-manifold points by multiplier distribution,
reduced dynamics, formal flow embeddings at unipotent singularities, planar
and contact-point singularity analysis, and slow-manifold experiments.
"""

__version__ = "0.1.0"

from .errors import FastSlowError
from .jets import Jet, JetVector, MultiIndex, jet_compose, jet_mul, jet_partial
from .model import (FastSlowMapSpec, MultiplierSet, ReducedData, SingularityClass,
                    classify_point, critical_manifold_solve, nilpotency_index,
                    nontrivial_multipliers, reduced_data, reduced_map_step,
                    standard_form_2d)
from .tols import Tolerances

__all__ = [
    "__version__", "FastSlowError", "Jet", "JetVector", "MultiIndex",
    "jet_compose", "jet_mul", "jet_partial", "FastSlowMapSpec", "MultiplierSet",
    "ReducedData", "SingularityClass", "classify_point", "critical_manifold_solve",
    "nilpotency_index", "nontrivial_multipliers", "reduced_data",
    "reduced_map_step", "standard_form_2d", "Tolerances",
]
