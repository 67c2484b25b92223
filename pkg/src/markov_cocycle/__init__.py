"""Markov operator cocycles, random invariant densities and their existence criteria."""

from .core import (Density, LinearCocycle, MarkovCocycle, MarkovMatrix, RandomDensity,
                   compose_forward, compose_pullback, equivariance_residual)
from .driving import FiniteCycle, SampledBernoulliPath, make_driving
from .invariant import (banach_surrogate, cesaro_pullback, precompactness_diagnostics,
                        pullback_sequence, verify_theorem_a)
from .lift import build_lift, iota, iota_inv, lift_consistency_report, skew_ulam_equivalence
from .met import NormedCocycle, coboundary_fit, contraction_check, cesaro_iterate, met_verify
from .transfer import Partition, RandomMapFamily, fibered_report, ulam_matrix

__version__ = "0.1.0"

__all__ = [
    "Density", "FiniteCycle", "LinearCocycle", "MarkovCocycle", "MarkovMatrix",
    "NormedCocycle", "Partition", "RandomDensity", "RandomMapFamily", "SampledBernoulliPath",
    "banach_surrogate", "build_lift", "cesaro_iterate", "cesaro_pullback", "coboundary_fit",
    "compose_forward", "compose_pullback", "contraction_check", "equivariance_residual",
    "fibered_report", "iota", "iota_inv", "lift_consistency_report", "make_driving",
    "met_verify", "precompactness_diagnostics", "pullback_sequence", "skew_ulam_equivalence",
    "ulam_matrix", "verify_theorem_a",
]
