"""Decorrelated feature-distributed sparse additive models.

Indices are 0-based on the Python side.
"""

from ._ddacspam import (
    DdacError,
    Fit,
    Session,
    chi2_quantile,
    chi2_sf,
    compute_dn,
    fit,
    simulate,
)

__all__ = [
    "DdacError",
    "Fit",
    "Session",
    "chi2_quantile",
    "chi2_sf",
    "compute_dn",
    "fit",
    "simulate",
]
