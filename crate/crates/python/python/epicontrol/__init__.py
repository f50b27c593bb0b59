"""Age-structured epidemic simulation, calibration and reproduction numbers."""

from ._native import (
    Dataset,
    ensemble_summary,
    parameter_names,
    posterior_mean,
    spectral_radius,
)

__all__ = [
    "Dataset",
    "ensemble_summary",
    "parameter_names",
    "posterior_mean",
    "spectral_radius",
]
