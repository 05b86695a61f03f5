"""Fermi-accelerated, dynamically localized matter waves on a modulated mirror."""

__version__ = "0.1.0"

from .model import (
    CHAOS_THRESHOLD,
    DimensionlessParams,
    LabParams,
    Window,
    WindowKind,
    acceleration_window,
    classify_lambda,
    lab_from_dimensionless,
    localization_window,
    overlap_window,
    scale_to_dimensionless,
)

__all__ = [
    "CHAOS_THRESHOLD",
    "DimensionlessParams",
    "LabParams",
    "Window",
    "WindowKind",
    "acceleration_window",
    "classify_lambda",
    "lab_from_dimensionless",
    "localization_window",
    "overlap_window",
    "scale_to_dimensionless",
    "__version__",
]
