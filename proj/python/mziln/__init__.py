"""Conditional regression for zero-inflated compositional data."""

from ._mziln import (
    DegenerateSampleError,
    EmptySystemError,
    NoSignalError,
    __version__,
    fit_mle,
    fit_path,
    inverse_log_ratio,
    log_ratio_transform,
    mziln_log_density,
    spearman_screen,
)

__all__ = [
    "DegenerateSampleError",
    "EmptySystemError",
    "NoSignalError",
    "__version__",
    "fit_mle",
    "fit_path",
    "inverse_log_ratio",
    "log_ratio_transform",
    "mziln_log_density",
    "spearman_screen",
]
