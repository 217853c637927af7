"""Double block bootstrap confidence bounds for weakly dependent time series."""

__version__ = "0.1.0"

from dblboot.bounds import METHODS, BoundSet, compute_bounds, default_lengths  # noqa: E402
from dblboot.dgp import ModelKind, ModelSpec, generate, simulate, true_value  # noqa: E402
from dblboot.smooth import EstimatorKind, make_estimator, plug_in  # noqa: E402

__all__ = [
    "__version__",
    "METHODS",
    "BoundSet",
    "compute_bounds",
    "default_lengths",
    "ModelKind",
    "ModelSpec",
    "generate",
    "simulate",
    "true_value",
    "EstimatorKind",
    "make_estimator",
    "plug_in",
]
