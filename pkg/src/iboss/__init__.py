"""Information-based optimal subdata selection for big-data linear regression.

Select the most informative k rows of a tall (n >> p) regression dataset by
keeping both-tail extremes of every covariate, fit OLS on the subdata with
valid inference, and benchmark against random-subsampling and
divide-and-conquer baselines.
"""

from .data import DataMatrix, load_dataset
from .estimation import (
    ConfidenceInterval,
    FitResult,
    adjusted_intercept,
    confidence_interval,
    fit_full,
    ols_fit,
    predict_mean,
)
from .selection import (
    SelectionSpec,
    Subdata,
    full_column_ranges,
    full_means,
    iboss_dopt,
    partial_extreme_indices,
)

__version__ = "0.1.0"

__all__ = [
    "ConfidenceInterval",
    "DataMatrix",
    "FitResult",
    "SelectionSpec",
    "Subdata",
    "__version__",
    "adjusted_intercept",
    "confidence_interval",
    "fit_full",
    "full_column_ranges",
    "full_means",
    "iboss_dopt",
    "load_dataset",
    "ols_fit",
    "partial_extreme_indices",
    "predict_mean",
]
