"""Information matrices, the D-criterion bound, and computable variance bounds.

Every determinant comparison lives in log space (k^{p+1} and the squared-range
products overflow float64 well before p = 50).  Scalar bound reports carry a
1e-9 absolute tolerance on the log scale so mathematically-tight equality
cases register as satisfied under rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .data import DataMatrix
from .errors import DegenerateColumn, NotPositiveDefinite, SingularExpectedInfo
from .selection import Subdata

_LOG_TOL = 1e-9


@dataclass(frozen=True)
class InfoMatrix:
    """Observed information sigma^{-2} sum x_i x_i^T over the included rows."""

    m: np.ndarray
    sigma2: float


@dataclass(frozen=True)
class BoundReport:
    """One checkable inequality: satisfied iff lhs >= rhs (within tolerance)."""

    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "satisfied": self.satisfied, "slack": self.slack}


def _scalar_report(name: str, lhs: float, rhs: float) -> BoundReport:
    return BoundReport(name=name, lhs=lhs, rhs=rhs,
                       satisfied=bool(lhs >= rhs - _LOG_TOL), slack=lhs - rhs)


def info_matrix(subdata: Subdata, sigma2: float) -> InfoMatrix:
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    x = subdata.design()
    return InfoMatrix(m=(x.T @ x) / sigma2, sigma2=sigma2)


def log_det_info(info: InfoMatrix) -> float:
    return linalg.gram_log_det(*linalg.gram_factorize(info.m))


def d_upper_bound(ranges, k: int, p: int, sigma2: float) -> float:
    """Log of the D-criterion ceiling
    k^{p+1} / (4^p sigma^{2(p+1)}) * prod_j (max_j - min_j)^2.

    Returns -inf when any column range is zero (the ceiling itself is 0).
    """
    rng = np.asarray(ranges, dtype=np.float64)
    widths = rng[:, 1] - rng[:, 0]
    if np.any(widths < 0.0):
        raise ValueError("ranges must satisfy min <= max")
    if rng.shape[0] != p:
        raise ValueError(f"expected {p} ranges, got {rng.shape[0]}")
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    if np.any(widths == 0.0):
        return float("-inf")
    return ((p + 1) * math.log(k) - p * math.log(4.0)
            - (p + 1) * math.log(sigma2) + 2.0 * float(np.sum(np.log(widths))))


def det_ceiling_report(subdata: Subdata, sigma2: float, full_ranges) -> BoundReport:
    """D-criterion ceiling vs the realized log |M_s| (lhs is the ceiling)."""
    bound = d_upper_bound(full_ranges, subdata.k_eff, subdata.p, sigma2)
    realized = log_det_info(info_matrix(subdata, sigma2))
    return _scalar_report("d-criterion-ceiling(log)", bound, realized)


def _range_widths(ranges, what: str) -> np.ndarray:
    arr = np.asarray(ranges, dtype=np.float64)
    widths = arr[:, 1] - arr[:, 0]
    if np.any(widths <= 0.0):
        j = int(np.argmax(widths <= 0.0))
        raise DegenerateColumn(f"{what} range of column {j} is not positive")
    return widths


def attainment_ratio_report(subdata: Subdata, full_ranges, quantile_ranges,
                   r: int) -> BoundReport:
    """Attainment ratio of the selected subdata against its floor.

    lhs: log of |X*^T X*| / (k^{p+1}/4^p * prod full-range^2)
    rhs: log of lambda_min(R)^p / p^p * prod (quantile-range / full-range)^2
    """
    if r < 1:
        raise ValueError("quota r must be at least 1")
    k, p = subdata.k_eff, subdata.p
    fw = _range_widths(full_ranges, "full")
    qw = _range_widths(quantile_ranges, "quantile")
    x = subdata.design()
    corr = linalg.correlation_from_data(subdata.z)
    lam_min, _ = linalg.eigen_extremes(corr)
    log_det = linalg.gram_log_det(*linalg.gram_factorize(x.T @ x))
    lhs = log_det - ((p + 1) * math.log(k) - p * math.log(4.0)
                     + 2.0 * float(np.sum(np.log(fw))))
    if lam_min <= 0.0:
        rhs = float("-inf")
    else:
        rhs = (p * math.log(lam_min) - p * math.log(p)
               + 2.0 * float(np.sum(np.log(qw / fw))))
    return _scalar_report("attainment-ratio-floor(log)", lhs, rhs)


def variance_bound_reports(subdata: Subdata, sigma2: float, full_ranges,
                    quantile_ranges, r: int) -> list[BoundReport]:
    """Finite-sample variance bounds for the selected-subdata estimator.

    Emits 2p+1 reports: the intercept-variance floor sigma^2/k, and for each
    slope j a floor 4 sigma^2 / (k lam_max(R) full-range_j^2) and a cap
    4 p sigma^2 / (k lam_min(R) quantile-range_j^2).  The variance matrix is
    sigma^2 (X*^T X*)^{-1} with the supplied (true) sigma^2.
    """
    if r < 1:
        raise ValueError("quota r must be at least 1")
    k, p = subdata.k_eff, subdata.p
    fw = _range_widths(full_ranges, "full")
    qw = _range_widths(quantile_ranges, "quantile")
    corr = linalg.correlation_from_data(subdata.z)
    lam_min, lam_max = linalg.eigen_extremes(corr)
    if lam_min <= 0.0:
        raise DegenerateColumn("subdata correlation matrix is numerically singular")
    x = subdata.design()
    var = sigma2 * linalg.gram_inverse(*linalg.gram_factorize(x.T @ x))
    reports = [_scalar_report("intercept-variance-floor",
                              float(var[0, 0]), sigma2 / k)]
    for j in range(p):
        vjj = float(var[j + 1, j + 1])
        floor = 4.0 * sigma2 / (k * lam_max * fw[j] ** 2)
        cap = 4.0 * p * sigma2 / (k * lam_min * qw[j] ** 2)
        reports.append(_scalar_report(f"slope-variance-floor[{j}]", vjj, floor))
        reports.append(_scalar_report(f"slope-variance-cap[{j}]", cap, vjj))
    return reports


def subsampling_lower_bound(data: DataMatrix, plan, k: int,
                            p_nonsingular: float, sigma2: float) -> np.ndarray:
    """Covariance floor for any subsampling estimator with the plan's pi:
    (sigma^2 * P{nonsingular} / k) * (sum pi_i x_i x_i^T)^{-1}.
    """
    if not 0.0 <= p_nonsingular <= 1.0:
        raise ValueError("p_nonsingular must be a probability")
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    x = data.design()
    weighted = x * plan.pi[:, None]
    expected = x.T @ weighted
    try:
        inv = linalg.gram_inverse(
            *linalg.gram_factorize(0.5 * (expected + expected.T)))
    except NotPositiveDefinite as exc:
        raise SingularExpectedInfo(str(exc)) from exc
    return (sigma2 * p_nonsingular / k) * inv


def loewner_report(name: str, a, b, tol: float) -> BoundReport:
    """PSD comparison A >= B: lhs is lambda_min(A - B), rhs is -tol."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    lam_min, _ = linalg.eigen_extremes(0.5 * (diff + diff.T))
    return BoundReport(name=name, lhs=lam_min, rhs=-tol,
                       satisfied=bool(lam_min >= -tol), slack=lam_min + tol)
