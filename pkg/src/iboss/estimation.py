"""Least-squares fits on subdata with exact finite-sample inference.

Subdata fits go through Cholesky on the (p+1)x(p+1) normal equations (k is
small, speed matters there); the full-data reference fit goes through
Householder QR.  The intercept is an explicit all-ones column; nothing is
centered.  Confidence intervals use standard normal critical values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .data import DataMatrix
from .errors import (
    DimensionMismatch,
    InvalidLevel,
    NotPositiveDefinite,
    RankDeficient,
    RankDeficientSubdata,
    TooFewRows,
)
from .selection import Subdata


@dataclass
class FitResult:
    """OLS estimate with error variance, covariance matrix and standard errors."""

    beta0: float
    beta1: np.ndarray
    sigma2_hat: float
    cov: np.ndarray
    se: np.ndarray
    dof: int
    method_tag: str

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta1])


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float


def _fit_from_design(x: np.ndarray, y: np.ndarray, method_tag: str,
                     via_qr: bool) -> FitResult:
    n, q = x.shape
    if n < q + 1:
        raise TooFewRows(f"need at least {q + 1} rows for a positive dof, got {n}")
    if via_qr:
        coef, rss = linalg.least_squares(x, y)
        gram = x.T @ x
        try:
            ginv = linalg.spd_inverse(linalg.spd_factorize(gram))
        except NotPositiveDefinite as exc:
            raise RankDeficient(str(exc)) from exc
    else:
        gram = x.T @ x
        try:
            factor, scale = linalg.gram_factorize(gram)
        except NotPositiveDefinite as exc:
            raise RankDeficientSubdata(str(exc)) from exc
        coef = linalg.gram_solve(factor, scale, x.T @ y)
        resid = y - x @ coef
        rss = float(resid @ resid)
        ginv = linalg.gram_inverse(factor, scale)
    dof = n - q
    sigma2_hat = max(rss, 0.0) / dof
    cov = sigma2_hat * ginv
    se = np.sqrt(np.maximum(np.diagonal(cov), 0.0))
    return FitResult(beta0=float(coef[0]), beta1=coef[1:].copy(),
                     sigma2_hat=sigma2_hat, cov=cov, se=se, dof=dof,
                     method_tag=method_tag)


def fit_design(x, y, method_tag: str) -> FitResult:
    """OLS with inference on an explicit design matrix (normal equations)."""
    return _fit_from_design(np.asarray(x, dtype=np.float64),
                            np.asarray(y, dtype=np.float64),
                            method_tag, via_qr=False)


def ols_fit(subdata: Subdata) -> FitResult:
    """OLS on the subdata: beta, sigma2_hat = rss/(k-p-1), cov, SEs.

    Raises TooFewRows when k_eff < p+2 and RankDeficientSubdata when [1, Z*]
    is numerically rank deficient.
    """
    if subdata.k_eff < subdata.p + 2:
        raise TooFewRows(
            f"k_eff={subdata.k_eff} below p+2={subdata.p + 2}"
        )
    try:
        return _fit_from_design(subdata.design(), subdata.y,
                                subdata.method_tag, via_qr=False)
    except RankDeficient as exc:
        raise RankDeficientSubdata(str(exc)) from exc


def fit_full(data: DataMatrix, method_tag: str = "full") -> FitResult:
    """Reference fit on the full data via Householder QR."""
    return _fit_from_design(data.design(), data.y, method_tag, via_qr=True)


def adjusted_intercept(beta1, y_bar: float, z_bar) -> float:
    """Intercept recovered from full-data means: y_bar - z_bar . beta1."""
    b1 = np.asarray(beta1, dtype=np.float64)
    zb = np.asarray(z_bar, dtype=np.float64)
    if b1.shape != zb.shape:
        raise DimensionMismatch(f"beta1 {b1.shape} vs z_bar {zb.shape}")
    return float(y_bar - zb @ b1)


def confidence_interval(estimate: float, se: float,
                        level: float = 0.95) -> ConfidenceInterval:
    """estimate +/- z_{(1+level)/2} * se with the standard normal quantile."""
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"level must be in (0, 1), got {level}")
    if se < 0.0:
        raise ValueError("standard error must be nonnegative")
    half = linalg.standard_normal_quantile(0.5 * (1.0 + level)) * se
    return ConfidenceInterval(lower=estimate - half, upper=estimate + half,
                              level=level)


def predict_mean(fit: FitResult, z_new, use_adjusted_intercept: bool = False,
                 beta0_adj: float | None = None) -> np.ndarray:
    """Predicted mean response at fresh covariate rows."""
    zm = np.asarray(z_new, dtype=np.float64)
    if zm.ndim == 1:
        zm = zm.reshape(1, -1)
    if zm.shape[1] != fit.beta1.shape[0]:
        raise DimensionMismatch(
            f"z_new has {zm.shape[1]} columns, fit has p={fit.beta1.shape[0]}"
        )
    if use_adjusted_intercept:
        if beta0_adj is None:
            raise ValueError("beta0_adj required when use_adjusted_intercept is set")
        intercept = beta0_adj
    else:
        intercept = fit.beta0
    return intercept + zm @ fit.beta1
