"""Dense numerical kernels shared by the whole package.

SPD factorization/solves, QR least squares, symmetric eigen-extremes,
log-determinants and correlation matrices, all on float64 ndarrays.  LAPACK
(via numpy) does the heavy lifting; this module owns the validation and the
deterministic failure rules:

* an SPD factorization is rejected when any pivot L_jj^2 falls at or below
  ``dim * eps * max(diag(A))``;
* a least-squares factor is rank deficient when any |R_jj| falls below
  ``n * eps * max column norm``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    RankDeficient,
)

_EPS = float(np.finfo(np.float64).eps)
_SYM_RTOL = 1e-12


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Validate and convert input to a finite float64 2-D array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size == 0:
        raise DimensionMismatch("empty matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def as_vector(b) -> np.ndarray:
    v = np.asarray(b, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def _require_symmetric(a: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(a)))
    if scale > 0.0 and float(np.max(np.abs(a - a.T))) > _SYM_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-12 relative tolerance")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor with L @ L.T reproducing the input."""

    dim: int
    lower: np.ndarray


def spd_factorize(a) -> SpdFactor:
    """Cholesky-factorize a symmetric positive definite matrix.

    Raises NotPositiveDefinite when the factorization fails or when any pivot
    is at or below ``dim * eps * max(diag(A))``, so numerically semidefinite
    inputs are rejected deterministically.
    """
    m = _require_symmetric(as_matrix(a, square=True))
    dim = m.shape[0]
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivot_floor = dim * _EPS * float(np.max(np.diagonal(m)))
    if float(np.min(np.diagonal(lower)) ** 2) <= pivot_floor:
        raise NotPositiveDefinite(
            f"pivot below dimension-scaled threshold {pivot_floor:.3e}"
        )
    return SpdFactor(dim=dim, lower=lower)


def spd_solve(factor: SpdFactor, b) -> np.ndarray:
    """Solve A x = b given the Cholesky factor of A."""
    rhs = np.asarray(b, dtype=np.float64)
    if rhs.shape[0] != factor.dim:
        raise DimensionMismatch(
            f"factor dimension {factor.dim} != rhs length {rhs.shape[0]}"
        )
    y = np.linalg.solve(factor.lower, rhs)
    return np.linalg.solve(factor.lower.T, y)


def spd_inverse(factor: SpdFactor) -> np.ndarray:
    """Symmetric inverse from a Cholesky factor."""
    linv = np.linalg.solve(factor.lower, np.eye(factor.dim))
    inv = linv.T @ linv
    return 0.5 * (inv + inv.T)


def gram_factorize(gram) -> tuple[SpdFactor, np.ndarray]:
    """Factorize a Gram matrix after symmetric column equilibration.

    Scaling by D = diag(sqrt(diag(G))) makes the positive-definiteness test
    scale invariant: a Gram built from wildly different column magnitudes
    (heavy-tailed covariates next to an intercept) factorizes iff the
    underlying design is numerically full rank.  Returns the factor of
    D^-1 G D^-1 together with the scale vector.
    """
    g = _require_symmetric(as_matrix(gram, square=True))
    diag = np.diagonal(g)
    if np.any(diag <= 0.0):
        raise NotPositiveDefinite("Gram matrix has a non-positive diagonal entry")
    scale = np.sqrt(diag)
    equilibrated = g / np.outer(scale, scale)
    np.fill_diagonal(equilibrated, 1.0)
    factor = spd_factorize(equilibrated)
    # exactly dependent columns can round to a pivot of order eps, right at
    # spd_factorize's floor; a wider unit-scale margin separates real rank
    # deficiency (pivot ~ eps) from conditioning this solver can still handle
    if float(np.min(np.diagonal(factor.lower)) ** 2) <= 64.0 * g.shape[0] * _EPS:
        raise NotPositiveDefinite("equilibrated pivot at rounding level")
    return factor, scale


def gram_solve(factor: SpdFactor, scale: np.ndarray, rhs) -> np.ndarray:
    """Solve G x = rhs given the equilibrated factor from gram_factorize."""
    rhs = np.asarray(rhs, dtype=np.float64)
    return spd_solve(factor, rhs / scale) / scale


def gram_inverse(factor: SpdFactor, scale: np.ndarray) -> np.ndarray:
    """G^{-1} from the equilibrated factor."""
    return spd_inverse(factor) / np.outer(scale, scale)


def gram_log_det(factor: SpdFactor, scale: np.ndarray) -> float:
    """log |G| from the equilibrated factor."""
    return (2.0 * float(np.sum(np.log(np.diagonal(factor.lower))))
            + 2.0 * float(np.sum(np.log(scale))))


def least_squares(x, y) -> tuple[np.ndarray, float]:
    """Minimize ||y - X b||^2 by Householder QR; returns (coef, rss).

    Raises RankDeficient when an R diagonal magnitude falls below
    ``n * eps * max column norm``.
    """
    xm = as_matrix(x)
    yv = as_vector(y)
    n, q = xm.shape
    if yv.shape[0] != n:
        raise DimensionMismatch(f"X has {n} rows but y has {yv.shape[0]}")
    if n < q:
        raise DimensionMismatch(f"need n >= q, got n={n}, q={q}")
    qmat, rmat = np.linalg.qr(xm, mode="reduced")
    col_norm = float(np.max(np.linalg.norm(xm, axis=0)))
    if float(np.min(np.abs(np.diagonal(rmat)))) < n * _EPS * col_norm:
        raise RankDeficient("design matrix has numerically dependent columns")
    coef = np.linalg.solve(rmat, qmat.T @ yv)
    resid = yv - xm @ coef
    return coef, float(resid @ resid)


def eigen_extremes(s) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    m = as_matrix(s, square=True)
    scale = float(np.max(np.abs(m)))
    if scale > 0.0 and float(np.max(np.abs(m - m.T))) > _SYM_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    return float(w[0]), float(w[-1])


def log_det_spd(a) -> float:
    """Natural log determinant of an SPD matrix via 2 * sum(log L_jj)."""
    factor = spd_factorize(a)
    return 2.0 * float(np.sum(np.log(np.diagonal(factor.lower))))


def correlation_from_data(z) -> np.ndarray:
    """Pearson correlation matrix of the columns of Z (k x p), ddof=1.

    Raises DegenerateColumn if any column is constant.
    """
    zm = as_matrix(z)
    k = zm.shape[0]
    if k < 2:
        raise DimensionMismatch("need at least 2 rows to form correlations")
    centered = zm - zm.mean(axis=0)
    cov = centered.T @ centered / (k - 1)
    var = np.diagonal(cov).copy()
    if np.any(var <= 0.0):
        j = int(np.argmax(var <= 0.0))
        raise DegenerateColumn(f"column {j} has zero sample variance")
    scale = np.sqrt(var)
    corr = cov / np.outer(scale, scale)
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def is_psd(a, tol: float = 0.0) -> bool:
    """True iff the minimum eigenvalue of symmetric A is >= -tol."""
    lo, _ = eigen_extremes(a)
    return lo >= -tol


def standard_normal_quantile(q: float) -> float:
    """Inverse standard normal CDF, accurate to ~1e-15.

    Acklam's rational approximation refined by one Halley step against the
    erf-based CDF.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("quantile argument must be in (0, 1)")
    # rational approximation (relative error < 1.15e-9)
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if q < p_low:
        t = math.sqrt(-2.0 * math.log(q))
        z = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) / \
            ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0)
    elif q <= p_high:
        t = q - 0.5
        r = t * t
        z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * t / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        t = math.sqrt(-2.0 * math.log(1.0 - q))
        z = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) / \
            ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0)
    # Halley refinement on Phi(z) - q = 0
    for _ in range(2):
        err = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0))) - q
        pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        u = err / pdf
        z -= u / (1.0 + 0.5 * z * u)
    return z
