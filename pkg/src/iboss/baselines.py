"""Random-subsampling competitors and the divide-and-conquer estimator.

Implements the four classical subsampling plans (uniform, leverage-weighted,
shrunk leverage, unweighted leverage), draws with either marginal law
(Bin(k, pi_i) with replacement, Bin(1, k pi_i) without), the general weighted
estimator they plug into, and block-averaged OLS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .data import DataMatrix
from .errors import (
    InfeasibleWithoutReplacement,
    NotPositiveDefinite,
    RankDeficient,
    RankDeficientBlock,
    SingularWeightedDesign,
)

PLAN_METHODS = ("uni", "lev", "slev", "levunw")
DEFAULT_SLEV_ALPHA = 0.9


@dataclass(frozen=True)
class SamplingPlan:
    """Per-row draw probabilities and estimator weights for one method."""

    pi: np.ndarray
    weights: np.ndarray
    with_replacement: bool
    method_tag: str

    def __post_init__(self):
        if self.pi.shape != self.weights.shape or self.pi.ndim != 1:
            raise ValueError("pi and weights must be 1-D and equal length")
        if np.any(self.pi < 0.0) or abs(float(self.pi.sum()) - 1.0) > 1e-10:
            raise ValueError("pi must be nonnegative and sum to 1")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")


@dataclass(frozen=True)
class DrawCounts:
    """How many times each row entered the subsample."""

    eta: np.ndarray


def leverage_scores_design(x: np.ndarray) -> np.ndarray:
    """Hat-matrix diagonal h_ii = x_i^T (X^T X)^{-1} x_i of a design matrix.

    Computed as squared row norms of the thin-QR Q factor, O(n q^2); the sum
    equals the design rank q.
    """
    xm = linalg.as_matrix(x)
    n, q = xm.shape
    qmat, rmat = np.linalg.qr(xm, mode="reduced")
    col_norm = float(np.max(np.linalg.norm(xm, axis=0)))
    if float(np.min(np.abs(np.diagonal(rmat)))) < n * np.finfo(float).eps * col_norm:
        raise RankDeficient("design is rank deficient; leverage undefined")
    h = np.einsum("ij,ij->i", qmat, qmat)
    return np.clip(h, 0.0, 1.0)


def leverage_scores(data: DataMatrix) -> np.ndarray:
    """Exact leverage scores of [1, Z]; sums to p+1."""
    return leverage_scores_design(data.design())


def make_plan(data: DataMatrix, method: str, alpha: float | None = None,
              with_replacement: bool = True) -> SamplingPlan:
    """Build the sampling plan for one of uni/lev/slev/levunw.

    uni:    pi = 1/n,                w = 1
    lev:    pi = h/(p+1),            w = 1/pi
    slev:   pi = a h/(p+1)+(1-a)/n,  w = 1/pi   (default a = 0.9)
    levunw: pi = h/(p+1),            w = 1
    """
    n = data.n
    if method == "uni":
        pi = np.full(n, 1.0 / n)
        w = np.ones(n)
    elif method in ("lev", "levunw"):
        h = leverage_scores(data)
        pi = h / (data.p + 1)
        pi = pi / pi.sum()
        w = 1.0 / pi if method == "lev" else np.ones(n)
    elif method == "slev":
        a = DEFAULT_SLEV_ALPHA if alpha is None else float(alpha)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"slev alpha must be in [0, 1], got {a}")
        h = leverage_scores(data)
        pi = a * h / (data.p + 1) + (1.0 - a) / n
        pi = pi / pi.sum()
        w = 1.0 / pi
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    tag = f"slev({a:g})" if method == "slev" else method
    return SamplingPlan(pi=pi, weights=w, with_replacement=with_replacement,
                        method_tag=tag)


def draw(plan: SamplingPlan, k: int, rng: np.random.Generator) -> DrawCounts:
    """Draw a size-k subsample; counts follow the plan's marginal law.

    With replacement: k independent categorical draws.  Without replacement:
    systematic sampling on a random permutation of the cumulative k*pi_i,
    which gives inclusion probability exactly k*pi_i per row (requires
    k*max(pi) <= 1).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n = plan.pi.shape[0]
    if plan.with_replacement:
        cdf = np.cumsum(plan.pi)
        cdf[-1] = 1.0
        picks = np.searchsorted(cdf, rng.random(k), side="right")
        eta = np.bincount(picks, minlength=n).astype(np.int64)
    else:
        scaled = k * plan.pi
        if float(scaled.max()) > 1.0 + 1e-12:
            raise InfeasibleWithoutReplacement(
                f"k*max(pi) = {float(scaled.max()):.6g} exceeds 1"
            )
        perm = rng.permutation(n)
        cum = np.cumsum(scaled[perm])
        cum[-1] = float(k)
        # row i owns [cum_{i-1}, cum_i); each unit-spaced point lands in at
        # most one interval because every interval has length <= 1
        points = rng.random() + np.arange(k)
        pos = np.searchsorted(cum, points, side="right")
        eta = np.zeros(n, dtype=np.int64)
        eta[perm[pos]] = 1
    return DrawCounts(eta=eta)


def weighted_ls(data: DataMatrix, eta: DrawCounts, plan: SamplingPlan) -> np.ndarray:
    """General weighted subsample estimator
    (sum w_i eta_i x_i x_i^T)^{-1} sum w_i eta_i x_i y_i.

    Raises SingularWeightedDesign when the weighted information matrix is
    singular; callers should record the event and redraw.
    """
    rows = np.flatnonzero(eta.eta > 0)
    if rows.size == 0:
        raise SingularWeightedDesign("empty draw")
    xs = np.column_stack([np.ones(rows.size), data.z[rows, :]])
    coef_w = plan.weights[rows] * eta.eta[rows]
    xw = xs * coef_w[:, None]
    gram = xs.T @ xw
    try:
        factor, scale = linalg.gram_factorize(0.5 * (gram + gram.T))
    except NotPositiveDefinite as exc:
        raise SingularWeightedDesign(str(exc)) from exc
    return linalg.gram_solve(factor, scale, xw.T @ data.y[rows])


def block_sizes(n: int, s: int) -> list[int]:
    """First s-1 blocks hold floor(n/s) rows; the last absorbs the remainder."""
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= S <= n, got S={s}, n={n}")
    base = n // s
    return [base] * (s - 1) + [n - base * (s - 1)]


def default_block_count(n: int) -> int:
    return max(1, int(np.floor(n ** 0.25)))


def divide_and_conquer(data: DataMatrix, s: int) -> np.ndarray:
    """Average of per-block OLS estimates over a contiguous row partition."""
    sizes = block_sizes(data.n, s)
    q = data.p + 1
    total = np.zeros(q)
    start = 0
    for size in sizes:
        if size < q + 1:
            raise RankDeficientBlock(
                f"block of {size} rows cannot fit {q} parameters with dof >= 1"
            )
        stop = start + size
        xb = np.column_stack([np.ones(size), data.z[start:stop, :]])
        try:
            coef, _ = linalg.least_squares(xb, data.y[start:stop])
        except RankDeficient as exc:
            raise RankDeficientBlock(str(exc)) from exc
        total += coef
        start = stop
    return total / s
