"""Covariate/response generators and the simulation harness.

Six covariate cases share one exchangeable covariance (unit variances,
pairwise correlation 0.5) unless a custom matrix is supplied:

* ``normal``     N(0, Sigma)
* ``lognormal``  exp of the normal draws
* ``t2``         multivariate t, 2 degrees of freedom
* ``mixture``    equal-weight mix of N(1,S), t2(1,S), t3(1,S), U[0,2]^p,
                 LN(0,S), component chosen per row
* ``interactions`` a 20-dim normal expanded to the 50 coordinates
                 (v, v1*v, v2*v11..v2*v20)
* ``t1``         multivariate t, 1 degree of freedom

Randomness comes from counter-based Philox streams keyed on
(seed, derived stream id), so replications are independent, order-free and
reproducible for a fixed seed.  Generation fills a column-major array in
fixed row chunks; the chunk size is a module constant, making output
deterministic for a given package version.

Runners repeat generate/select/fit cycles and reduce to a MetricTable with
one row per (method, n, k, metric).
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines, estimation, linalg
from .data import DataMatrix
from .errors import ConfigError, SingularWeightedDesign
from .selection import (
    SelectionSpec,
    full_means,
    iboss_dopt,
    thread_budget,
)

CASE_TAGS = ("normal", "lognormal", "t2", "mixture", "interactions", "t1")
ERROR_MODELS = ("homoscedastic", "exponential-sd")
_CHUNK_ROWS = 65536
_MAX_REDRAWS = 1000


# --- random streams ---------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def substream(seed: int, *ids: int) -> np.random.Generator:
    """Independent counter-based generator for (seed, ids...)."""
    mix = seed & _MASK64
    for value in ids:
        mix = _splitmix64(mix ^ ((value + 0x9E3779B97F4A7C15) & _MASK64))
    key = np.array([seed & _MASK64, mix], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# --- covariate cases --------------------------------------------------------

def exchangeable_covariance(p: int, rho: float = 0.5) -> np.ndarray:
    return (1.0 - rho) * np.eye(p) + rho * np.ones((p, p))


@dataclass(frozen=True)
class CovariateCase:
    """Which distribution generates Z, and at what dimension."""

    tag: str
    p: int
    covariance: np.ndarray | None = None

    def __post_init__(self):
        if self.tag not in CASE_TAGS:
            raise ValueError(f"unknown case tag {self.tag!r}")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.tag == "interactions" and self.p != 50:
            raise ValueError("the interactions case has exactly 50 coordinates")

    def base_dim(self) -> int:
        return 20 if self.tag == "interactions" else self.p

    def sigma(self) -> np.ndarray:
        if self.covariance is not None:
            return np.asarray(self.covariance, dtype=np.float64)
        return exchangeable_covariance(self.base_dim())


def _student_rows(rng, m: int, chol: np.ndarray, df: float,
                  mean: float) -> np.ndarray:
    normal = rng.standard_normal((m, chol.shape[0])) @ chol.T
    scale = np.sqrt(rng.chisquare(df, m) / df)
    return mean + normal / scale[:, None]


def _mixture_rows(rng, m: int, chol: np.ndarray,
                  return_components: bool = False):
    p = chol.shape[0]
    comp = rng.integers(0, 5, m)
    out = np.empty((m, p))
    for c in range(5):
        rows = np.flatnonzero(comp == c)
        if rows.size == 0:
            continue
        if c == 0:
            block = 1.0 + rng.standard_normal((rows.size, p)) @ chol.T
        elif c == 1:
            block = _student_rows(rng, rows.size, chol, 2.0, 1.0)
        elif c == 2:
            block = _student_rows(rng, rows.size, chol, 3.0, 1.0)
        elif c == 3:
            block = rng.uniform(0.0, 2.0, (rows.size, p))
        else:
            block = np.exp(rng.standard_normal((rows.size, p)) @ chol.T)
        out[rows] = block
    if return_components:
        return out, comp
    return out


def _interaction_rows(rng, m: int, chol: np.ndarray) -> np.ndarray:
    v = rng.standard_normal((m, 20)) @ chol.T
    out = np.empty((m, 50))
    out[:, :20] = v
    out[:, 20:40] = v[:, [0]] * v
    out[:, 40:50] = v[:, [1]] * v[:, 10:20]
    return out


def gen_covariates(case: CovariateCase, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw n covariate rows for the case; returns a Fortran-ordered (n, p)."""
    if n < 1:
        raise ValueError("n must be positive")
    chol = np.linalg.cholesky(case.sigma())
    out = np.empty((n, case.p), order="F")
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        m = stop - start
        if case.tag == "normal":
            block = rng.standard_normal((m, case.p)) @ chol.T
        elif case.tag == "lognormal":
            block = np.exp(rng.standard_normal((m, case.p)) @ chol.T)
        elif case.tag == "t2":
            block = _student_rows(rng, m, chol, 2.0, 0.0)
        elif case.tag == "t1":
            block = _student_rows(rng, m, chol, 1.0, 0.0)
        elif case.tag == "mixture":
            block = _mixture_rows(rng, m, chol)
        else:
            block = _interaction_rows(rng, m, chol)
        out[start:stop, :] = block
    return out


def gen_response(z: np.ndarray, beta: np.ndarray, sigma2: float,
                 error_model: str, rng: np.random.Generator) -> np.ndarray:
    """y = beta0 + Z beta1 + eps under the chosen error model."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape[0] != z.shape[1] + 1:
        raise ValueError(
            f"beta length {beta.shape[0]} != p+1 = {z.shape[1] + 1}"
        )
    mean = beta[0] + z @ beta[1:]
    if error_model == "homoscedastic":
        if sigma2 < 0.0:
            raise ValueError("sigma2 must be nonnegative")
        eps = np.sqrt(sigma2) * rng.standard_normal(z.shape[0]) if sigma2 else 0.0
    elif error_model == "exponential-sd":
        sd = rng.exponential(1.0, z.shape[0])
        eps = sd * rng.standard_normal(z.shape[0])
    else:
        raise ValueError(f"unknown error model {error_model!r}")
    return mean + eps


def gen_dataset(case: CovariateCase, n: int, beta, sigma2: float,
                error_model: str, rng: np.random.Generator) -> DataMatrix:
    z = gen_covariates(case, n, rng)
    y = gen_response(z, beta, sigma2, error_model, rng)
    return DataMatrix(z=z, y=y)


# --- experiment configuration ------------------------------------------------

METHODS = ("dopt", "uni", "lev", "slev", "levunw", "dc", "full")


@dataclass
class ExperimentConfig:
    """Everything a runner needs: generator case, truth, grids, methods, seed."""

    case: CovariateCase
    beta: np.ndarray
    sigma2: float
    n_grid: tuple[int, ...]
    k_grid: tuple[int, ...]
    replications: int
    methods: tuple[str, ...]
    seed: int
    error_model: str = "homoscedastic"
    slev_alpha: float = baselines.DEFAULT_SLEV_ALPHA
    dc_blocks: int | None = None

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.beta.shape != (self.case.p + 1,):
            raise ValueError("beta must have length p+1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.n_grid or not self.k_grid:
            raise ValueError("n_grid and k_grid must be nonempty")
        if min(self.n_grid) < max(self.k_grid):
            raise ValueError("every n must be at least every k")
        if self.error_model not in ERROR_MODELS:
            raise ValueError(f"unknown error model {self.error_model!r}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}")
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")


# --- metric table -------------------------------------------------------------

@dataclass(frozen=True)
class MetricRow:
    method: str
    n: int
    k: int
    metric: str
    value: float
    stderr: float


@dataclass
class MetricTable:
    rows: list[MetricRow] = field(default_factory=list)

    def add(self, method: str, n: int, k: int, metric: str, values) -> None:
        arr = np.asarray(values, dtype=np.float64)
        value = float(arr.mean())
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        self.rows.append(MetricRow(method, n, k, metric, value, stderr))

    def add_scalar(self, method: str, n: int, k: int, metric: str,
                   value: float, stderr: float = 0.0) -> None:
        self.rows.append(MetricRow(method, n, k, metric, float(value), float(stderr)))

    def lookup(self, method: str, n: int, k: int, metric: str) -> MetricRow:
        for row in self.rows:
            if (row.method, row.n, row.k, row.metric) == (method, n, k, metric):
                return row
        raise KeyError((method, n, k, metric))

    def to_records(self) -> list[dict]:
        return [{"method": r.method, "n": r.n, "k": r.k, "metric": r.metric,
                 "value": r.value, "stderr": r.stderr} for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "n", "k", "metric", "value", "stderr"])
            for r in self.rows:
                writer.writerow([r.method, r.n, r.k, r.metric,
                                 repr(r.value), repr(r.stderr)])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_records(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# --- per-replication method fits ----------------------------------------------

@dataclass
class MethodFit:
    """What one method produced in one replication."""

    beta: np.ndarray
    se: np.ndarray | None = None
    beta0_adj: float | None = None
    redraws: int = 0


class _RepContext:
    """Caches per-dataset quantities shared across methods and k values."""

    def __init__(self, data: DataMatrix, rng_factory,
                 slev_alpha: float = baselines.DEFAULT_SLEV_ALPHA,
                 dc_blocks: int | None = None):
        self.data = data
        self.rng_factory = rng_factory
        self.slev_alpha = slev_alpha
        self.dc_blocks = dc_blocks
        self._means = None
        self._plans: dict[str, baselines.SamplingPlan] = {}

    def means(self):
        if self._means is None:
            self._means = full_means(self.data)
        return self._means

    def plan(self, method: str) -> baselines.SamplingPlan:
        if method not in self._plans:
            alpha = self.slev_alpha if method == "slev" else None
            self._plans[method] = baselines.make_plan(self.data, method, alpha)
        return self._plans[method]


def _fit_one_method(ctx: _RepContext, method: str, k: int,
                    method_idx: int, k_idx: int) -> MethodFit:
    data = ctx.data
    if method == "dopt":
        sub = iboss_dopt(data, SelectionSpec(k=k))
        fit = estimation.ols_fit(sub)
        y_bar, z_bar = ctx.means()
        adj = estimation.adjusted_intercept(fit.beta1, y_bar, z_bar)
        return MethodFit(beta=fit.beta, se=fit.se, beta0_adj=adj)
    if method == "full":
        fit = estimation.fit_full(data)
        y_bar, z_bar = ctx.means()
        adj = estimation.adjusted_intercept(fit.beta1, y_bar, z_bar)
        return MethodFit(beta=fit.beta, se=fit.se, beta0_adj=adj)
    if method == "dc":
        s = ctx.dc_blocks or baselines.default_block_count(data.n)
        beta = baselines.divide_and_conquer(data, s)
        y_bar, z_bar = ctx.means()
        adj = estimation.adjusted_intercept(beta[1:], y_bar, z_bar)
        return MethodFit(beta=beta, beta0_adj=adj)
    plan = ctx.plan(method)
    rng = ctx.rng_factory(method_idx, k_idx)
    redraws = 0
    while True:
        counts = baselines.draw(plan, k, rng)
        try:
            beta = baselines.weighted_ls(data, counts, plan)
            break
        except SingularWeightedDesign:
            redraws += 1
            if redraws > _MAX_REDRAWS:
                raise
    y_bar, z_bar = ctx.means()
    adj = estimation.adjusted_intercept(beta[1:], y_bar, z_bar)
    return MethodFit(beta=beta, beta0_adj=adj, redraws=redraws)


def _replicate(config: ExperimentConfig, n: int, n_idx: int,
               rep: int) -> dict[tuple[str, int], MethodFit]:
    """One replication: fresh data, then every (method, k) fit on it."""
    data_rng = substream(config.seed, 1, n_idx, rep)
    data = gen_dataset(config.case, n, config.beta, config.sigma2,
                       config.error_model, data_rng)

    def rng_factory(method_idx, k_idx):
        return substream(config.seed, 2, n_idx, rep, method_idx, k_idx)

    ctx = _RepContext(data, rng_factory, slev_alpha=config.slev_alpha,
                      dc_blocks=config.dc_blocks)
    out = {}
    for k_idx, k in enumerate(config.k_grid):
        for m_idx, method in enumerate(config.methods):
            out[(method, k)] = _fit_one_method(ctx, method, k, m_idx, k_idx)
    return out


def _run_replications(config: ExperimentConfig, n: int, n_idx: int):
    """All replications for one n, in order; threaded when allowed."""
    reps = range(config.replications)
    workers = thread_budget()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(lambda r: _replicate(config, n, n_idx, r), reps)
    else:
        for r in reps:
            yield _replicate(config, n, n_idx, r)


# --- runners -------------------------------------------------------------------

def run_mse_experiment(config: ExperimentConfig) -> MetricTable:
    """Empirical MSEs of intercept (plain and mean-adjusted) and slope vector."""
    table = MetricTable()
    beta0, beta1 = float(config.beta[0]), config.beta[1:]
    for n_idx, n in enumerate(config.n_grid):
        acc: dict[tuple, dict[str, list[float]]] = {
            (m, k): {"b0": [], "b0a": [], "slope": []}
            for m in config.methods for k in config.k_grid
        }
        for rep_fits in _run_replications(config, n, n_idx):
            for key, fit in rep_fits.items():
                acc[key]["b0"].append((fit.beta[0] - beta0) ** 2)
                acc[key]["b0a"].append((fit.beta0_adj - beta0) ** 2)
                acc[key]["slope"].append(float(np.sum((fit.beta[1:] - beta1) ** 2)))
        for (method, k), bags in acc.items():
            table.add(method, n, k, "mse_beta0", bags["b0"])
            table.add(method, n, k, "mse_beta0_adj", bags["b0a"])
            table.add(method, n, k, "mse_slope", bags["slope"])
    return table


def run_coverage_experiment(config: ExperimentConfig,
                            target_coef: int = 1) -> MetricTable:
    """Coverage frequency and mean length of the 95% CI for one coefficient."""
    bad = [m for m in config.methods if m not in ("dopt", "full")]
    if bad:
        raise ConfigError("/methods", f"coverage is defined for dopt/full only, got {bad}")
    if not 0 <= target_coef <= config.case.p:
        raise ConfigError("/target_coef", "index outside 0..p")
    truth = float(config.beta[target_coef])
    table = MetricTable()
    for n_idx, n in enumerate(config.n_grid):
        acc = {(m, k): {"cover": [], "length": []}
               for m in config.methods for k in config.k_grid}
        for rep_fits in _run_replications(config, n, n_idx):
            for key, fit in rep_fits.items():
                ci = estimation.confidence_interval(
                    float(fit.beta[target_coef]), float(fit.se[target_coef]), 0.95)
                acc[key]["cover"].append(float(ci.lower <= truth <= ci.upper))
                acc[key]["length"].append(ci.upper - ci.lower)
        for (method, k), bags in acc.items():
            cov = float(np.mean(bags["cover"]))
            s = config.replications
            table.add_scalar(method, n, k, "coverage", cov,
                             float(np.sqrt(max(cov * (1 - cov), 0.0) / s)))
            table.add(method, n, k, "ci_length", bags["length"])
    return table


def run_mspe_experiment(config: ExperimentConfig, n_new: int = 5000) -> MetricTable:
    """Mean squared prediction error of the estimated mean response at fresh
    covariate draws; the adjusted intercept is used for every method."""
    if n_new < 1:
        raise ConfigError("/n_new", "must be positive")
    table = MetricTable()
    beta = config.beta
    for n_idx, n in enumerate(config.n_grid):
        acc = {(m, k): [] for m in config.methods for k in config.k_grid}
        for rep, rep_fits in enumerate(_run_replications(config, n, n_idx)):
            new_rng = substream(config.seed, 3, n_idx, rep)
            z_new = gen_covariates(config.case, n_new, new_rng)
            x_new = np.column_stack([np.ones(n_new), z_new])
            for key, fit in rep_fits.items():
                est = np.concatenate([[fit.beta0_adj], fit.beta[1:]])
                err = x_new @ (est - beta)
                acc[key].append(float(np.mean(err ** 2)))
        for (method, k), vals in acc.items():
            table.add(method, n, k, "mspe", vals)
    return table


def bootstrap_mse(data: DataMatrix, methods, k_grid, b: int,
                  rng: np.random.Generator,
                  slev_alpha: float = baselines.DEFAULT_SLEV_ALPHA,
                  dc_blocks: int | None = None) -> MetricTable:
    """Bootstrap slope MSEs around the full-data point estimate.

    Each bootstrap sample is a uniform with-replacement resample of size n;
    every method runs on the resample and errors are measured against the
    original data's full OLS slopes.
    """
    if b < 2:
        raise ValueError("need at least 2 bootstrap samples")
    center = estimation.fit_full(data).beta1
    acc = {(m, k): [] for m in methods for k in k_grid}
    for _ in range(b):
        rows = rng.integers(0, data.n, data.n)
        boot = DataMatrix(z=np.array(data.z[rows, :]), y=np.array(data.y[rows]),
                          names=list(data.names))
        ctx = _RepContext(boot, lambda mi, ki: rng, slev_alpha=slev_alpha,
                          dc_blocks=dc_blocks)
        for k_idx, k in enumerate(k_grid):
            for m_idx, method in enumerate(methods):
                fit = _fit_one_method(ctx, method, k, m_idx, k_idx)
                acc[(method, k)].append(float(np.sum((fit.beta[1:] - center) ** 2)))
    table = MetricTable()
    for (method, k), vals in acc.items():
        table.add(method, data.n, k, "bootstrap_mse_slope", vals)
    return table


def timing_benchmark(n_grid, p_grid, k: int, rng: np.random.Generator,
                     repeats: int = 3,
                     methods=("dopt", "uni", "lev", "full")) -> MetricTable:
    """Wall-clock seconds per method, median over repeats, normal covariates.

    dopt times selection plus the subdata fit; uni times draw plus weighted
    fit; lev includes the exact leverage-score computation; full is one QR
    OLS.  p is encoded in the metric name (seconds_p{p}) because the table
    schema has no p column.
    """
    table = MetricTable()
    for p in p_grid:
        case = CovariateCase(tag="normal", p=p)
        beta = np.ones(p + 1)
        for n in n_grid:
            data = gen_dataset(case, n, beta, 9.0, "homoscedastic", rng)
            spec = SelectionSpec(k=k)
            uni_plan = baselines.make_plan(data, "uni")
            for method in methods:
                samples = []
                for _ in range(max(3, repeats)):
                    start = time.perf_counter()
                    if method == "dopt":
                        estimation.ols_fit(iboss_dopt(data, spec))
                    elif method == "uni":
                        counts = baselines.draw(uni_plan, k, rng)
                        baselines.weighted_ls(data, counts, uni_plan)
                    elif method == "lev":
                        plan = baselines.make_plan(data, "lev")
                        counts = baselines.draw(plan, k, rng)
                        baselines.weighted_ls(data, counts, plan)
                    elif method == "full":
                        estimation.fit_full(data)
                    else:
                        raise ValueError(f"unknown timing method {method!r}")
                    samples.append(time.perf_counter() - start)
                table.add_scalar(method, n, k, f"seconds_p{p}",
                                 float(np.median(samples)))
    return table


def run_rate_check(config: ExperimentConfig) -> MetricTable:
    """Log-log slope of MSE_slope against n (simple regression rate check)."""
    if config.case.p != 1:
        raise ConfigError("/case/p", "the rate check runs simple regression (p=1)")
    if len(config.n_grid) < 2:
        raise ConfigError("/n_grid", "need at least two n values to fit a slope")
    table = run_mse_experiment(config)
    k = config.k_grid[0]
    for method in config.methods:
        logs = np.array([
            [np.log10(n), np.log10(table.lookup(method, n, k, "mse_slope").value)]
            for n in config.n_grid
        ])
        design = np.column_stack([np.ones(len(config.n_grid)), logs[:, 0]])
        coef, _ = linalg.least_squares(design, logs[:, 1])
        table.add_scalar(method, 0, k, "log_log_slope", float(coef[1]))
    return table
