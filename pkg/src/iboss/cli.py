"""Command-line surface: select, fit, experiment, bench.

Every command writes a JSON report that echoes the command line, the resolved
configuration and the seed, so any stochastic run can be replayed bit-exactly.
Exit code 0 means the report was fully written; on failure all partial
outputs are removed.  Usage and configuration errors exit 2, runtime failures
exit 1.  ``IBOSS_THREADS`` caps internal parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, criteria, estimation, report, simgen
from .data import DataMatrix, load_dataset
from .errors import ConfigError, DegenerateColumn, IbossError
from .selection import (
    SelectionSpec,
    full_column_ranges,
    full_means,
    iboss_dopt,
    quantile_column_ranges,
)

RANDOM_METHODS = ("uni", "lev", "slev", "levunw")


class UsageError(IbossError):
    """Bad invocation; maps to exit code 2."""


class _OutputSink:
    """Tracks files written by one command so failures leave nothing behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def register(self, p: Path) -> None:
        self.paths.append(Path(p))

    def discard_all(self) -> None:
        for p in self.paths:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iboss",
        description="Informative subdata selection and benchmarking for big-data OLS",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def add_input_flags(p):
        p.add_argument("--input", required=True, help="path to the data file")
        p.add_argument("--format", default="csv",
                       choices=["csv", "f64le-columnar"])
        p.add_argument("--response", default="y",
                       help="response column name (csv)")
        p.add_argument("--transform", default="none",
                       choices=["none", "log", "log-excluding"])
        p.add_argument("--transform-exclude", default="",
                       help="comma-separated columns exempt from the log transform")

    sel = sub.add_parser("select", help="write the extreme-value subdata")
    add_input_flags(sel)
    sel.add_argument("--k", type=int, required=True)
    sel.add_argument("--mode", default="sequential",
                     choices=["sequential", "parallel-merge"])
    sel.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="fit one method and report estimates")
    add_input_flags(fit)
    fit.add_argument("--method", required=True,
                     choices=["dopt", "uni", "lev", "slev", "levunw", "dc", "full"])
    fit.add_argument("--k", type=int, default=None)
    fit.add_argument("--mode", default="sequential",
                     choices=["sequential", "parallel-merge"])
    fit.add_argument("--alpha", type=float, default=None,
                     help="shrinkage for slev (default 0.9)")
    fit.add_argument("--blocks", type=int, default=None,
                     help="block count for dc (default floor(n^1/4))")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--out", required=True)

    exp = sub.add_parser("experiment", help="run a simulation study from a config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True)

    bench = sub.add_parser("bench", help="wall-clock benchmark from a config")
    bench.add_argument("--config", required=True)
    bench.add_argument("--seed", type=int, default=None,
                       help="overrides the config seed")
    bench.add_argument("--out", required=True)
    return parser


def _load_input(args) -> DataMatrix:
    exclude = tuple(c for c in args.transform_exclude.split(",") if c)
    transform = None if args.transform == "none" else args.transform
    return load_dataset(args.input, args.format, args.response,
                        transform, exclude)


def _echo_config(args, skip=("cmd",)) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_subdata_csv(path: Path, names: list[str], z: np.ndarray,
                       y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(z.shape[0]):
            writer.writerow([repr(float(v)) for v in z[i]] + [repr(float(y[i]))])


def _cmd_select(args, sink: _OutputSink) -> dict:
    data = _load_input(args)
    if args.k > data.n or args.k < 2 * data.p:
        raise UsageError(f"need 2p <= k <= n (p={data.p}, n={data.n}, k={args.k})")
    spec = SelectionSpec(k=args.k, mode=args.mode)
    sub = iboss_dopt(data, spec)
    idx_path = sink.path("indices.txt")
    with open(idx_path, "w") as fh:
        fh.writelines(f"{i}\n" for i in sub.indices)
    sub_path = sink.path("subdata.csv")
    _write_subdata_csv(sub_path, data.names, sub.z, sub.y)
    return {
        "selection": {
            "k": spec.k,
            "k_eff": sub.k_eff,
            "mode": spec.mode,
            "tie_break": spec.tie_break,
            "quotas": sub.provenance["quotas"],
            "per_column_selected": sub.provenance["per_column_selected"],
            "quota_rule": sub.provenance["quota_rule"],
        },
        "outputs": [str(idx_path), str(sub_path)],
    }


def _fit_payload(fit: estimation.FitResult, beta0_adj: float | None,
                 names: list[str],
                 bounds: list[criteria.BoundReport] | None = None,
                 sigma2_used: float | None = None) -> dict:
    coef_names = ["intercept"] + names[:-1]
    intervals = [
        dict(coefficient=coef_names[j],
             **vars(estimation.confidence_interval(
                 float(fit.beta[j]), float(fit.se[j]), 0.95)))
        for j in range(fit.beta.shape[0])
    ]
    payload = {
        "method": fit.method_tag,
        "beta0": fit.beta0,
        "beta1": fit.beta1.tolist(),
        "beta0_adjusted": beta0_adj,
        "sigma2_hat": fit.sigma2_hat,
        "se": fit.se.tolist(),
        "cov": fit.cov.tolist(),
        "dof": fit.dof,
        "confidence_intervals": intervals,
        "sigma2_used_for_bounds": sigma2_used,
    }
    result = {"fit": payload}
    if bounds is not None:
        result["bounds"] = [b.to_dict() for b in bounds]
    return result


def _dopt_bounds(data: DataMatrix, sub, sigma2: float) -> list[criteria.BoundReport]:
    ranges = full_column_ranges(data)
    reports = [criteria.det_ceiling_report(sub, sigma2, ranges)]
    r = sub.k_eff // (2 * data.p)
    if r >= 1 and sub.k_eff == 2 * data.p * r:
        # the ratio and variance bounds are stated for an even quota k = 2pr,
        # and only exist when every column varies; skip them otherwise
        try:
            qranges = quantile_column_ranges(data, r)
            reports.append(criteria.attainment_ratio_report(sub, ranges, qranges, r))
            reports.extend(criteria.variance_bound_reports(sub, sigma2, ranges,
                                                    qranges, r))
        except DegenerateColumn:
            pass
    return reports


def _cmd_fit(args, sink: _OutputSink) -> dict:
    data = _load_input(args)
    method = args.method
    needs_k = method in ("dopt",) + RANDOM_METHODS
    if needs_k:
        if args.k is None:
            raise UsageError(f"--k is required for method {method}")
        if args.k > data.n:
            raise UsageError(f"k={args.k} exceeds n={data.n}")
    if method in RANDOM_METHODS and args.seed is None:
        raise UsageError(f"--seed is required for stochastic method {method}")

    if method == "dopt":
        if args.k < 2 * data.p:
            raise UsageError(f"need k >= 2p = {2 * data.p}")
        sub = iboss_dopt(data, SelectionSpec(k=args.k, mode=args.mode))
        fit = estimation.ols_fit(sub)
        y_bar, z_bar = full_means(data)
        adj = estimation.adjusted_intercept(fit.beta1, y_bar, z_bar)
        sigma2_used = fit.sigma2_hat if fit.sigma2_hat > 0 else 1.0
        bounds = _dopt_bounds(data, sub, sigma2_used)
        return _fit_payload(fit, adj, data.names, bounds, sigma2_used)
    if method == "full":
        fit = estimation.fit_full(data)
        return _fit_payload(fit, None, data.names)
    if method == "dc":
        s = args.blocks or baselines.default_block_count(data.n)
        beta = baselines.divide_and_conquer(data, s)
        return {"fit": {
            "method": f"dc({s})",
            "beta0": float(beta[0]),
            "beta1": beta[1:].tolist(),
        }}
    # random subsampling methods
    rng = simgen.substream(args.seed, 0)
    plan = baselines.make_plan(data, method, args.alpha)
    counts = baselines.draw(plan, args.k, rng)
    if method in ("uni", "levunw"):
        rows = np.repeat(np.flatnonzero(counts.eta), counts.eta[counts.eta > 0])
        x = np.column_stack([np.ones(rows.size), data.z[rows, :]])
        fit = estimation.fit_design(x, data.y[rows], plan.method_tag)
        return _fit_payload(fit, None, data.names)
    beta = baselines.weighted_ls(data, counts, plan)
    return {"fit": {
        "method": plan.method_tag,
        "beta0": float(beta[0]),
        "beta1": beta[1:].tolist(),
        "note": "weighted subsampling estimators carry no interval estimates",
    }}


def _require(cfg: dict, key: str, pointer: str):
    if key not in cfg:
        raise ConfigError(pointer, "field is required")
    return cfg[key]


def _parse_case(cfg: dict) -> simgen.CovariateCase:
    case_cfg = _require(cfg, "case", "/case")
    if not isinstance(case_cfg, dict):
        raise ConfigError("/case", "must be an object")
    tag = _require(case_cfg, "tag", "/case/tag")
    if tag not in simgen.CASE_TAGS:
        raise ConfigError("/case/tag", f"unknown case {tag!r}")
    p = case_cfg.get("p", 50 if tag == "interactions" else None)
    if p is None:
        raise ConfigError("/case/p", "field is required")
    covariance = case_cfg.get("covariance")
    try:
        return simgen.CovariateCase(
            tag=tag, p=int(p),
            covariance=np.asarray(covariance, dtype=np.float64)
            if covariance is not None else None)
    except ValueError as exc:
        raise ConfigError("/case", str(exc)) from exc


def _parse_experiment_config(cfg: dict) -> simgen.ExperimentConfig:
    case = _parse_case(cfg)
    seed = _require(cfg, "seed", "/seed")
    if not isinstance(seed, int):
        raise ConfigError("/seed", "must be an integer (seeds are mandatory)")
    beta_cfg = cfg.get("beta", "ones")
    if beta_cfg == "ones":
        beta = np.ones(case.p + 1)
    else:
        beta = np.asarray(beta_cfg, dtype=np.float64)
    try:
        return simgen.ExperimentConfig(
            case=case,
            beta=beta,
            sigma2=float(cfg.get("sigma2", 9.0)),
            n_grid=tuple(int(n) for n in _require(cfg, "n_grid", "/n_grid")),
            k_grid=tuple(int(k) for k in _require(cfg, "k_grid", "/k_grid")),
            replications=int(_require(cfg, "replications", "/replications")),
            methods=tuple(_require(cfg, "methods", "/methods")),
            seed=seed,
            error_model=cfg.get("error_model", "homoscedastic"),
            slev_alpha=float(cfg.get("slev_alpha", baselines.DEFAULT_SLEV_ALPHA)),
            dc_blocks=cfg.get("dc_blocks"),
        )
    except ValueError as exc:
        raise ConfigError("", str(exc)) from exc


def _run_experiment(cfg: dict) -> simgen.MetricTable:
    runner = _require(cfg, "runner", "/runner")
    if runner == "mse":
        return simgen.run_mse_experiment(_parse_experiment_config(cfg))
    if runner == "coverage":
        return simgen.run_coverage_experiment(
            _parse_experiment_config(cfg), int(cfg.get("target_coef", 1)))
    if runner == "mspe":
        return simgen.run_mspe_experiment(
            _parse_experiment_config(cfg), int(cfg.get("n_new", 5000)))
    if runner == "rate-check":
        return simgen.run_rate_check(_parse_experiment_config(cfg))
    if runner == "bootstrap":
        seed = _require(cfg, "seed", "/seed")
        if not isinstance(seed, int):
            raise ConfigError("/seed", "must be an integer (seeds are mandatory)")
        data = _bootstrap_data(cfg)
        b = int(cfg.get("bootstrap_samples", 1000))
        k_grid = tuple(int(k) for k in _require(cfg, "k_grid", "/k_grid"))
        methods = tuple(_require(cfg, "methods", "/methods"))
        return simgen.bootstrap_mse(
            data, methods, k_grid, b, simgen.substream(seed, 5),
            slev_alpha=float(cfg.get("slev_alpha", baselines.DEFAULT_SLEV_ALPHA)),
            dc_blocks=cfg.get("dc_blocks"))
    if runner == "timing":
        seed = _require(cfg, "seed", "/seed")
        if not isinstance(seed, int):
            raise ConfigError("/seed", "must be an integer (seeds are mandatory)")
        return simgen.timing_benchmark(
            tuple(int(n) for n in _require(cfg, "n_grid", "/n_grid")),
            tuple(int(p) for p in _require(cfg, "p_grid", "/p_grid")),
            int(_require(cfg, "k", "/k")),
            simgen.substream(seed, 6),
            repeats=int(cfg.get("repeats", 3)))
    raise ConfigError("/runner", f"unknown runner {runner!r}")


def _bootstrap_data(cfg: dict) -> DataMatrix:
    if "input" in cfg:
        inp = cfg["input"]
        return load_dataset(
            _require(inp, "path", "/input/path"),
            inp.get("format", "csv"),
            inp.get("response", "y"),
            inp.get("transform"),
            tuple(inp.get("transform_exclude", [])))
    case = _parse_case(cfg)
    n = int(_require(cfg, "n", "/n"))
    beta_cfg = cfg.get("beta", "ones")
    beta = np.ones(case.p + 1) if beta_cfg == "ones" else np.asarray(beta_cfg)
    rng = simgen.substream(int(_require(cfg, "seed", "/seed")), 7)
    return simgen.gen_dataset(case, n, beta, float(cfg.get("sigma2", 9.0)),
                              cfg.get("error_model", "homoscedastic"), rng)


def _cmd_experiment(args, sink: _OutputSink) -> tuple[dict, dict, int | None]:
    with open(args.config) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"config is not valid JSON: {exc}") from exc
    table = _run_experiment(cfg)
    csv_path = sink.path("metrics.csv")
    table.write_csv(csv_path)
    json_path = sink.path("metrics.json")
    table.write_json(json_path)
    figures = report.render_metric_figures(table, sink.out_dir, "metrics")
    for f in figures:
        sink.register(f)
    results = {
        "metrics": table.to_records(),
        "outputs": [str(csv_path), str(json_path)] + [str(f) for f in figures],
    }
    return results, cfg, cfg.get("seed")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sink = _OutputSink(out_dir)
    started = time.perf_counter()
    try:
        seed = getattr(args, "seed", None)
        if args.cmd == "select":
            results = _cmd_select(args, sink)
            config = _echo_config(args)
        elif args.cmd == "fit":
            results = _cmd_fit(args, sink)
            config = _echo_config(args)
        elif args.cmd == "experiment":
            results, config, seed = _cmd_experiment(args, sink)
        else:  # bench
            with open(args.config) as fh:
                cfg = json.load(fh)
            if args.seed is not None:
                cfg["seed"] = args.seed
            cfg["runner"] = "timing"
            results, config, seed = _run_bench(cfg, sink)
        wall = time.perf_counter() - started
        rep = report.build_report(["iboss"] + argv, config, seed, results, wall)
        report_path = sink.path(f"{args.cmd}_report.json")
        report.write_report(rep, report_path)
        print(report_path)
        return 0
    except (UsageError, ConfigError) as exc:
        sink.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IbossError as exc:
        sink.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        sink.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _run_bench(cfg: dict, sink: _OutputSink) -> tuple[dict, dict, int | None]:
    table = _run_experiment(cfg)
    csv_path = sink.path("metrics.csv")
    table.write_csv(csv_path)
    json_path = sink.path("metrics.json")
    table.write_json(json_path)
    figures = report.render_metric_figures(table, sink.out_dir, "bench")
    for f in figures:
        sink.register(f)
    results = {
        "metrics": table.to_records(),
        "outputs": [str(csv_path), str(json_path)] + [str(f) for f in figures],
    }
    return results, cfg, cfg.get("seed")


if __name__ == "__main__":
    raise SystemExit(main())
