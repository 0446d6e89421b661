"""Command reports and figure rendering.

Each CLI command writes one JSON report (validating against the schema
shipped in ``iboss/schema/report.schema.json``) next to its delimited
outputs.  Experiment and benchmark reports additionally render one PNG per
metric family so the CSV always arrives with its picture.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .simgen import MetricTable  # noqa: E402

PACKAGE_VERSION = "0.1.0"

_LOG_METRICS = ("mse", "mspe", "bootstrap", "seconds")

_METHOD_STYLE = {
    "dopt": dict(color="black", marker="o"),
    "uni": dict(color="tab:green", marker="+", linestyle=":"),
    "lev": dict(color="tab:blue", marker="x", linestyle="--"),
    "slev": dict(color="tab:purple", marker="^", linestyle="--"),
    "levunw": dict(color="tab:brown", marker="v", linestyle="--"),
    "dc": dict(color="tab:orange", marker="s", linestyle="-."),
    "full": dict(color="tab:cyan", marker="D", linestyle=(0, (7, 3))),
}


def schema_path() -> Path:
    return Path(str(resources.files("iboss.schema") / "report.schema.json"))


def load_schema() -> dict:
    with open(schema_path()) as fh:
        return json.load(fh)


def build_report(command: list[str], config: dict, seed: int | None,
                 results: dict, wall_seconds: float) -> dict:
    return {
        "command": list(command),
        "config": config,
        "version": PACKAGE_VERSION,
        "seed": seed,
        "timing": {"wall_seconds": wall_seconds},
        "results": results,
    }


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _style(method: str) -> dict:
    base = method.split("(")[0]
    return _METHOD_STYLE.get(base, dict(marker="."))


def _wants_log(metric: str) -> bool:
    return any(metric.startswith(prefix) for prefix in _LOG_METRICS)


def render_metric_figures(table: MetricTable, out_dir, stem: str) -> list[Path]:
    """One PNG per metric: lines over n (or k when n is constant) per method."""
    out_dir = Path(out_dir)
    paths = []
    metrics = sorted({row.metric for row in table.rows})
    for metric in metrics:
        rows = [r for r in table.rows if r.metric == metric]
        ns = sorted({r.n for r in rows})
        ks = sorted({r.k for r in rows})
        x_field = "n" if len(ns) >= len(ks) else "k"
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        plotted = False
        for method in sorted({r.method for r in rows}):
            pts = sorted(
                ((getattr(r, x_field), r.value) for r in rows
                 if r.method == method and getattr(r, x_field) > 0),
            )
            if not pts:
                continue
            xs = [pt[0] for pt in pts]
            ys = [pt[1] for pt in pts]
            ax.plot(xs, ys, label=method, **_style(method))
            plotted = True
        if not plotted:
            plt.close(fig)
            continue
        ax.set_xscale("log")
        if _wants_log(metric) and all(
                r.value > 0 for r in rows if getattr(r, x_field) > 0):
            ax.set_yscale("log")
        if metric == "coverage":
            ax.axhline(0.95, color="gray", linestyle="--", linewidth=0.8)
        ax.set_xlabel(x_field)
        ax.set_ylabel(metric)
        ax.legend(frameon=False, fontsize=8)
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
        fig.tight_layout()
        path = out_dir / f"{stem}_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
