"""Run reports: trace CSV columns, JSON summaries, figures, comparisons.

Trace column sets are fixed per application: the common prefix is
iter,time_s,cost,gnorm,stepsize followed by the application distances
(dist_u/dist_v for the two-block problems, train_error/test_error for
completion, dist_x for the ellipsoid).  Figures are rendered next to the
delimited output with matplotlib's Agg backend; they are a convenience
layer, the CSV stays the machine-readable artifact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import fileio
from .solvers import RunReport

__all__ = [
    "trace_columns",
    "write_trace",
    "summary_payload",
    "render_trace_figure",
    "render_sweep_figure",
    "comparison_table",
    "format_table",
]

TRACE_EXTRAS = {
    "cca": ("dist_u", "dist_v"),
    "tsvd": ("dist_u", "dist_v"),
    "trcomp": ("train_error", "test_error", "halvings"),
    "ellipsoid": ("dist_x",),
}


def trace_columns(report: RunReport, application: str) -> dict[str, np.ndarray]:
    columns = {
        "iter": report.column("iteration"),
        "time_s": report.column("time_s"),
        "cost": report.column("cost"),
        "gnorm": report.column("gnorm"),
        "stepsize": report.column("stepsize"),
    }
    present = set(report.records[0].extras) if report.records else set()
    for name in TRACE_EXTRAS.get(application, ()):
        if name in present:
            columns[name] = report.column(name)
    return columns


def write_trace(path, report: RunReport, application: str) -> None:
    fileio.write_csv(path, trace_columns(report, application))


def summary_payload(report: RunReport, application: str, config_echo: dict,
                    kappas: dict | None = None) -> dict:
    last = report.records[-1]
    final = {"iterations": report.iterations,
             "cost": last.cost,
             "gnorm": last.gnorm}
    final.update(last.extras)
    payload = {
        "application": application,
        "final": final,
        "termination": report.termination,
        "timing": {"total_s": last.time_s},
        "config": config_echo,
    }
    if kappas:
        payload["kappa"] = kappas
    return payload


def render_trace_figure(path, report: RunReport, application: str,
                        title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    columns = trace_columns(report, application)
    iters = columns["iter"]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].semilogy(iters, np.maximum(columns["gnorm"], 1e-300))
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("gradient norm")
    axes[0].grid(True, alpha=0.3)
    plotted = False
    for name in TRACE_EXTRAS.get(application, ()):
        if name in columns and name != "halvings":
            vals = np.maximum(np.abs(columns[name]), 1e-300)
            axes[1].semilogy(iters, vals, label=name)
            plotted = True
    if not plotted:
        axes[1].plot(iters, columns["cost"], label="cost")
    axes[1].set_xlabel("iteration")
    axes[1].legend()
    axes[1].grid(True, alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(path, lams, kappas, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lams = np.asarray(lams, dtype=float)
    kappas = np.asarray(kappas, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    mask = np.isfinite(kappas)
    ax.plot(lams[mask], kappas[mask], marker=".", lw=1)
    ax.set_xlabel("lambda")
    ax.set_ylabel("condition number")
    ax.grid(True, alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


_TABLE_FIELDS = ("metric", "method", "iters", "time_s", "gnorm")


def comparison_table(summary_paths) -> list[dict]:
    """Rows from JSON summaries, one per run, with a best-iteration marker.

    All summaries must belong to the same application; the run with the
    fewest iterations within each method group is flagged in 'best'.
    """
    rows = []
    application = None
    for path in summary_paths:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"summary not found: {p}")
        payload = json.loads(p.read_text())
        app = payload.get("application")
        if application is None:
            application = app
        elif app != application:
            raise ValueError(
                f"mixed applications in comparison: {application} vs {app}")
        final = payload.get("final", {})
        row = {
            "metric": payload.get("config", {}).get("problem", {})
                      .get("metric", ""),
            "method": payload.get("config", {}).get("solver", {})
                      .get("method", ""),
            "iters": int(final.get("iterations", -1)),
            "time_s": float(payload.get("timing", {}).get("total_s",
                                                          float("nan"))),
            "gnorm": float(final.get("gnorm", float("nan"))),
        }
        for key, value in final.items():
            if key.startswith("dist_") or key.endswith("_error"):
                row[key] = float(value)
        rows.append(row)
    by_method: dict[str, list[dict]] = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    for group in by_method.values():
        best = min(group, key=lambda r: r["iters"])
        for row in group:
            row["best"] = "*" if row is best else ""
    return rows


def format_table(rows: list[dict]) -> tuple[str, str]:
    """(csv_text, aligned_text) for a list of comparison rows."""
    names: list[str] = list(_TABLE_FIELDS)
    for row in rows:
        for key in row:
            if key not in names and key != "best":
                names.append(key)
    names.append("best")

    def cell(row, name):
        value = row.get(name, "")
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

    csv_lines = [",".join(names)]
    csv_lines.extend(",".join(cell(r, n) for n in names) for r in rows)
    widths = [max(len(n), *(len(cell(r, n)) for r in rows)) if rows else len(n)
              for n in names]
    txt_lines = ["  ".join(n.ljust(w) for n, w in zip(names, widths))]
    for r in rows:
        txt_lines.append("  ".join(cell(r, n).ljust(w)
                                   for n, w in zip(names, widths)))
    return "\n".join(csv_lines) + "\n", "\n".join(txt_lines) + "\n"
