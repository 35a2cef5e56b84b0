"""Report writers: delimited output, a JSON mirror, and rendered figures.

CSV output is byte-stable across runs of the same study: fixed float
formats, fixed row order (level-major, eigenvalue index within level).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.pyplot as plt
import numpy as np

from .harness import ConvergenceReport

__all__ = ["CSV_COLUMNS", "write_csv", "write_json", "render_figure", "report_dict"]

CSV_COLUMNS = [
    "level",
    "h",
    "eig_index",
    "lambda_h",
    "lambda_ref",
    "eig_error",
    "efun_error",
    "fitted_rate",
    "guaranteed_rate",
    "verdict",
]

plt.rcParams.update(
    {
        "figure.figsize": (6.4, 4.2),
        "font.size": 10,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.fontsize": 9,
    }
)


def _fnum(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.12e}"


def _frate(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def _rows(report: ConvergenceReport):
    for i_level, level in enumerate(report.levels):
        for t in report.tracks:
            yield {
                "level": str(level),
                "h": _fnum(report.h[i_level]),
                "eig_index": str(t.index),
                "lambda_h": _fnum(t.lambdas[i_level]),
                "lambda_ref": _fnum(t.lambda_ref),
                "eig_error": _fnum(t.eig_errors[i_level]),
                "efun_error": _fnum(t.efun_errors[i_level]),
                "fitted_rate": _frate(t.eig_rate),
                "guaranteed_rate": _frate(report.guaranteed_rate),
                "verdict": "pass" if t.passed else "fail",
            }


def write_csv(report: ConvergenceReport, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in _rows(report):
            writer.writerow(row)


def report_dict(report: ConvergenceReport) -> dict:
    cfg = report.config
    return {
        "config": {
            "domain": cfg.domain,
            "problem": cfg.problem,
            "method": cfg.method,
            "degree": cfg.degree,
            "penalty": cfg.penalty,
            "levels": list(cfg.levels),
            "n_eigs": cfg.n_eigs,
            "reference": cfg.reference,
        },
        "guaranteed_rate": report.guaranteed_rate,
        "rows": [
            {k: row[k] for k in CSV_COLUMNS} for row in _rows(report)
        ],
        "eigenvalues": [
            {
                "eig_index": t.index,
                "lambda_ref": t.lambda_ref,
                "multiplicity": t.multiplicity,
                "fitted_rate": None if math.isnan(t.eig_rate) else t.eig_rate,
                "efun_rate": None
                if math.isnan(t.efun_rate)
                else (t.efun_rate if not math.isinf(t.efun_rate) else "inf"),
                "verdict": "pass" if t.passed else "fail",
            }
            for t in report.tracks
        ],
        "all_pass": report.all_pass,
    }


def write_json(report: ConvergenceReport, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n")


def render_figure(report: ConvergenceReport, path: Path):
    """Log-log eigenvalue/eigenfunction errors vs h, with the guaranteed slope."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = report.config
    h = np.asarray(report.h)
    fig, ax = plt.subplots()
    seen = set()
    for t in report.tracks:
        # one curve per cluster; members share errors
        key = (t.lambda_ref, t.multiplicity)
        if key in seen:
            continue
        seen.add(key)
        label = f"$\\lambda \\approx {t.lambda_ref:.4g}$"
        if t.multiplicity > 1:
            label += f" (x{t.multiplicity})"
        ax.loglog(h, t.eig_errors, "o-", label=label)
        ax.loglog(h, t.efun_errors, "s--", alpha=0.5)
    if report.tracks and np.isfinite(report.tracks[0].eig_errors[-1]):
        anchor = max(report.tracks[0].eig_errors[-1], 1e-16)
        guide = anchor * (h / h[-1]) ** report.guaranteed_rate
        ax.loglog(h, guide, "k:", label=f"slope {report.guaranteed_rate:.2f}")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(
        f"{cfg.method} / {cfg.domain} / {cfg.problem} "
        f"(solid: eigenvalue, dashed: eigenfunction)"
    )
    ax.legend(loc="best")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
