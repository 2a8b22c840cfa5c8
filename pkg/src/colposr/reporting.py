"""Aggregate per-image evaluation reports into delimited tables and figures.

Emits three CSV tables: per-channel supremum errors with summary rows,
error-range percentages per channel with Average/Minimum/Maximum/Median
rows, and the maximum-intensity triple with the removal verdict per image.
Figures rendering the same aggregates are written next to the CSVs.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluate import EvalReport, RANGE_LABELS
from .imaging import CHANNELS
from .training import TrainRun


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_sup_error_table(reports: list[EvalReport], path) -> Path:
    """Per-image per-channel maximum absolute errors + summary rows."""
    path = Path(path)
    data = np.array([r.sup_errors for r in reports], dtype=np.float64)
    rows = [[r.image_id, *map(int, r.sup_errors)] for r in reports]
    rows.append(["Average", *[round(v, 1) for v in data.mean(axis=0)]])
    rows.append(["Minimum", *map(int, data.min(axis=0))])
    rows.append(["Maximum", *map(int, data.max(axis=0))])
    _write_rows(path, ["image", "red", "green", "blue"], rows)
    return path


def write_error_range_table(reports: list[EvalReport], path) -> Path:
    """Percentage of pixels within each absolute-error band, per channel."""
    path = Path(path)
    header = ["image"] + [
        f"{label}_{ch.lower()}" for label in RANGE_LABELS for ch in CHANNELS
    ]
    data = np.array(
        [[r.range_pcts[k][b] for b in range(3) for k in range(3)] for r in reports]
    )
    rows = [
        [r.image_id, *[round(v, 1) for v in row]] for r, row in zip(reports, data)
    ]
    for name, agg in (
        ("Average", data.mean(axis=0)),
        ("Minimum", data.min(axis=0)),
        ("Maximum", data.max(axis=0)),
        ("Median", np.median(data, axis=0)),
    ):
        rows.append([name, *[round(v, 1) for v in agg]])
    _write_rows(path, header, rows)
    return path


def write_intensity_table(reports: list[EvalReport], path) -> Path:
    """Maximum-intensity triple and removal verdict per image."""
    path = Path(path)
    rows = [
        [
            r.image_id,
            round(r.int_max_I, 1),
            round(r.int_max_prime, 1),
            round(r.int_max_r, 1),
            "Yes" if r.sr_removed else "No",
        ]
        for r in reports
    ]
    _write_rows(
        path, ["image", "int_max_original", "int_max_masked", "int_max_restored", "removed"], rows
    )
    return path


def plot_sup_errors(reports: list[EvalReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.array([r.sup_errors for r in reports])
    x = np.arange(len(reports))
    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(reports)), 4))
    for k, (ch, color) in enumerate(zip(CHANNELS, ("red", "green", "blue"))):
        ax.bar(x + (k - 1) * 0.27, data[:, k], width=0.27, color=color, label=ch)
    ax.set_xticks(x)
    ax.set_xticklabels([r.image_id for r in reports], rotation=90, fontsize=7)
    ax.set_ylabel("max absolute error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_error_ranges(reports: list[EvalReport], path) -> Path:
    """Stacked bars of the error-band percentages, averaged over images."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.array([r.range_pcts for r in reports]).mean(axis=0)  # channel x band
    fig, ax = plt.subplots(figsize=(6, 4))
    bottom = np.zeros(3)
    for b, (label, color) in enumerate(zip(RANGE_LABELS, ("#4daf4a", "#ff7f00", "#e41a1c"))):
        ax.bar(CHANNELS, data[:, b], bottom=bottom, color=color, label=label)
        bottom += data[:, b]
    ax.set_ylabel("% of pixels")
    ax.set_ylim(0, 100)
    ax.legend(title="abs error")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_learning_curves(runs: list[TrainRun], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for run in runs:
        epochs = np.arange(1, len(run.train_curve) + 1)
        ax.plot(epochs, run.train_curve, label=f"{run.run_id} train")
        ax.plot(epochs, run.val_curve, linestyle="--", label=f"{run.run_id} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean squared error")
    if runs:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def write_report(reports: list[EvalReport], out_dir, runs: list[TrainRun] | None = None) -> dict:
    """Emit every aggregate table and figure; returns the artifact paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "table3": write_sup_error_table(reports, out / "table3.csv"),
        "table4": write_error_range_table(reports, out / "table4.csv"),
        "fig_sup_errors": plot_sup_errors(reports, out / "fig_sup_errors.png"),
        "fig_error_ranges": plot_error_ranges(reports, out / "fig_error_ranges.png"),
    }
    if all(r.int_max_I is not None for r in reports):
        artifacts["table5"] = write_intensity_table(reports, out / "table5.csv")
    if runs:
        artifacts["fig_learning_curves"] = plot_learning_curves(
            runs, out / "fig_learning_curves.png"
        )
    return artifacts
