"""CSV tables and SVG plots for batch outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "reflprior"
import matplotlib.pyplot as plt  # noqa: E402


def write_trace(stem, trace, label: str = "expected energy") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.svg`` for one energy trace.

    Suffixes are appended, so a stem like ``x.energy`` keeps its dot.
    """
    csv_path, svg_path = Path(f"{stem}.csv"), Path(f"{stem}.svg")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", label])
        w.writerows(enumerate(trace))
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(range(len(trace)), trace, marker="o")
    ax.set_xlabel("step")
    ax.set_ylabel(label)
    if len(trace) and min(trace) > 0:
        ax.set_yscale("log")
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(svg_path, metadata={"Date": None}, format="svg")
    plt.close(fig)
    return csv_path, svg_path


def write_table(stem, header: list[str], rows: list[list], bar_column: int | None = None) -> tuple[Path, Path | None]:
    """CSV of ``rows``; with ``bar_column`` also a bar chart of that column."""
    csv_path = Path(f"{stem}.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    if bar_column is None:
        return csv_path, None
    svg_path = Path(f"{stem}.svg")
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(rows)), 3))
    ax.bar([str(r[0]) for r in rows], [float(r[bar_column]) for r in rows])
    ax.set_ylabel(header[bar_column])
    ax.tick_params(axis="x", labelrotation=20)
    fig.tight_layout()
    fig.savefig(svg_path, metadata={"Date": None}, format="svg")
    plt.close(fig)
    return csv_path, svg_path
