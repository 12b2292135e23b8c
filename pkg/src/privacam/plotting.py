"""Figures rendered next to the CSV/text reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_curve(table, path, title="Defocus blur vs. depth"):
    """Blur diameter against depth, one line per camera, log depth axis for log grids."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, eps in table.columns.items():
        ax.plot(table.z, eps, label=label, lw=1.5)
    if table.spacing == "log":
        ax.set_xscale("log")
    ax.set_xlabel("depth z [m]")
    ax.set_ylabel("blur diameter [px]")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_depth_histogram(depth_values, path, valid_fraction=None, bins=50):
    depth_values = np.asarray(depth_values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if depth_values.size:
        lo, hi = depth_values.min(), depth_values.max()
        edges = np.geomspace(lo, hi, bins + 1) if hi > lo else bins
        ax.hist(depth_values, bins=edges, color="0.35")
        if hi > lo:
            ax.set_xscale("log")
    ax.set_xlabel("triangulated depth [m]")
    ax.set_ylabel("pixels")
    if valid_fraction is not None:
        ax.set_title(f"valid disparity: {100 * valid_fraction:.1f}%")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
