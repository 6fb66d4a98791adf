"""Figure rendering for the reporting commands.

Every report path writes its delimited tables first; these helpers render the
matching PNG next to them.  The Agg backend is forced so rendering works
headless, and savefig metadata is pinned for reproducible bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "interval_figure",
    "calibration_figure",
    "neighbors_figure",
    "cost_trace_figure",
]

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "uqss"}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def interval_figure(
    x: np.ndarray,
    targets: np.ndarray | None,
    lower: np.ndarray,
    upper: np.ndarray,
    path,
    point: np.ndarray | None = None,
    xlabel: str = "input",
    title: str = "prediction intervals",
):
    """Targets (when known) with the interval envelope over one input column."""
    order = np.argsort(x)
    fig, ax = plt.subplots(figsize=(7, 4))
    if targets is not None:
        ax.scatter(x, targets, s=8, alpha=0.5, color="0.4", label="target")
    ax.plot(x[order], upper[order], color="tab:red", lw=1.2, label="upper bound")
    ax.plot(x[order], lower[order], color="tab:blue", lw=1.2, label="lower bound")
    if point is not None:
        ax.plot(x[order], point[order], color="tab:green", lw=1.0, label="point prediction")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("target")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def calibration_figure(grid_nominal, found_raw, found, path):
    """Requested vs achieved cumulative probability with the identity line."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], color="0.7", lw=1, ls="--", label="identity")
    ax.plot(grid_nominal, found_raw, color="tab:orange", lw=1, label="achieved (raw)")
    ax.plot(grid_nominal, found, color="tab:blue", lw=1.5, label="achieved (isotonic)")
    ax.set_xlabel("requested cumulative probability")
    ax.set_ylabel("achieved cumulative probability")
    ax.set_title("bound correction map")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def neighbors_figure(
    anchor_xy,
    neighbor_xy,
    all_xy,
    path,
    xlabel: str,
    ylabel: str,
):
    """Selected neighbors against the full sample cloud in two chosen columns."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.scatter(all_xy[:, 0], all_xy[:, 1], s=6, alpha=0.25, color="0.6", label="all samples")
    ax.scatter(
        neighbor_xy[:, 0], neighbor_xy[:, 1], s=20, color="tab:blue", label="similar samples"
    )
    ax.scatter([anchor_xy[0]], [anchor_xy[1]], s=70, marker="*", color="tab:red", label="anchor")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title("sensitivity-weighted similar samples")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def cost_trace_figure(trace, path, ylabel: str = "cost"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(trace)), trace, lw=1.0, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.set_title("training trace")
    return _finish(fig, path)
