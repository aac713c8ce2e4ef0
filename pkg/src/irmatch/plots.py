"""Figure rendering for training and evaluation reports.

Every figure is written next to its CSV twin so a report directory is
self-contained. The Agg backend keeps this usable on headless boxes.
"""

import os
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _ensure_dir(path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def plot_threshold_sweep(rows: Sequence[Dict[str, float]], path: str) -> None:
    """Precision/recall/F1 against the decision threshold."""
    _ensure_dir(path)
    thresholds = [r["threshold"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thresholds, [r["precision"] for r in rows],
            label="precision", marker=".")
    ax.plot(thresholds, [r["recall"] for r in rows],
            label="recall", marker=".")
    ax.plot(thresholds, [r["f1"] for r in rows], label="F1", marker=".")
    ax.set_xlabel("threshold")
    ax.set_ylabel("metric")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_history(history: Sequence[Dict[str, float]], path: str) -> None:
    """Loss curves on the left axis, F1 curves on the right."""
    _ensure_dir(path)
    epochs = [r["epoch"] for r in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r["train_loss"] for r in history],
            label="train loss", color="tab:blue")
    ax.plot(epochs, [r["val_loss"] for r in history],
            label="val loss", color="tab:cyan")
    ax.set_xlabel("epoch")
    ax.set_ylabel("BCE loss")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(epochs, [r["train_f1"] for r in history],
             label="train F1", color="tab:orange", linestyle="--")
    ax2.plot(epochs, [r["val_f1"] for r in history],
             label="val F1", color="tab:red", linestyle="--")
    ax2.set_ylabel("F1")
    ax2.set_ylim(0.0, 1.05)
    lines1, labels1 = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines1 + lines2, labels1 + labels2, loc="center right",
              fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
