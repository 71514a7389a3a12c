"""Figure rendering for the CLI report paths (headless matplotlib)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_training_curves(log, path) -> None:
    """Loss components on the left, test mAP and pseudo-label precision
    (raw and graph-calibrated selections) on the right."""
    epochs = [r.epoch for r in log]
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(10, 4))

    ax_loss.plot(epochs, [r.loss_total for r in log], label="total", color="k")
    ax_loss.plot(epochs, [r.loss_cls for r in log], label="cls")
    if any(r.loss_cst for r in log):
        ax_loss.plot(epochs, [r.loss_cst for r in log], label="cst")
    if any(r.loss_dstl for r in log):
        ax_loss.plot(epochs, [r.loss_dstl for r in log], label="dstl")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()

    ax_metric.plot(epochs, [r.test_map for r in log], label="test mAP", color="k")
    raw = [(r.epoch, r.pseudo_precision) for r in log if r.pseudo_precision is not None]
    cal = [
        (r.epoch, r.pseudo_precision_calibrated)
        for r in log
        if r.pseudo_precision_calibrated is not None
    ]
    if raw:
        ax_metric.plot(*zip(*raw), label="pseudo precision")
    if cal:
        ax_metric.plot(*zip(*cal), label="pseudo precision (calibrated)", ls="--")
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylim(0.0, 1.05)
    ax_metric.legend()

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_class_ap_chart(names, per_class, map_value: float, path) -> None:
    """Horizontal bars of per-class AP with the mAP marked."""
    shown = [(n, ap) for n, ap in zip(names, per_class) if ap is not None]
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.25 * len(shown))))
    if shown:
        labels, aps = zip(*shown)
        pos = np.arange(len(shown))
        ax.barh(pos, aps, color="tab:blue")
        ax.set_yticks(pos, labels, fontsize=7)
        ax.invert_yaxis()
    ax.axvline(map_value, color="k", ls="--", label=f"mAP = {map_value:.4f}")
    ax.set_xlabel("average precision")
    ax.set_xlim(0.0, 1.0)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_graph_heatmap(adjacency, names, path) -> None:
    """Row-stochastic adjacency as a heatmap with label ticks."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    n = adjacency.shape[0]
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(adjacency, cmap="viridis")
    fig.colorbar(im, ax=ax, label="edge weight")
    if n <= 40:
        ax.set_xticks(range(n), names, rotation=90, fontsize=6)
        ax.set_yticks(range(n), names, fontsize=6)
    ax.set_title("label prior graph")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
