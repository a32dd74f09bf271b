"""Matplotlib renderers for the report paths (headless, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .clustering import ElbowCurve
from .evaluation import ConfusionMatrix


def save_elbow_plot(curve: ElbowCurve, selected_k: int | None, path) -> None:
    ks = [k for k, _ in curve.points]
    disp = [d for _, d in curve.points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, disp, "o-")
    if selected_k is not None:
        ax.axvline(selected_k, color="tab:red", linestyle="--",
                   label=f"selected k={selected_k}")
        ax.legend()
    ax.set_xlabel("number of clusters k")
    ax.set_ylabel("dispersion (inertia)")
    ax.set_title("Run-rate clustering elbow curve")
    ax.set_xticks(ks)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_confusion_plot(matrix: ConfusionMatrix, title: str, path) -> None:
    counts = matrix.counts
    fig, ax = plt.subplots(figsize=(4.6, 4))
    im = ax.imshow(counts, cmap="Blues")
    for t in range(counts.shape[0]):
        for p in range(counts.shape[1]):
            color = "white" if counts[t, p] > counts.max() / 2 else "black"
            ax.text(p, t, str(int(counts[t, p])), ha="center", va="center",
                    color=color)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_xticks(range(counts.shape[1]))
    ax.set_yticks(range(counts.shape[0]))
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_loss_curve(losses, title: str, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, len(losses) + 1), losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_setting_comparison(aggregates: list[dict], path) -> None:
    """Bar chart of mean accuracy per experiment setting with CI whiskers."""
    names = [f"{a['setting']['objective']}\npitch {a['setting']['pitch']}"
             for a in aggregates]
    means = [a["mean_accuracy"] for a in aggregates]
    errs = np.array([[m - a["ci95"][0] for m, a in zip(means, aggregates)],
                     [a["ci95"][1] - m for m, a in zip(means, aggregates)]])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, means, yerr=np.maximum(errs, 0.0), capsize=4,
           color="tab:blue", alpha=0.8)
    ax.axhline(0.25, color="gray", linestyle=":", label="chance")
    ax.set_ylabel("mean test accuracy")
    ax.set_ylim(0, 1)
    ax.set_title("Run-rate class prediction by setting")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
