"""Static PNG figures emitted by the pipeline stages."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_gamma_curve(values, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(np.arange(len(values)), values, lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("label agreement")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_curves(d_loss, g_loss, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(d_loss, lw=0.6, label="D")
    ax.plot(g_loss, lw=0.6, label="G")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_image_grid(images, path: Path, ncol: int = 10, title: str | None = None) -> None:
    """images: (n, 1, H, W) in [-1, 1]."""
    images = np.asarray(images)
    n = len(images)
    nrow = (n + ncol - 1) // ncol
    fig, axes = plt.subplots(nrow, ncol, figsize=(ncol * 0.7, nrow * 0.7), squeeze=False)
    for i in range(nrow * ncol):
        ax = axes[i // ncol][i % ncol]
        ax.axis("off")
        if i < n:
            ax.imshow(images[i, 0] * 0.5 + 0.5, cmap="gray", vmin=0, vmax=1)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_conditional_histogram(hist, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3))
    centers = (hist.bin_edges[:-1] + hist.bin_edges[1:]) / 2
    ax.bar(centers, hist.counts, width=0.09)
    ax.set_xlabel("target likelihood of sample")
    ax.set_ylabel(f"count (surrogate likelihood > {hist.threshold})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_dynamics_scatter(records, easy_mask, path: Path) -> None:
    """One panel per checkpoint epoch: P_T on x, P_S on y, colored easy/hard."""
    epochs = sorted({r.epoch for r in records})
    fig, axes = plt.subplots(1, len(epochs), figsize=(3 * len(epochs), 3), squeeze=False)
    for k, ep in enumerate(epochs):
        ax = axes[0][k]
        sub = [r for r in records if r.epoch == ep]
        pt = np.array([r.p_t for r in sub])
        ps = np.array([r.p_s for r in sub])
        ids = np.array([r.sample_id for r in sub])
        easy = easy_mask[ids]
        ax.scatter(pt[easy], ps[easy], s=4, alpha=0.5, label="easy")
        ax.scatter(pt[~easy], ps[~easy], s=4, alpha=0.5, label="hard")
        ax.set_title(f"epoch {ep}")
        ax.set_xlabel("target likelihood")
        if k == 0:
            ax.set_ylabel("surrogate likelihood")
            ax.legend(markerscale=2, fontsize=8)
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
