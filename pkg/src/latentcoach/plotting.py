"""Report figures (PNG, non-interactive Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps reruns byte-identical
_PNG_META = {"Software": None}
STATIC_STD = 1e-6


def _grid(n):
    cols = min(n, 4)
    rows = int(np.ceil(n / cols))
    return rows, cols


def plot_trajectories(path, timestamps, truth, predictions: dict, columns, title=""):
    """Overlay predicted motor trajectories on the ground truth, one panel per moving motor.

    ``predictions`` maps a row label to a (T, M) array aligned with ``truth``.
    """
    truth = np.asarray(truth, dtype=float)
    moving = [j for j in range(truth.shape[1]) if truth[:, j].std() >= STATIC_STD]
    moving = moving or list(range(truth.shape[1]))
    rows, cols = _grid(len(moving))
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.4 * rows), squeeze=False)
    for ax, j in zip(axes.flat, moving):
        ax.plot(timestamps, truth[:, j], color="k", lw=2.0, label="ground truth")
        for label, pred in predictions.items():
            ax.plot(timestamps, np.asarray(pred)[:, j], lw=1.0, label=label)
        ax.set_title(columns[j], fontsize=9)
        ax.set_xlabel("time (s)", fontsize=8)
        ax.set_ylabel("deg", fontsize=8)
        ax.tick_params(labelsize=7)
    for ax in list(axes.flat)[len(moving):]:
        ax.axis("off")
    axes.flat[0].legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=80, metadata=_PNG_META)
    plt.close(fig)


def plot_latent(path, body, latents: dict, title=""):
    """Training latent points per body part with the given latent trajectories on top.

    ``latents`` maps a row label to ``{part: (T, 2) array}``.
    """
    parts = [n for n in body.partition.names if n in body.models]
    fig, axes = plt.subplots(1, len(parts), figsize=(4.0 * len(parts), 3.6), squeeze=False)
    for ax, part in zip(axes.flat, parts):
        X = body[part].latent_X
        ax.scatter(X[:, 0], X[:, 1], s=4, color="0.75", label="training")
        for label, per_part in latents.items():
            if part in per_part:
                L = np.asarray(per_part[part])
                ax.plot(L[:, 0], L[:, 1], lw=1.2, label=label)
                ax.plot(L[0, 0], L[0, 1], "o", ms=3, color="k")
        ax.set_title(part, fontsize=9)
        ax.set_xlabel("x1", fontsize=8)
        ax.set_ylabel("x2", fontsize=8)
        ax.tick_params(labelsize=7)
    axes.flat[0].legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=80, metadata=_PNG_META)
    plt.close(fig)
