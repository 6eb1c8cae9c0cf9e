"""PNG renderings of the CSV series written by ``sparseapt inspect``."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def histogram(edges: np.ndarray, counts: np.ndarray, path, log: bool = True) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.stairs(counts, edges, fill=True)
    if log and counts.any():
        ax.set_yscale("log")
    ax.set_xlabel("parameter value")
    ax.set_ylabel("count")
    _save(fig, path)


def center_trajectories(steps: np.ndarray, centers: np.ndarray, phases: list[str], path) -> None:
    """One line per cluster center; hard-phase steps are shaded."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for j in range(centers.shape[1]):
        ax.plot(steps, centers[:, j], lw=1)
    hard = [s for s, p in zip(steps, phases) if p == "hard"]
    if hard:
        ax.axvspan(min(hard), max(hard), color="0.9", zorder=-1)
    ax.set_xlabel("step")
    ax.set_ylabel("center")
    _save(fig, path)


def change_ratio(steps: np.ndarray, ratios: np.ndarray, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(steps, ratios, marker=".", lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("assignment change ratio")
    _save(fig, path)


def sparsity_bars(layers: list[int], row_pct: list[float], col_pct: list[float], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    x = np.arange(len(layers))
    ax.bar(x - 0.2, row_pct, width=0.4, label="zero rows %")
    ax.bar(x + 0.2, col_pct, width=0.4, label="zero columns %")
    ax.set_xticks(x, [f"layer {i}" for i in layers])
    ax.set_ylim(0, 100)
    ax.legend()
    _save(fig, path)
