"""Matplotlib figures the CLI writes alongside its delimited reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def gain_schedule_figure(rows: list[tuple[float, float, float]]):
    """Both gain curves over progress u; rows are (u, alpha_txt, alpha_img)."""
    u = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(u, [r[1] for r in rows], label="alpha_txt", color="tab:blue")
    ax.plot(u, [r[2] for r in rows], label="alpha_img", color="tab:orange")
    ax.axhline(1.0, color="grey", lw=0.8, ls=":")
    ax.set_xlabel("progress u")
    ax.set_ylabel("attention gain")
    ax.set_title("Scheduled attention gains")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def reward_trajectory_figure(trajectories: list[list[float]]):
    """Per-seed reward curves (faint) with their mean (bold)."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    arr = np.asarray(trajectories, dtype=np.float64)
    steps = np.arange(1, arr.shape[1] + 1)
    for row in arr:
        ax.plot(steps, row, color="tab:blue", alpha=min(0.15, 8.0 / max(len(arr), 1)), lw=0.8)
    ax.plot(steps, arr.mean(axis=0), color="tab:red", lw=2.0, label="mean reward")
    ax.set_xlabel("update step")
    ax.set_ylabel("reward")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Planted-environment reward trajectories")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=120)
    plt.close(fig)
