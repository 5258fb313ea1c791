"""Matplotlib renderings of run artifacts.

Everything draws straight to a file through the Agg backend so runs
work headless; the CLI writes these PNGs next to its delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import VisitationGrid


def _draw_walls(ax, walls):
    for x1, y1, x2, y2 in walls:
        ax.plot([x1, x2], [y1, y2], color="black", linewidth=2.5, zorder=3)


def plot_learning_curves(curves: dict, path, ylabel: str = "mean return",
                         title: str | None = None) -> None:
    """curves: label -> sequence of (env_step, value) pairs."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(curves):
        pts = curves[label]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if curves:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_visitation(grid: VisitationGrid, path, walls=(), goal=None,
                    goal_radius: float | None = None,
                    title: str | None = None) -> None:
    """Log-scaled visit counts over the unit square, y pointing up."""
    fig, ax = plt.subplots(figsize=(5, 5))
    img = np.log1p(grid.counts.astype(np.float64)).T
    ax.imshow(img, origin="lower", extent=(0.0, 1.0, 0.0, 1.0),
              cmap="viridis", interpolation="nearest")
    _draw_walls(ax, walls)
    if goal is not None and goal_radius is not None:
        ax.add_patch(plt.Circle(goal, goal_radius, fill=False,
                                color="red", linewidth=1.5, zorder=4))
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectories(episodes, path, walls=(), goal=None,
                      goal_radius: float | None = None,
                      title: str | None = None) -> None:
    """Episode paths colored by the policy subnet that produced them."""
    fig, ax = plt.subplots(figsize=(5, 5))
    cmap = plt.get_cmap("tab10")
    seen = set()
    for ep in episodes:
        xs = [p[0] for p in ep.positions]
        ys = [p[1] for p in ep.positions]
        label = f"subnet {ep.subnet}" if ep.subnet else "dense/fresh"
        ax.plot(xs, ys, color=cmap(ep.subnet % 10), alpha=0.7, linewidth=1.0,
                label=None if ep.subnet in seen else label)
        seen.add(ep.subnet)
    _draw_walls(ax, walls)
    if goal is not None and goal_radius is not None:
        ax.add_patch(plt.Circle(goal, goal_radius, fill=False,
                                color="red", linewidth=1.5, zorder=4))
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    if seen:
        ax.legend(fontsize=7, loc="lower right")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ablation(x_values, curves: dict, xlabel: str, path,
                  xticklabels=None, ylabel: str = "normalized score",
                  title: str | None = None) -> None:
    """curves: label -> one score per x value (nan for missing points)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(x_values))
    for label in sorted(curves):
        ax.plot(xs, curves[label], marker="o", label=label)
    ax.set_xticks(xs)
    ax.set_xticklabels([str(v) for v in x_values]
                       if xticklabels is None else list(xticklabels))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if curves:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bias_bars(labels, means, errors, path,
                   title: str | None = None) -> None:
    """Mean value-estimation bias per variant with standard-error bars."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(labels))
    ax.bar(xs, means, yerr=errors, capsize=4)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mean bias")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
