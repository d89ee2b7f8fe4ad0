"""Figure rendering for run reports.

Reads the per-round metrics CSV written during a run and renders PNG
figures next to it: similarity trajectories, training losses, and (for the
compare command) overlays of several runs on a shared wall-clock axis.
Matplotlib runs on the Agg backend; nothing here opens a window.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import MetricsLog

FIGURE_DPI = 120


def _series(rows: list[dict], key: str) -> tuple[list[float], list[float]]:
    """(x, y) over rows where ``key`` is present, x being the round index."""
    xs, ys = [], []
    for row in rows:
        if row[key] is not None:
            xs.append(row["round"])
            ys.append(row[key])
    return xs, ys


def render_similarity_figure(rows: list[dict], path: str | Path) -> bool:
    """Avg-JSD and Avg-WD against the training round. Returns False when the
    log holds neither metric (a table with only one column kind logs one)."""
    panels = [
        ("avg_jsd", "Avg-JSD", "tab:blue"),
        ("avg_wd", "Avg-WD", "tab:red"),
    ]
    present = [(key, label, color) for key, label, color in panels if _series(rows, key)[0]]
    if not present:
        return False
    fig, axes = plt.subplots(1, len(present), figsize=(5.0 * len(present), 3.6), squeeze=False)
    for ax, (key, label, color) in zip(axes[0], present):
        xs, ys = _series(rows, key)
        ax.plot(xs, ys, color=color, linewidth=1.2)
        ax.set_xlabel("round")
        ax.set_ylabel(label)
        ax.set_title(f"{label} vs round")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return True


def render_loss_figure(rows: list[dict], path: str | Path) -> bool:
    """Mean generator and discriminator losses against the training round."""
    gen = _series(rows, "gen_loss")
    disc = _series(rows, "disc_loss")
    if not gen[0] and not disc[0]:
        return False
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if gen[0]:
        ax.plot(gen[0], gen[1], label="generator", color="tab:green", linewidth=1.2)
    if disc[0]:
        ax.plot(disc[0], disc[1], label="discriminator", color="tab:orange", linewidth=1.2)
    ax.set_xlabel("round")
    ax.set_ylabel("loss")
    ax.set_title("training losses")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return True


def render_run_figures(metrics_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Render all applicable figures for one run's metrics file."""
    rows = MetricsLog.read(metrics_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if rows:
        target = out / "similarity.png"
        if render_similarity_figure(rows, target):
            written.append(target)
        target = out / "losses.png"
        if render_loss_figure(rows, target):
            written.append(target)
    return written


def render_comparison_figure(
    runs: list[tuple[str, list[dict]]], path: str | Path, x_axis: str = "wall_clock_s"
) -> bool:
    """Overlay similarity trajectories of several labelled runs.

    ``x_axis`` is either ``wall_clock_s`` or ``round``; runs missing a metric
    are simply absent from that panel.
    """
    if x_axis not in ("wall_clock_s", "round"):
        raise ValueError(f"unknown x axis {x_axis!r}")
    keys = [("avg_jsd", "Avg-JSD"), ("avg_wd", "Avg-WD")]
    panels = []
    for key, label in keys:
        curves = []
        for name, rows in runs:
            pts = [(row[x_axis], row[key]) for row in rows if row[key] is not None]
            if pts:
                curves.append((name, pts))
        if curves:
            panels.append((label, curves))
    if not panels:
        return False
    fig, axes = plt.subplots(1, len(panels), figsize=(5.5 * len(panels), 3.8), squeeze=False)
    for ax, (label, curves) in zip(axes[0], panels):
        for name, pts in curves:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label=name, linewidth=1.2)
        ax.set_xlabel("wall clock (s)" if x_axis == "wall_clock_s" else "round")
        ax.set_ylabel(label)
        ax.set_title(f"{label} vs {'time' if x_axis == 'wall_clock_s' else 'round'}")
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return True
