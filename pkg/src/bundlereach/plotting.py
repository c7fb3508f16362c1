"""Matplotlib figures for flowpipe projections and parameter sets."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from .geometry import LinearSystem, LinearSystemSet  # noqa: E402
from .modelio import DEFAULT_FAN, project_system  # noqa: E402

# fixed metadata keeps PNG bytes identical across runs
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_projection(polygons: dict[int, np.ndarray] | Sequence[np.ndarray], labels: tuple[str, str], path,
                    samples: np.ndarray | None = None, title: str = "") -> Path:
    """Filled outline per step; ``samples`` of shape (N, T+1, 2) are overlaid as thin lines."""
    polys = list(polygons.values()) if isinstance(polygons, dict) else list(polygons)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    for poly in polys:
        if len(poly) >= 3:
            ax.add_patch(Polygon(poly, closed=True, facecolor="#9ecae1", edgecolor="#08519c", linewidth=0.3))
        elif len(poly):
            ax.plot(poly[:, 0], poly[:, 1], color="#08519c", linewidth=0.6)
    if samples is not None:
        for traj in samples:
            ax.plot(traj[:, 0], traj[:, 1], color="#e6550d", linewidth=0.3, alpha=0.6)
    ax.autoscale_view()
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def _bounded(system: LinearSystem, box: tuple[np.ndarray, np.ndarray] | None) -> LinearSystem:
    if box is None:
        return system
    return system.intersect(LinearSystem.from_box(*box))


def plot_param_sets(result: LinearSystemSet, names: Sequence[str], path, initial: LinearSystem | None = None,
                    samples: np.ndarray | None = None, fan: int = DEFAULT_FAN) -> Path | None:
    """Draw the synthesized set over the initial parameter set, first two parameters only.

    One-parameter problems are drawn as intervals. Returns ``None`` when the
    model has no parameters.
    """
    m = result.dim
    if m == 0:
        return None
    box = initial.bounding_box if initial is not None and not initial.is_empty else None
    fig, ax = plt.subplots(figsize=(5, 4))
    axes = (0, 1) if m >= 2 else None
    if m == 1:
        row = 0.0
        if initial is not None:
            lo, hi = initial.bounding_box
            ax.plot([lo[0], hi[0]], [row, row], color="0.6", linewidth=6, label="initial")
        for k, member in enumerate(result):
            lo, hi = member.bounding_box
            ax.plot([lo[0], hi[0]], [row, row], color="#31a354", linewidth=3,
                    label="synthesized" if k == 0 else None)
        ax.set_yticks([])
        ax.set_xlabel(names[0])
    else:
        if initial is not None:
            ax.add_patch(Polygon(project_system(_bounded(initial, box), axes, fan), closed=True,
                                 facecolor="0.9", edgecolor="0.4", linewidth=0.8, label="initial"))
        for k, member in enumerate(result):
            poly = project_system(_bounded(member, box), axes, fan)
            if len(poly) >= 3:
                ax.add_patch(Polygon(poly, closed=True, facecolor="#a1d99b", edgecolor="#006d2c",
                                     linewidth=0.6, label="synthesized" if k == 0 else None))
        if samples is not None and len(samples):
            ax.plot(samples[:, 0], samples[:, 1], ".", color="#006d2c", markersize=1.5)
        ax.autoscale_view()
        ax.set_xlabel(names[0])
        ax.set_ylabel(names[1])
    if result.is_empty:
        ax.set_title("empty result")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)
