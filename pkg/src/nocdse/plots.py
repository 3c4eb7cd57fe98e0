"""Figure rendering for the report paths (PHV convergence, Pareto fronts).

Figures are written next to the delimited outputs; callers pass explicit
file paths and can opt out entirely.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .objectives import OBJECTIVE_NAMES  # noqa: E402

_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple")


def save_phv_figure(traces: Sequence[tuple[str, np.ndarray, np.ndarray]],
                    path: Path, title: str = "PHV vs evaluations") -> Path:
    """traces: (label, evaluations, phv) per run, on a shared normalization."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, (label, evals, phv) in enumerate(traces):
        ax.step(evals, phv, where="post", label=label,
                color=_COLORS[i % len(_COLORS)], lw=1.6)
    ax.set_xlabel("evaluations")
    ax.set_ylabel("hypervolume (normalized, best so far)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_front_figure(objs: np.ndarray, front_mask: np.ndarray, path: Path,
                      title: str = "Pareto front") -> Path:
    """Pairwise objective projections; front members highlighted."""
    objs = np.asarray(objs, dtype=float)
    m = objs.shape[1]
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    ncols = min(3, len(pairs))
    nrows = -(-len(pairs) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.8 * nrows),
                             squeeze=False)
    for k, (i, j) in enumerate(pairs):
        ax = axes[k // ncols][k % ncols]
        ax.scatter(objs[~front_mask, i], objs[~front_mask, j], s=12, alpha=0.4,
                   color="lightgray", label="dominated")
        ax.scatter(objs[front_mask, i], objs[front_mask, j], s=16,
                   color="tab:blue", label="front")
        ax.set_xlabel(OBJECTIVE_NAMES[i], fontsize=8)
        ax.set_ylabel(OBJECTIVE_NAMES[j], fontsize=8)
        ax.tick_params(labelsize=7)
        ax.grid(alpha=0.3)
    for k in range(len(pairs), nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    axes[0][0].legend(fontsize=7)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
