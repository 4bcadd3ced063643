"""Optional PNG renderings of the text dumps (``--figures``).

matplotlib is imported lazily so the solver and analysis never depend on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from siflab.discrete_operator import Field


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def field_figure(f: Field, path: Path, title: str = "") -> Path:
    """Line plot in 1D, filled contours with the zero set outlined in 2D."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    g = f.grid
    if g.dim == 1:
        ax.plot(g.axis, f.values, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
    else:
        x, y = g.coords
        cs = ax.contourf(x, y, f.values, levels=30, cmap="viridis")
        fig.colorbar(cs, ax=ax)
        if np.any(f.values <= 0) and np.any(f.values > 0):
            ax.contour(x, y, f.values, levels=[1e-12], colors="w", linewidths=0.8)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def sweep_figure(rows, path: Path) -> Path:
    """Fitted exponent against γ with the predicted 4/(3+γ) curve."""
    plt = _pyplot()
    rows = np.asarray(rows, dtype=float)
    g = np.linspace(0.0, 0.99, 100)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(g, 4.0 / (3.0 + g), "k-", lw=1, label="4/(3+γ)")
    ax.plot(rows[:, 0], rows[:, 2], "o", label="fitted")
    ax.set_xlabel("γ")
    ax.set_ylabel("growth exponent")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
