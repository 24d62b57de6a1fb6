"""PNG figures for the report path (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Polygon, Polyline  # noqa: E402
from .pde import ScalarField  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_META = {"Software": None}
_COLORS = {"inner": "#1f4e9c", "level": "#d97a00", "free-boundary": "#b2182b", "outer": "#333333"}


def _rings(shape: Polyline | Polygon):
    line = Polyline.from_polygon(shape) if isinstance(shape, Polygon) else shape
    for pts, closed in zip(line.rings, line.closed):
        yield np.vstack([pts, pts[:1]]) if closed else pts


def _draw(ax, shape, color: str, label: str, **kw) -> None:
    for k, pts in enumerate(_rings(shape)):
        ax.plot(pts[:, 0], pts[:, 1], color=color, label=label if k == 0 else None, **kw)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_solution(
    fld: ScalarField,
    curves: Sequence[tuple[str, Polyline | Polygon, str]],
    path,
    title: str = "",
) -> Path:
    """Filled contours of the potential with labelled curves ``(class, shape, label)`` on top."""
    fig, ax = plt.subplots(figsize=(6, 6))
    X, Y = fld.grid.mesh()
    vals = np.where(fld.mask.annulus, fld.values, np.nan) if fld.mask is not None else fld.values
    cs = ax.contourf(X, Y, vals, levels=21, cmap="viridis")
    fig.colorbar(cs, ax=ax, shrink=0.8, label="u")
    for cls, shape, label in curves:
        ls = "--" if cls == "level" else "-"
        _draw(ax, shape, _COLORS.get(cls, "k"), label, lw=1.6, ls=ls)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def plot_trace(columns: dict[str, np.ndarray], path, title: str = "") -> Path:
    """Per-iteration diagnostics on a log axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, vals in columns.items():
        vals = np.asarray(vals, dtype=float)
        ax.semilogy(np.arange(1, len(vals) + 1), np.maximum(vals, 1e-300), marker="o", ms=3, label=name)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("length / residual")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_shapes(
    curves: Sequence[tuple[str, Polyline | Polygon, str]], path, title: str = ""
) -> Path:
    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.get_cmap("plasma")
    n = max(len(curves), 1)
    for k, (cls, shape, label) in enumerate(curves):
        color = _COLORS.get(cls) or cmap(k / n)
        _draw(ax, shape, color, label, lw=1.4)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_series(x, series: dict[str, np.ndarray], path, xlabel: str, ylabel: str, title: str = "",
                hline: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, vals in series.items():
        ax.plot(x, vals, marker="o", label=name)
    if hline is not None:
        ax.axhline(hline, color="gray", ls=":", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)
