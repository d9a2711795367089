"""Figures written straight to files with the non-interactive backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt          # noqa: E402
import matplotlib.tri as mtri            # noqa: E402
import numpy as np                       # noqa: E402

from .bench import QOI_NAMES, REFERENCE, outlet_trace  # noqa: E402
from .mesh import Mesh                   # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_solution(mesh: Mesh, u, path, title: str = "") -> None:
    """Filled contour plot of a nodal field."""
    tri = mtri.Triangulation(mesh.points[:, 0], mesh.points[:, 1], mesh.cells)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    pc = ax.tripcolor(tri, np.asarray(u, dtype=float), shading="gouraud",
                      cmap="viridis")
    fig.colorbar(pc, ax=ax)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_outlet(traces: dict, path) -> None:
    """Outlet traces ``u(0, y)``; ``traces`` maps a label to ``(u, mesh)``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (u, mesh) in traces.items():
        y, tr = outlet_trace(u, mesh)
        ax.plot(y, tr, lw=1.2, label=label)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.axhline(1.0, color="k", lw=0.5)
    ax.set_xlabel("y")
    ax.set_ylabel("u(0, y)")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_errors(results, path) -> None:
    """Absolute QoI errors against DOFs, one panel per quantity."""
    fig, axes = plt.subplots(2, 4, figsize=(13, 6))
    by_method = {}
    for r in results:
        if r.qoi is not None:
            by_method.setdefault(r.method, []).append(r)
    for ax, name in zip(axes.flat, QOI_NAMES):
        for method, rs in by_method.items():
            rs = sorted(rs, key=lambda r: r.n_dofs)
            err = [max(r.qoi.errors()[name], 1e-16) for r in rs]
            ax.loglog([r.n_dofs for r in rs], err, "o-", ms=3, label=method)
        ax.set_title(f"{name} (ref {getattr(REFERENCE, name):.4g})",
                     fontsize=9)
        ax.set_xlabel("DOFs", fontsize=8)
    axes.flat[-1].axis("off")
    if by_method:
        axes.flat[0].legend(fontsize=7)
    _save(fig, path)


def plot_audit(audits, path) -> None:
    """Per-step extrema against the admissible bounds."""
    steps = [a.step for a in audits]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(steps, [a.min for a in audits], label="min")
    ax.plot(steps, [a.max for a in audits], label="max")
    ax.plot(steps, [a.bound_lo for a in audits], "k--", lw=0.8, label="bounds")
    ax.plot(steps, [a.bound_hi for a in audits], "k--", lw=0.8)
    ax.set_xlabel("step")
    ax.legend(fontsize=8)
    _save(fig, path)
