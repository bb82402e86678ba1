"""Figure rendering for the report path: per-component field panels on the
mesh triangulation and chain diagnostics, written straight to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri

from .field import AlgebraField
from .mesh import Mesh

# fixed metadata so identical runs produce identical bytes
_PNG_META = {"Software": "spintomo"}


def _triangulation(mesh: Mesh) -> mtri.Triangulation:
    return mtri.Triangulation(
        mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles
    )


def save_field_figure(f: AlgebraField, path, title: str | None = None) -> None:
    """Three side-by-side panels, one per coefficient component."""
    tri = _triangulation(f.mesh)
    vmax = max(float(abs(f.coeffs).max()), 1e-12)
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4), constrained_layout=True)
    for i, ax in enumerate(axes):
        im = ax.tripcolor(
            tri, f.coeffs[i], shading="gouraud", cmap="RdBu_r", vmin=-vmax, vmax=vmax
        )
        ax.set_aspect("equal")
        ax.set_title(f"$b_{i + 1}$")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes, shrink=0.85)
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=130, metadata=_PNG_META)
    plt.close(fig)


def save_comparison_figure(
    truth: AlgebraField, recon: AlgebraField, path
) -> None:
    """Truth on the top row, reconstruction below, shared color scale."""
    tri = _triangulation(truth.mesh)
    vmax = max(
        float(abs(truth.coeffs).max()), float(abs(recon.coeffs).max()), 1e-12
    )
    fig, axes = plt.subplots(2, 3, figsize=(10.5, 6.6), constrained_layout=True)
    for row, (f, label) in enumerate([(truth, "truth"), (recon, "mean")]):
        for i in range(3):
            ax = axes[row, i]
            im = ax.tripcolor(
                tri,
                f.coeffs[i],
                shading="gouraud",
                cmap="RdBu_r",
                vmin=-vmax,
                vmax=vmax,
            )
            ax.set_aspect("equal")
            ax.set_title(f"{label} $b_{i + 1}$")
            ax.set_xticks([])
            ax.set_yticks([])
    fig.colorbar(im, ax=axes, shrink=0.85)
    fig.savefig(path, dpi=130, metadata=_PNG_META)
    plt.close(fig)


def save_trace_figure(steps, logliks, path) -> None:
    """Log-likelihood trace over chain steps (one line per chain)."""
    fig, ax = plt.subplots(figsize=(7.0, 3.2), constrained_layout=True)
    for k, (s, ll) in enumerate(zip(steps, logliks)):
        ax.plot(s, ll, lw=0.9, label=f"chain {k}")
    ax.set_xlabel("step")
    ax.set_ylabel("log-likelihood")
    if len(steps) > 1:
        ax.legend(loc="lower right", fontsize=8)
    fig.savefig(path, dpi=130, metadata=_PNG_META)
    plt.close(fig)


def save_mesh_figure(mesh: Mesh, path) -> None:
    fig, ax = plt.subplots(figsize=(4.6, 4.6), constrained_layout=True)
    ax.triplot(_triangulation(mesh), lw=0.4, color="tab:blue")
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.savefig(path, dpi=130, metadata=_PNG_META)
    plt.close(fig)
