"""Reconstruction error metrics, a Monte Carlo Hellinger oracle, and
delimited plot-data export."""

from __future__ import annotations

import csv
import string

import numpy as np

from .field import AlgebraField, field_l2_distance
from .forward import scattering_matrices
from .mesh import Mesh


def l2_error(f: AlgebraField, truth: AlgebraField, weights=None) -> float:
    """L2(M) distance between a reconstruction and the ground truth."""
    return field_l2_distance(f, truth, weights)


def mean_scattering_sq_distance(
    f: AlgebraField, g: AlgebraField, geos
) -> float:
    """Monte Carlo average of |U_f - U_g|_F^2 over a geodesic sample."""
    uf = scattering_matrices(f, geos)
    ug = scattering_matrices(g, geos)
    if len(uf) == 0:
        raise ValueError("need at least one geodesic")
    return float(np.mean(np.sum(np.abs(uf - ug) ** 2, axis=(1, 2))))


def hellinger_affinity(
    f: AlgebraField, g: AlgebraField, geos, sigma: float = 1.0
) -> float:
    """rho = MC average over geodesics of exp(-|U_f - U_g|_F^2 / (8 sigma^2)).

    At sigma=1 this is the closed-form affinity of the Gaussian observation
    model; the squared Hellinger distance is 2*(1 - rho), bounded above by
    the mean squared scattering distance / 4 (since 1 - e^{-z} <= z).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    uf = scattering_matrices(f, geos)
    ug = scattering_matrices(g, geos)
    if len(uf) == 0:
        raise ValueError("need at least one geodesic")
    sq = np.sum(np.abs(uf - ug) ** 2, axis=(1, 2))
    return float(np.mean(np.exp(-sq / (8.0 * sigma**2))))


def export_plot_data(mesh: Mesh, fields, path) -> None:
    """Write per-vertex field components as CSV rows ordered by vertex.

    One field gives columns x, y, b1, b2, b3; several fields get suffixed
    component columns (b1_a.., b1_b..) aligned on the shared vertices.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one field")
    for f in fields:
        if f.mesh.nv != mesh.nv:
            raise ValueError("field mesh does not match")
    if len(fields) == 1:
        header = ["x", "y", "b1", "b2", "b3"]
    else:
        header = ["x", "y"] + [
            f"b{i}_{tag}"
            for tag in string.ascii_lowercase[: len(fields)]
            for i in (1, 2, 3)
        ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for v in range(mesh.nv):
            row = [repr(float(mesh.vertices[v, 0])), repr(float(mesh.vertices[v, 1]))]
            for f in fields:
                row.extend(repr(float(f.coeffs[i, v])) for i in range(3))
            w.writerow(row)
