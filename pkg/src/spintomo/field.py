"""Piecewise-linear Lie-algebra-valued fields on a mesh.

A field is three per-vertex coefficient vectors (b1, b2, b3) against the
fixed algebra basis, so a field on an N_v-vertex mesh is a point in
R^{3 N_v}.  Values between vertices are barycentric combinations, which
makes evaluation exact on linear functions and continuous across edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .liegroup import GROUPS, SU2, AlgebraElement
from .mesh import Location, Mesh, l2_norm, mesh_hash

# |sum_i b_i s_i|_F^2 = FROB_FACTOR * (b1^2 + b2^2 + b3^2), by orthogonality
# of the basis in the Frobenius inner product
FROB_FACTOR = {"su2": 0.5, "so3": 2.0}

BUMP_CENTERS = ((0.4, 0.0), (-0.4, 0.0), (0.0, 0.4))
BUMP_WIDTH = 0.25


@dataclass(frozen=True)
class AlgebraField:
    """Per-vertex coefficients, shape (3, nv), rows b1, b2, b3."""

    mesh: Mesh
    group: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group tag {self.group!r}")
        coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=float))
        if coeffs.shape != (3, self.mesh.nv):
            raise ValueError(
                f"coeffs shape {coeffs.shape} does not match (3, {self.mesh.nv})"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite field coefficients")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)


def zero_field(mesh: Mesh, group: str = SU2) -> AlgebraField:
    return AlgebraField(mesh, group, np.zeros((3, mesh.nv)))


def from_function(mesh: Mesh, group: str, fn) -> AlgebraField:
    """Sample fn(x, y) -> (b1, b2, b3) at the mesh vertices (vectorized)."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    b1, b2, b3 = fn(x, y)
    coeffs = np.vstack(
        [np.broadcast_to(np.asarray(b, dtype=float), (mesh.nv,)) for b in (b1, b2, b3)]
    )
    return AlgebraField(mesh, group, coeffs)


def bumps_field(mesh: Mesh, group: str = SU2) -> AlgebraField:
    """Builtin ground-truth preset: one unit-amplitude Gaussian bump of
    width 0.25 per component, centered at (0.4,0), (-0.4,0), (0,0.4)."""

    def fn(x, y):
        return tuple(
            np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * BUMP_WIDTH**2))
            for cx, cy in BUMP_CENTERS
        )

    return from_function(mesh, group, fn)


def eval_field(f: AlgebraField, loc: Location) -> AlgebraElement:
    """Barycentric interpolation of the coefficient triple at loc."""
    v = f.mesh.triangles[loc.triangle_index]
    w = np.asarray(loc.bary)
    return AlgebraElement(tuple(f.coeffs[:, v] @ w), f.group)


def lincomb(a: float, f: AlgebraField, b: float, g: AlgebraField) -> AlgebraField:
    """a*f + b*g on a shared mesh and group."""
    _check_compatible(f, g)
    return AlgebraField(f.mesh, f.group, a * f.coeffs + b * g.coeffs)


def field_l2_norm(f: AlgebraField, weights=None) -> float:
    """L2(M) norm of the realized matrix field (lumped quadrature)."""
    total = sum(l2_norm(f.mesh, f.coeffs[i], weights) ** 2 for i in range(3))
    return float(np.sqrt(FROB_FACTOR[f.group] * total))


def field_l2_distance(f: AlgebraField, g: AlgebraField, weights=None) -> float:
    """L2(M) Frobenius distance of the realized matrix fields."""
    _check_compatible(f, g)
    diff = f.coeffs - g.coeffs
    total = sum(l2_norm(f.mesh, diff[i], weights) ** 2 for i in range(3))
    return float(np.sqrt(FROB_FACTOR[f.group] * total))


def _check_compatible(f: AlgebraField, g: AlgebraField) -> None:
    if f.mesh is not g.mesh and mesh_hash(f.mesh) != mesh_hash(g.mesh):
        raise ValueError("fields live on different meshes")
    if f.group != g.group:
        raise ValueError("fields have different group tags")


# ---------------------------------------------------------------------------
# serialization


def save_field(f: AlgebraField, path) -> None:
    payload = {
        "version": 1,
        "mesh_hash": mesh_hash(f.mesh),
        "group": f.group,
        "b1": [float(v) for v in f.coeffs[0]],
        "b2": [float(v) for v in f.coeffs[1]],
        "b3": [float(v) for v in f.coeffs[2]],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def load_field(path, mesh: Mesh) -> AlgebraField:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported field file version {payload.get('version')!r}")
    if payload["mesh_hash"] != mesh_hash(mesh):
        raise ValueError("field file was written for a different mesh")
    coeffs = np.array([payload["b1"], payload["b2"], payload["b3"]], dtype=float)
    return AlgebraField(mesh, payload["group"], coeffs)
