"""Triangulated unit-disk meshes: generation, point location with
barycentric weights, and lumped L2 quadrature.

Meshes are immutable after construction.  Vertices live in the closed unit
disk, triangles are counterclockwise, and every interior edge is shared by
exactly two triangles.  Scalar fields on a mesh are piecewise linear in the
vertex values; their L2 norms use the diagonal (lumped) mass matrix, where
each triangle contributes one third of its area to each of its vertices.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

_EDGE_TOL = 1e-9


class OutsideMeshError(Exception):
    """Raised when a query point lies outside every triangle."""


@dataclass(frozen=True)
class Location:
    """A triangle index with barycentric weights (in [0,1], summing to 1)."""

    triangle_index: int
    bary: tuple[float, float, float]


class Mesh:
    def __init__(self, vertices, triangles):
        vertices = np.ascontiguousarray(np.array(vertices, dtype=float))
        triangles = np.ascontiguousarray(np.array(triangles, dtype=np.int32))
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must be an (m, 3) array")
        if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
            raise ValueError("triangle vertex index out of range")

        # enforce counterclockwise orientation, reject degenerate triangles
        a, b, c = (vertices[triangles[:, k]] for k in range(3))
        signed = 0.5 * (
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
        )
        flip = signed < 0.0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        signed = np.abs(signed)
        if np.any(signed <= 0.0):
            raise ValueError("degenerate (zero-area) triangle")

        self.vertices = vertices
        self.triangles = triangles
        self.triangle_areas = signed
        self.neighbors, boundary_edges = _build_adjacency(triangles)
        self.boundary_flags = np.zeros(len(vertices), dtype=bool)
        for u, v in boundary_edges:
            self.boundary_flags[u] = True
            self.boundary_flags[v] = True
        self.lumped_weights = lumped_weights(self)
        self._vx = np.ascontiguousarray(vertices[:, 0])
        self._vy = np.ascontiguousarray(vertices[:, 1])
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def nt(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (ne, 2) index array."""
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        return np.unique(e, axis=0)

    def __repr__(self):
        return f"Mesh(nv={self.nv}, nt={self.nt})"


def _build_adjacency(triangles):
    """neighbors[t, k] = triangle across the edge opposite vertex k, or -1."""
    edge_map = {}
    for t, (a, b, c) in enumerate(triangles):
        for k, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            key = (min(u, v), max(u, v))
            edge_map.setdefault(key, []).append((t, k))
    neighbors = np.full((len(triangles), 3), -1, dtype=np.int32)
    boundary_edges = []
    for key, inc in edge_map.items():
        if len(inc) > 2:
            raise ValueError(f"non-manifold edge {key}")
        if len(inc) == 2:
            (t1, k1), (t2, k2) = inc
            neighbors[t1, k1] = t2
            neighbors[t2, k2] = t1
        else:
            boundary_edges.append(key)
    return neighbors, boundary_edges


def lumped_weights(mesh: Mesh, area_scale=None) -> np.ndarray:
    """Per-vertex lumped quadrature weights: one third of each incident
    triangle's area, optionally rescaled by area_scale(cx, cy) at centroids
    (used for the e^{2*lambda} area element of isotropic metrics)."""
    areas = mesh.triangle_areas
    if area_scale is not None:
        cent = mesh.vertices[mesh.triangles].mean(axis=1)
        areas = areas * np.asarray(area_scale(cent[:, 0], cent[:, 1]), dtype=float)
    weights = np.zeros(mesh.nv)
    for k in range(3):
        np.add.at(weights, mesh.triangles[:, k], areas / 3.0)
    return weights


def l2_norm(mesh: Mesh, values, weights=None) -> float:
    """sqrt(sum_v weights[v] * values[v]^2); weights default to the
    Euclidean lumped weights of the mesh."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.nv,):
        raise ValueError("value count must equal the vertex count")
    if weights is None:
        weights = mesh.lumped_weights
    return float(np.sqrt(np.sum(weights * values * values)))


def locate(mesh: Mesh, p, hint: int = 0) -> Location:
    """Find the triangle containing p with its barycentric weights.

    Walks from the hint triangle; falls back to a full scan.  Points within
    1e-9 of an edge are assigned to the triangle found first; anything
    farther outside every triangle raises OutsideMeshError.
    """
    px, py = float(p[0]), float(p[1])
    t, w0, w1, w2, status = _kernels.walk_one(
        mesh._vx, mesh._vy, mesh.triangles, mesh.neighbors, int(hint), px, py
    )
    if status != 0:
        t, w0, w1, w2, wmin = _kernels.brute_best(
            mesh._vx, mesh._vy, mesh.triangles, px, py
        )
        if wmin < -_EDGE_TOL:
            raise OutsideMeshError(f"point ({px}, {py}) is outside the mesh")
    w = np.clip([w0, w1, w2], 0.0, None)
    w /= w.sum()
    return Location(int(t), (float(w[0]), float(w[1]), float(w[2])))


class Locator:
    """Point locator with a per-caller walk cache.

    The mesh is immutable, so the cached triangle is always a valid hint;
    each worker thread should own its own Locator.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._hint = 0

    def locate(self, p) -> Location:
        loc = locate(self.mesh, p, self._hint)
        self._hint = loc.triangle_index
        return loc


# ---------------------------------------------------------------------------
# generation


def generate_disk_mesh(target_nv: int, seed: int = 0) -> Mesh:
    """Quasi-uniform triangulation of the unit disk with about target_nv
    vertices.

    Concentric rings carry vertex counts proportional to their radius (the
    seed randomizes each ring's angular offset), annuli are stitched by an
    angular merge, and one Lloyd-style smoothing pass relaxes the interior.
    Deterministic given (target_nv, seed).
    """
    if target_nv < 4:
        raise ValueError("target_nv must be at least 4")
    n_off_center = target_nv - 1
    # ring spacing ~ in-ring spacing when each ring k holds ~2*pi*k points
    rings = max(1, round((np.sqrt(1.0 + 8.0 * n_off_center / (2.0 * np.pi)) - 1.0) / 2.0))
    per_unit = n_off_center / (rings * (rings + 1) / 2.0)
    counts = [max(3, round(per_unit * k)) for k in range(1, rings + 1)]
    counts[-1] = max(3, counts[-1] + n_off_center - sum(counts))

    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=rings)

    verts = [(0.0, 0.0)]
    ring_ids = []
    ring_angles = []
    for k in range(1, rings + 1):
        n_k = counts[k - 1]
        ang = np.sort(np.mod(offsets[k - 1] + 2.0 * np.pi * np.arange(n_k) / n_k, 2.0 * np.pi))
        r = k / rings
        ids = np.arange(len(verts), len(verts) + n_k)
        verts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        ring_ids.append(ids)
        ring_angles.append(ang)

    tris = []
    n1 = counts[0]
    for j in range(n1):  # central fan
        tris.append((0, int(ring_ids[0][j]), int(ring_ids[0][(j + 1) % n1])))
    for k in range(1, rings):
        tris.extend(
            _stitch_rings(ring_ids[k - 1], ring_angles[k - 1], ring_ids[k], ring_angles[k])
        )

    vertices = np.asarray(verts)
    triangles = np.asarray(tris, dtype=np.int32)
    vertices = _smooth_interior(vertices, triangles, boundary=ring_ids[-1])
    return Mesh(vertices, triangles)


def _stitch_rings(in_ids, in_ang, out_ids, out_ang):
    """Triangulate the annulus between two sorted concentric rings by
    advancing whichever ring's next angle comes first."""
    m, n = len(in_ids), len(out_ids)
    in_rel = np.mod(in_ang - in_ang[0], 2.0 * np.pi)
    rel = np.mod(out_ang - in_ang[0], 2.0 * np.pi)
    j0 = int(np.argmin(rel))
    out_ids = np.concatenate([out_ids[j0:], out_ids[:j0]])
    out_rel = np.concatenate([rel[j0:], rel[:j0]])

    tris = []
    i = j = 0
    two_pi = 2.0 * np.pi
    while i < m or j < n:
        in_next = in_rel[(i + 1) % m] + two_pi * ((i + 1) // m) if i < m else np.inf
        out_next = out_rel[(j + 1) % n] + two_pi * ((j + 1) // n) if j < n else np.inf
        if in_next <= out_next:
            tris.append((int(in_ids[i % m]), int(out_ids[j % n]), int(in_ids[(i + 1) % m])))
            i += 1
        else:
            tris.append((int(out_ids[j % n]), int(out_ids[(j + 1) % n]), int(in_ids[i % m])))
            j += 1
    return tris


def _smooth_interior(vertices, triangles, boundary):
    """One Lloyd-style pass: move interior vertices toward the mean of
    their edge neighbors, backing off if any triangle would invert."""
    fixed = np.zeros(len(vertices), dtype=bool)
    fixed[0] = True  # the center is already the local mean by construction
    fixed[boundary] = True

    nb_sum = np.zeros_like(vertices)
    nb_cnt = np.zeros(len(vertices))
    e = np.sort(
        np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]),
        axis=1,
    )
    for u, v in np.unique(e, axis=0):
        nb_sum[u] += vertices[v]
        nb_sum[v] += vertices[u]
        nb_cnt[u] += 1
        nb_cnt[v] += 1
    target = np.where(
        (nb_cnt > 0)[:, None] & ~fixed[:, None], nb_sum / np.maximum(nb_cnt, 1)[:, None], vertices
    )

    def min_area(v):
        a, b, c = (v[triangles[:, k]] for k in range(3))
        return np.min(
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
        )

    blend = 1.0
    for _ in range(8):
        candidate = vertices + blend * (target - vertices)
        if min_area(candidate) > 0.0:
            return candidate
        blend *= 0.5
    return vertices


# ---------------------------------------------------------------------------
# serialization


def _canonical_payload(mesh: Mesh) -> dict:
    return {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "triangles": [[int(a), int(b), int(c)] for a, b, c in mesh.triangles],
    }


def mesh_hash(mesh: Mesh) -> str:
    """Short content hash used to guard fields against the wrong mesh."""
    blob = json.dumps(_canonical_payload(mesh), separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_mesh(mesh: Mesh, path) -> None:
    payload = {"version": 1} | _canonical_payload(mesh)
    with open(path, "w") as f:
        json.dump(payload, f, separators=(",", ":"))
        f.write("\n")


def load_mesh(path) -> Mesh:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported mesh file version {payload.get('version')!r}")
    return Mesh(payload["vertices"], payload["triangles"])
