"""The non-abelian X-ray forward map: structure-preserving transport of
u' = -Phi(gamma(t)) u, u(0) = id, along precomputed geodesic traces.

Each segment applies exp(-l * (Phi_prev + Phi_cur)/2) via the closed-form
group exponential (trapezoidal corrector, 2nd order, exactly in the group);
the final partial segment uses the actual remaining arc length.  The exit
value is the forward-in-time solution, which equals the conjugate transpose
of the usual scattering data; the whole pipeline uses this one convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels
from .field import AlgebraField
from .geometry import FanBeamPoint, Geodesic, GeodesicBundle
from .liegroup import SU2, group_dim


@dataclass(frozen=True)
class ScatteringValue:
    entry: FanBeamPoint
    u: np.ndarray


def set_num_threads(n: int) -> None:
    """Cap the transport worker pool (results are bitwise independent of it)."""
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _flat_trace(geos):
    """CSR trace arrays for a bundle or a sequence of Geodesic objects."""
    if isinstance(geos, GeodesicBundle):
        return (
            geos.vidx,
            geos.bary,
            geos.offsets,
            geos.step,
            np.ascontiguousarray(geos.last_lens),
            tuple(geos.entries),
        )
    geos = list(geos)
    if not geos:
        return None
    steps = {g.step for g in geos}
    if len(steps) != 1:
        raise ValueError("batch requires a uniform step size")
    offsets = np.zeros(len(geos) + 1, dtype=np.int64)
    np.cumsum([g.n_points for g in geos], out=offsets[1:])
    vidx = np.ascontiguousarray(np.concatenate([g.vidx for g in geos]))
    bary = np.ascontiguousarray(np.concatenate([g.bary for g in geos]))
    last = np.array([g.last_len for g in geos])
    return vidx, bary, offsets, steps.pop(), last, tuple(g.entry for g in geos)


def scattering_matrices(f: AlgebraField, geos) -> np.ndarray:
    """Exit transport values for all geodesics, stacked as (n, d, d)."""
    flat = _flat_trace(geos)
    if flat is None:
        d = group_dim(f.group)
        return np.zeros((0, d, d), dtype=complex if f.group == SU2 else float)
    vidx, bary, offsets, h, last, _ = flat
    if vidx.size and vidx.max() >= f.mesh.nv:
        raise ValueError("geodesic trace does not fit the field's mesh")
    b1 = np.ascontiguousarray(f.coeffs[0])
    b2 = np.ascontiguousarray(f.coeffs[1])
    b3 = np.ascontiguousarray(f.coeffs[2])
    n = len(offsets) - 1
    if f.group == SU2:
        out = np.empty((n, 2, 2), dtype=np.complex128)
        _kernels.transport_su2(b1, b2, b3, vidx, bary, offsets, h, last, out)
    else:
        out = np.empty((n, 3, 3), dtype=np.float64)
        _kernels.transport_so3(b1, b2, b3, vidx, bary, offsets, h, last, out)
    return out


def scattering(f: AlgebraField, geo: Geodesic) -> np.ndarray:
    """Exit transport value for a single geodesic."""
    return scattering_matrices(f, [geo])[0]


def scattering_batch(f: AlgebraField, geos) -> list[ScatteringValue]:
    """Elementwise scattering, order preserved; results land in
    pre-assigned slots so the output is deterministic across worker counts."""
    flat = _flat_trace(geos)
    if flat is None:
        return []
    mats = scattering_matrices(f, geos)
    entries = flat[5]
    return [ScatteringValue(e, u) for e, u in zip(entries, mats)]


def realized_along(f: AlgebraField, geo: Geodesic) -> np.ndarray:
    """Realized matrices of f at every trace point, stacked as (n, d, d)."""
    vals = f.coeffs[:, geo.vidx]  # (3, n, 3)
    b1, b2, b3 = (np.einsum("nj,nj->n", vals[i], geo.bary) for i in range(3))
    n = geo.n_points
    if f.group == SU2:
        m = np.empty((n, 2, 2), dtype=np.complex128)
        m[:, 0, 0] = 0.5j * b1
        m[:, 0, 1] = 0.5 * (b2 + 1j * b3)
        m[:, 1, 0] = 0.5 * (-b2 + 1j * b3)
        m[:, 1, 1] = -0.5j * b1
        return m
    m = np.zeros((n, 3, 3), dtype=np.float64)
    m[:, 0, 1] = b3
    m[:, 0, 2] = -b2
    m[:, 1, 0] = -b3
    m[:, 1, 2] = b1
    m[:, 2, 0] = b2
    m[:, 2, 1] = -b1
    return m


def pseudo_linearization_residual(f: AlgebraField, g: AlgebraField, geo: Geodesic) -> float:
    """Defect of the pseudo-linearization identity on one geodesic.

    W solves W' + Phi W - W Psi = -(Phi - Psi), W(0) = 0, by Heun (RK2)
    steps on the same trace; in the continuum W(exit) equals
    U_Phi U_Psi^{-1} - id exactly, so the returned Frobenius distance is
    pure discretization error.
    """
    if f.group != g.group:
        raise ValueError("fields have different group tags")
    uf = scattering(f, geo)
    ug = scattering(g, geo)
    phi = realized_along(f, geo)
    psi = realized_along(g, geo)
    diff = phi - psi
    d = phi.shape[1]
    w = np.zeros((d, d), dtype=phi.dtype)
    segs = geo.seg_lengths()
    for j, l in enumerate(segs):
        f0 = -(phi[j] @ w - w @ psi[j]) - diff[j]
        wt = w + l * f0
        f1 = -(phi[j + 1] @ wt - wt @ psi[j + 1]) - diff[j + 1]
        w = w + 0.5 * l * (f0 + f1)
    target = uf @ ug.conj().T - np.eye(d)
    return float(np.linalg.norm(target - w))
