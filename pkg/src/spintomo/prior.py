"""Matern Gaussian-process prior on mesh vertices.

The covariance between vertices is the isotropic Matern kernel of their
Euclidean distance, factorized once by a dense Cholesky; the three field
components are drawn as independent streams against the same factor.  An
optional scale multiplier implements the sample-size-dependent shrinkage
N^{-1/(2(alpha+1))}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import gamma, kv

from .field import AlgebraField
from .liegroup import SU2
from .mesh import Mesh

JITTER_CAP = 1e-6


@dataclass(frozen=True)
class MaternParams:
    """Smoothness nu > 0, correlation length ell > 0, Cholesky jitter."""

    nu: float
    ell: float
    jitter: float = 1e-10

    def __post_init__(self):
        if not (self.nu > 0 and np.isfinite(self.nu)):
            raise ValueError("nu must be positive")
        if not (self.ell > 0 and np.isfinite(self.ell)):
            raise ValueError("ell must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


def matern_kernel(p: MaternParams, r):
    """k(r) = 2^{1-nu}/Gamma(nu) * (sqrt(2 nu) r/ell)^nu * K_nu(sqrt(2 nu) r/ell).

    k(0) = 1; for half-integer nu this reduces to the familiar closed forms
    (nu=1/2: exp(-r/ell), nu=3/2: (1+sqrt(3) r/ell) exp(-sqrt(3) r/ell)).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distances must be nonnegative")
    scaled = np.sqrt(2.0 * p.nu) * r / p.ell
    out = np.ones_like(scaled)
    pos = scaled > 0
    s = scaled[pos]
    out[pos] = (2.0 ** (1.0 - p.nu) / gamma(p.nu)) * s**p.nu * kv(p.nu, s)
    return float(out) if out.ndim == 0 else out


def matern_covariance(points, p: MaternParams) -> np.ndarray:
    """Dense kernel matrix over a point set, before jitter."""
    points = np.asarray(points, dtype=float)
    if len(points) == 1:
        return np.ones((1, 1))
    return matern_kernel(p, squareform(pdist(points)))


@dataclass(frozen=True)
class PriorSampler:
    """Cholesky factor of the vertex covariance plus a scale multiplier."""

    mesh: Mesh
    params: MaternParams
    scale: float
    chol: np.ndarray
    jitter_used: float


def build_sampler(mesh: Mesh, p: MaternParams, scale: float = 1.0) -> PriorSampler:
    """Factorize the Matern covariance on the mesh vertices.

    The jitter starts at p.jitter and escalates by factors of 10 up to 1e-6
    before failing; the first successful factorization wins.
    """
    cov = matern_covariance(mesh.vertices, p)
    jitter = p.jitter
    while True:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(mesh.nv))
            return PriorSampler(mesh, p, float(scale), chol, jitter)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12)
            if jitter > JITTER_CAP:
                raise np.linalg.LinAlgError(
                    "covariance not positive definite even at jitter 1e-6"
                )


def sample_field(s: PriorSampler, group: str = SU2, rng=None) -> AlgebraField:
    """One field draw: each component is scale * chol @ z with independent
    standard-normal streams z, consuming exactly 3*nv normals from rng."""
    if rng is None:
        rng = np.random.default_rng()
    z = rng.standard_normal((3, s.mesh.nv))
    return AlgebraField(s.mesh, group, s.scale * (z @ s.chol.T))


def shrinkage_scale(n_data: int, alpha: float = 2.0) -> float:
    """Shrinkage multiplier N^{-1/(2(alpha+1))} for N data points."""
    if n_data < 1:
        raise ValueError("n_data must be positive")
    return float(n_data) ** (-1.0 / (2.0 * (alpha + 1.0)))
