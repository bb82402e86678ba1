"""su(2) / so(3) coefficient algebra and closed-form matrix exponentials.

Algebra elements are coefficient triples (b1, b2, b3) against a fixed
orthogonal basis.  For su(2) the basis is

    s1 = [[i/2, 0 ], [ 0, -i/2]]
    s2 = [[0, 1/2], [-1/2, 0 ]]
    s3 = [[0, i/2], [ i/2, 0 ]]

with structure relations [s1,s2] = s3, [s2,s3] = s1, [s3,s1] = s2 and
Frobenius norms |s_k|_F^2 = 1/2.  For so(3) the triple (B1, B2, B3) fills
the antisymmetric pattern

    [[ 0,  B3, -B2],
     [-B3,  0,  B1],
     [ B2, -B1,  0 ]].

Group elements are plain numpy matrices (complex 2x2 for SU(2), real 3x3
for SO(3)); numpy's complex layout is row-major with interleaved re/im
parts, which is also the layout the transport kernels assume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SU2 = "su2"
SO3 = "so3"
GROUPS = (SU2, SO3)

_SINC_SMALL = 1e-4


def group_dim(group: str) -> int:
    """Matrix dimension of the realized algebra / group elements."""
    if group == SU2:
        return 2
    if group == SO3:
        return 3
    raise ValueError(f"unknown group tag {group!r}")


@dataclass(frozen=True)
class AlgebraElement:
    """Coefficient triple against the fixed basis, tagged with its group."""

    coeffs: tuple[float, float, float]
    group: str = SU2

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group tag {self.group!r}")
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (3,):
            raise ValueError("expected exactly three coefficients")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        object.__setattr__(self, "coeffs", (float(c[0]), float(c[1]), float(c[2])))

    @property
    def norm(self) -> float:
        """Euclidean norm of the coefficient triple."""
        b1, b2, b3 = self.coeffs
        return float(np.sqrt(b1 * b1 + b2 * b2 + b3 * b3))


def sinc(x):
    """Unnormalized sinc sin(x)/x, with a series branch below 1e-4."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    series = 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    safe = np.where(np.abs(x) < _SINC_SMALL, 1.0, x)
    out = np.where(np.abs(x) < _SINC_SMALL, series, np.sin(safe) / safe)
    return float(out) if out.ndim == 0 else out


def realize(a: AlgebraElement) -> np.ndarray:
    """Realize a coefficient triple as a matrix in the fixed basis."""
    b1, b2, b3 = a.coeffs
    if a.group == SU2:
        return 0.5 * np.array(
            [[1j * b1, b2 + 1j * b3], [-b2 + 1j * b3, -1j * b1]], dtype=complex
        )
    return np.array(
        [[0.0, b3, -b2], [-b3, 0.0, b1], [b2, -b1, 0.0]], dtype=float
    )


def exp_su2(a: AlgebraElement, length: float = 1.0) -> np.ndarray:
    """Closed-form exp(length * A) for A = realize(a) in su(2).

    With m = length * (b1, b2, b3) and n = |m| / 2 the exponential is
    cos(n) * id + sinc(n) * realize(m), which lands exactly in SU(2).
    """
    if a.group != SU2:
        raise ValueError("exp_su2 expects an su(2) element")
    m = AlgebraElement(tuple(length * c for c in a.coeffs), SU2)
    n = 0.5 * m.norm
    return np.cos(n) * np.eye(2, dtype=complex) + sinc(n) * realize(m)


def exp_so3(a: AlgebraElement) -> np.ndarray:
    """Rodrigues form exp(A) = id + sinc(t) A + sinc(t/2)^2 A^2 / 2, t = |a|."""
    if a.group != SO3:
        raise ValueError("exp_so3 expects an so(3) element")
    t = a.norm
    m = realize(a)
    s_half = sinc(0.5 * t)
    return np.eye(3) + sinc(t) * m + 0.5 * s_half * s_half * (m @ m)


def group_exp(a: AlgebraElement, length: float = 1.0) -> np.ndarray:
    """exp(length * realize(a)) for either group."""
    if a.group == SU2:
        return exp_su2(a, length)
    scaled = AlgebraElement(tuple(length * c for c in a.coeffs), SO3)
    return exp_so3(scaled)


def frob_dist(u: np.ndarray, v: np.ndarray) -> float:
    """Frobenius distance |u - v|_F."""
    return float(np.linalg.norm(u - v))


def group_defect(u: np.ndarray) -> float:
    """max(|u^H u - id|_F, |det u - 1|); zero on the group."""
    n = u.shape[0]
    gram = np.conj(u.T) @ u
    return float(
        max(np.linalg.norm(gram - np.eye(n)), abs(np.linalg.det(u) - 1.0))
    )
