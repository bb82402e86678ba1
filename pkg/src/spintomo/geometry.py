"""Isotropic disk geometry: conformal metric presets, fan-beam boundary
coordinates, geodesic tracing, and precomputed geodesic bundles.

The metric is g = e^{2*lambda(x,y)} * id on the unit disk.  Unit-speed
geodesics solve

    x' = e^{-lambda} cos(theta)
    y' = e^{-lambda} sin(theta)
    theta' = e^{-lambda} (cos(theta) dlambda/dy - sin(theta) dlambda/dx)

and are integrated by classical RK4 with a fixed arc-length step h from the
boundary point (cos beta, sin beta) with inward heading theta = beta+pi+alpha,
until the first crossing of the unit circle.  The crossing is located by
linear interpolation of |x|^2 - 1 over the last step, so the exit time
carries an O(h^2) endpoint error on top of the O(h^4) interior error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mesh import Location, Mesh, lumped_weights

GAUSSIAN_PAIR_AMP = 0.3
GAUSSIAN_PAIR_X0 = 0.3
GAUSSIAN_PAIR_TAU = 0.25

METRIC_NAMES = ("euclidean", "gaussian-pair")


class NonExitingGeodesicError(Exception):
    """Raised when a trace exceeds the 10*(2/h) step cap."""


@dataclass(frozen=True)
class FanBeamPoint:
    """Boundary point angle beta in [0, 2pi), inward deviation alpha in
    (-pi/2, pi/2)."""

    beta: float
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.beta < 2.0 * np.pi):
            raise ValueError(f"beta {self.beta} outside [0, 2pi)")
        if not (-0.5 * np.pi <= self.alpha < 0.5 * np.pi):
            raise ValueError(f"alpha {self.alpha} outside (-pi/2, pi/2)")


@dataclass(frozen=True)
class Metric:
    """Log-conformal factor preset with analytic gradient."""

    name: str
    kind: int
    params: tuple[float, ...]

    def lambda_bar(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == _kernels.METRIC_EUCLIDEAN:
            return np.zeros(np.broadcast(x, y).shape)
        amp, x0, tau = self.params
        gp = np.exp(-((x + x0) ** 2 + y**2) / (2.0 * tau**2))
        gm = np.exp(-((x - x0) ** 2 + y**2) / (2.0 * tau**2))
        return amp * (gp - gm)

    def grad_lambda(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == _kernels.METRIC_EUCLIDEAN:
            shape = np.broadcast(x, y).shape
            return np.zeros(shape), np.zeros(shape)
        amp, x0, tau = self.params
        gp = np.exp(-((x + x0) ** 2 + y**2) / (2.0 * tau**2))
        gm = np.exp(-((x - x0) ** 2 + y**2) / (2.0 * tau**2))
        gx = amp * (gm * (x - x0) - gp * (x + x0)) / tau**2
        gy = amp * (gm - gp) * y / tau**2
        return gx, gy

    @property
    def _params_array(self) -> np.ndarray:
        return np.asarray(self.params, dtype=float)


def builtin_metric(name: str) -> Metric:
    """Presets: "euclidean" (lambda = 0) and "gaussian-pair", a +-0.3
    amplitude pair of Gaussian bumps of width 0.25 centered at (-0.3, 0)
    and (0.3, 0)."""
    if name == "euclidean":
        return Metric(name, _kernels.METRIC_EUCLIDEAN, (0.0, 0.0, 1.0))
    if name == "gaussian-pair":
        return Metric(
            name,
            _kernels.METRIC_GAUSSIAN_PAIR,
            (GAUSSIAN_PAIR_AMP, GAUSSIAN_PAIR_X0, GAUSSIAN_PAIR_TAU),
        )
    raise ValueError(f"unknown metric {name!r}; expected one of {METRIC_NAMES}")


def metric_lumped_weights(mesh: Mesh, metric: Metric) -> np.ndarray:
    """Lumped quadrature weights with the e^{2*lambda} area element."""
    return lumped_weights(
        mesh, area_scale=lambda cx, cy: np.exp(2.0 * metric.lambda_bar(cx, cy))
    )


@dataclass(frozen=True)
class Geodesic:
    """A traced geodesic with its precomputed mesh locations.

    pts rows are (x, y, theta); tri/bary/vidx give each point's containing
    triangle, barycentric weights, and that triangle's vertex indices.  The
    final point is the interpolated boundary exit; the segment to it has
    length last_len <= step.
    """

    entry: FanBeamPoint
    step: float
    pts: np.ndarray
    tri: np.ndarray
    bary: np.ndarray
    vidx: np.ndarray
    exit_time: float
    last_len: float

    @property
    def n_points(self) -> int:
        return len(self.pts)

    @property
    def locations(self) -> list[Location]:
        return [
            Location(int(t), (float(w[0]), float(w[1]), float(w[2])))
            for t, w in zip(self.tri, self.bary)
        ]

    def seg_lengths(self) -> np.ndarray:
        out = np.full(self.n_points - 1, self.step)
        out[-1] = self.last_len
        return out


@dataclass(frozen=True)
class GeodesicBundle:
    """Geodesics traced on one mesh/metric, stored in flat CSR arrays.

    Built once per design and reused across every transport evaluation;
    offsets[i]:offsets[i+1] slices geodesic i's rows out of pts/tri/bary/vidx.
    """

    metric: Metric
    mesh: Mesh
    step: float
    entries: tuple[FanBeamPoint, ...]
    offsets: np.ndarray
    pts: np.ndarray
    tri: np.ndarray
    bary: np.ndarray
    vidx: np.ndarray
    exit_times: np.ndarray
    last_lens: np.ndarray

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> Geodesic:
        s, e = self.offsets[i], self.offsets[i + 1]
        return Geodesic(
            entry=self.entries[i],
            step=self.step,
            pts=self.pts[s:e],
            tri=self.tri[s:e],
            bary=self.bary[s:e],
            vidx=self.vidx[s:e],
            exit_time=float(self.exit_times[i]),
            last_len=float(self.last_lens[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def trace_bundle(metric: Metric, mesh: Mesh, entries, h: float) -> GeodesicBundle:
    """Trace all entries and locate every trace point on the mesh.

    Points on the circle itself (entry/exit) usually fall in the sliver
    outside the boundary polygon and are clamped to the nearest triangle.
    """
    if not 0.0 < h <= 0.05:
        raise ValueError("step h must lie in (0, 0.05]")
    entries = tuple(entries)
    beta = np.array([e.beta for e in entries])
    alpha = np.array([e.alpha for e in entries])
    n = len(entries)
    max_steps = int(np.ceil(20.0 / h))
    params = metric._params_array

    n_points = np.empty(n, dtype=np.int64)
    exit_times = np.empty(n)
    _kernels.trace_counts(metric.kind, params, beta, alpha, h, max_steps, n_points, exit_times)
    if np.any(n_points < 0):
        bad = int(np.argmax(n_points < 0))
        raise NonExitingGeodesicError(
            f"geodesic (beta={beta[bad]:.6f}, alpha={alpha[bad]:.6f}) "
            f"did not exit within {max_steps} steps"
        )
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(n_points, out=offsets[1:])
    pts = np.empty((offsets[-1], 3))
    _kernels.trace_fill(metric.kind, params, beta, alpha, h, max_steps, offsets, pts)

    tri = np.empty(offsets[-1], dtype=np.int32)
    bary = np.empty((offsets[-1], 3))
    _kernels.locate_trace(
        mesh._vx,
        mesh._vy,
        mesh.triangles,
        mesh.neighbors,
        offsets,
        np.ascontiguousarray(pts[:, 0]),
        np.ascontiguousarray(pts[:, 1]),
        tri,
        bary,
    )
    vidx = np.ascontiguousarray(mesh.triangles[tri])
    last_lens = exit_times - (n_points - 2) * h
    return GeodesicBundle(
        metric=metric,
        mesh=mesh,
        step=h,
        entries=entries,
        offsets=offsets,
        pts=pts,
        tri=tri,
        bary=bary,
        vidx=vidx,
        exit_times=exit_times,
        last_lens=last_lens,
    )


def shoot_geodesic(metric: Metric, mesh: Mesh, entry: FanBeamPoint, h: float) -> Geodesic:
    return trace_bundle(metric, mesh, [entry], h)[0]


def sample_fanbeam(n: int, seed: int) -> list[FanBeamPoint]:
    """n independent fan-beam draws: beta ~ U(0, 2pi), alpha ~ U(-pi/2, pi/2)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    alpha = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size=n)
    return [FanBeamPoint(float(b), float(a)) for b, a in zip(beta, alpha)]


# ---------------------------------------------------------------------------
# serialization: entries + exit times only, traces are recomputed on load


def save_bundle(bundle: GeodesicBundle, path) -> None:
    payload = {
        "version": 1,
        "metric": bundle.metric.name,
        "step": bundle.step,
        "entries": [[e.beta, e.alpha] for e in bundle.entries],
        "exit_times": [float(t) for t in bundle.exit_times],
    }
    with open(path, "w") as f:
        json.dump(payload, f, separators=(",", ":"))
        f.write("\n")


def load_bundle(path, mesh: Mesh) -> GeodesicBundle:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported bundle version {payload.get('version')!r}")
    metric = builtin_metric(payload["metric"])
    entries = [FanBeamPoint(b, a) for b, a in payload["entries"]]
    return trace_bundle(metric, mesh, entries, payload["step"])
