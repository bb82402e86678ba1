"""Synthetic scattering datasets: exact forward values plus i.i.d. Gaussian
matrix noise, and their JSON persistence.

The noisy matrices are deliberately NOT projected back to the group; the
observation model adds independent N(0, sigma^2) per entry (per real and
imaginary part for complex groups), so Y generally lies off the group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .field import AlgebraField
from .forward import scattering_matrices
from .geometry import FanBeamPoint
from .liegroup import GROUPS, SU2, group_dim


@dataclass(frozen=True)
class Dataset:
    """Measured matrices y (n, d, d) aligned with their fan-beam entries."""

    group: str
    sigma: float
    seed: int
    entries: tuple
    y: np.ndarray

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group tag {self.group!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        d = group_dim(self.group)
        y = np.asarray(self.y)
        if y.shape != (len(self.entries), d, d):
            raise ValueError(f"y shape {y.shape} does not match entries")
        if not np.isfinite(y).all():
            raise ValueError("non-finite measurement")
        y.setflags(write=False)
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def records(self) -> list[tuple[FanBeamPoint, np.ndarray]]:
        return list(zip(self.entries, self.y))


def simulate(truth: AlgebraField, geos, sigma: float, seed: int) -> Dataset:
    """Noisy measurements Y_i = scattering(truth, geo_i) + eps_i.

    Noise is drawn sequentially record by record from a single seeded
    stream, so the dataset is a pure function of (truth, geos, sigma, seed).
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    u = scattering_matrices(truth, geos)
    entries = tuple(g.entry for g in geos)
    rng = np.random.default_rng(seed)
    y = np.empty_like(u)
    for i in range(len(u)):
        if truth.group == SU2:
            eps = sigma * rng.standard_normal(u[i].shape) + 1j * (
                sigma * rng.standard_normal(u[i].shape)
            )
        else:
            eps = sigma * rng.standard_normal(u[i].shape)
        y[i] = u[i] + eps
    return Dataset(truth.group, float(sigma), int(seed), entries, y)


def _flatten(y: np.ndarray, group: str) -> list[float]:
    if group == SU2:
        out = np.empty(y.size * 2)
        out[0::2] = y.real.ravel()
        out[1::2] = y.imag.ravel()
        return [float(v) for v in out]
    return [float(v) for v in y.ravel()]


def _unflatten(vals, group: str) -> np.ndarray:
    d = group_dim(group)
    vals = np.asarray(vals, dtype=float)
    if group == SU2:
        if vals.shape != (2 * d * d,):
            raise ValueError(f"record has {vals.size} values, expected {2 * d * d}")
        return (vals[0::2] + 1j * vals[1::2]).reshape(d, d)
    if vals.shape != (d * d,):
        raise ValueError(f"record has {vals.size} values, expected {d * d}")
    return vals.reshape(d, d)


def save_dataset(ds: Dataset, path) -> None:
    payload = {
        "version": 1,
        "group": ds.group,
        "sigma": ds.sigma,
        "seed": ds.seed,
        "records": [
            {"beta": e.beta, "alpha": e.alpha, "y": _flatten(y, ds.group)}
            for e, y in ds.records
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported dataset version {payload.get('version')!r}")
    group = payload["group"]
    if group not in GROUPS:
        raise ValueError(f"unknown group tag {group!r}")
    entries = tuple(
        FanBeamPoint(rec["beta"], rec["alpha"]) for rec in payload["records"]
    )
    d = group_dim(group)
    dtype = complex if group == SU2 else float
    y = np.empty((len(entries), d, d), dtype=dtype)
    for i, rec in enumerate(payload["records"]):
        y[i] = _unflatten(rec["y"], group)
    return Dataset(group, float(payload["sigma"]), int(payload["seed"]), entries, y)
