"""Preconditioned Crank-Nicolson sampling of the posterior over fields.

The proposal sqrt(1-2*delta)*current + sqrt(2*delta)*prior_draw is
prior-reversible, so the Metropolis correction involves only the
likelihood ratio.  Every step consumes exactly one prior draw and one
uniform variate, which makes chains reproducible and lets tests predict
the rng stream position.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .field import AlgebraField, lincomb, zero_field
from .forward import scattering_matrices
from .prior import PriorSampler, sample_field

TUNE_WINDOW = 200  # steps per acceptance window while tuning
TUNE_BAND = 0.05  # no adjustment within target +- band


@dataclass(frozen=True)
class ChainConfig:
    delta: float
    n_steps: int
    burn_in: int | None = None  # None: n_steps // 5
    tune: bool = False
    tune_target: float = 0.25
    seed: int = 0
    thin: int = 10

    def __post_init__(self):
        if not (0.0 < self.delta <= 0.5):
            raise ValueError("delta must be in (0, 1/2]")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if self.burn_in is not None and not (0 <= self.burn_in < self.n_steps):
            raise ValueError("burn_in must lie in [0, n_steps)")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if not (0.0 < self.tune_target < 1.0):
            raise ValueError("tune_target must be in (0, 1)")

    @property
    def resolved_burn_in(self) -> int:
        return self.n_steps // 5 if self.burn_in is None else self.burn_in


@dataclass
class ChainState:
    """Mutable per-chain bookkeeping; confined to its chain."""

    current: AlgebraField
    current_loglik: float
    mean_sum: np.ndarray  # per-vertex running sums of post-step states
    n_averaged: int
    accepted: int
    step_index: int
    rng: np.random.Generator


@dataclass(frozen=True)
class ChainReport:
    posterior_mean: AlgebraField
    acceptance_rate: float
    loglik_trace: tuple
    delta_used: float


def log_likelihood(f: AlgebraField, ds: Dataset, geos) -> float:
    """l(f) = -1/(2 sigma^2) * sum_i |Y_i - U_i|_F^2 over the dataset."""
    if len(ds) == 0:
        return 0.0
    u = scattering_matrices(f, geos)
    if len(u) != len(ds):
        raise ValueError("dataset and geodesics are misaligned")
    resid = ds.y - u
    total = float(np.sum(np.abs(resid) ** 2))
    return -total / (2.0 * ds.sigma**2)


def init_state(
    sampler: PriorSampler, ds: Dataset, geos, init: AlgebraField | None, seed: int
) -> ChainState:
    if init is None:
        init = zero_field(sampler.mesh, ds.group)
    elif init.group != ds.group:
        raise ValueError("initial field group does not match the dataset")
    return ChainState(
        current=init,
        current_loglik=log_likelihood(init, ds, geos),
        mean_sum=np.zeros((3, sampler.mesh.nv)),
        n_averaged=0,
        accepted=0,
        step_index=0,
        rng=np.random.default_rng(seed),
    )


def pcn_step(
    state: ChainState, delta: float, sampler: PriorSampler, ds: Dataset, geos
) -> ChainState:
    """One proposal/accept-reject cycle; rejections keep the field bitwise.

    Draw order is fixed: the prior draw first, then the acceptance uniform.
    """
    draw = sample_field(sampler, state.current.group, state.rng)
    proposal = lincomb(
        np.sqrt(1.0 - 2.0 * delta), state.current, np.sqrt(2.0 * delta), draw
    )
    prop_loglik = log_likelihood(proposal, ds, geos)
    u = state.rng.uniform()
    gain = prop_loglik - state.current_loglik
    if gain >= 0.0 or u < np.exp(gain):
        current, loglik, accepted = proposal, prop_loglik, state.accepted + 1
    else:
        current, loglik, accepted = state.current, state.current_loglik, state.accepted
    state.mean_sum += current.coeffs
    return replace(
        state,
        current=current,
        current_loglik=loglik,
        n_averaged=state.n_averaged + 1,
        accepted=accepted,
        step_index=state.step_index + 1,
    )


def run_chain(
    cfg: ChainConfig,
    sampler: PriorSampler,
    ds: Dataset,
    geos,
    init: AlgebraField | None = None,
) -> ChainReport:
    """Run a pCN chain and average the post-burn-in states.

    With tune=True, delta doubles or halves after each 200-step burn-in
    window whose acceptance leaves [target - 0.05, target + 0.05]; the
    value is frozen once burn-in ends.  The likelihood trace is recorded
    every cfg.thin steps across the whole run.
    """
    burn_in = cfg.resolved_burn_in
    state = init_state(sampler, ds, geos, init, cfg.seed)
    delta = cfg.delta
    trace = []
    window_start_accepted = 0
    for step in range(1, cfg.n_steps + 1):
        state = pcn_step(state, delta, sampler, ds, geos)
        if state.step_index % cfg.thin == 0:
            trace.append(state.current_loglik)
        if step == burn_in:
            # averaging starts fresh after burn-in
            state.mean_sum[:] = 0.0
            state.n_averaged = 0
            state.accepted = 0
        elif cfg.tune and step < burn_in and step % TUNE_WINDOW == 0:
            rate = (state.accepted - window_start_accepted) / TUNE_WINDOW
            if rate > cfg.tune_target + TUNE_BAND:
                delta = min(2.0 * delta, 0.5)
            elif rate < cfg.tune_target - TUNE_BAND:
                delta = 0.5 * delta
            window_start_accepted = state.accepted
    mean = AlgebraField(
        state.current.mesh, state.current.group, state.mean_sum / state.n_averaged
    )
    return ChainReport(
        posterior_mean=mean,
        acceptance_rate=state.accepted / state.n_averaged,
        loglik_trace=tuple(trace),
        delta_used=delta,
    )
