"""End-to-end acceptance checks for the reconstruction pipeline.

Each test is one criterion; run `pytest tests/test_acceptance.py -v` for a
pass/fail line per criterion. The desk-scale study (criteria 9 and 10) runs
six tuned 20000-step chains and dominates the runtime (~25 minutes on a
single core).
"""

import filecmp
import statistics
import time

import numpy as np
import pytest

from spintomo.cli import main
from spintomo.data import Dataset, simulate
from spintomo.eval import hellinger_affinity, l2_error, mean_scattering_sq_distance
from spintomo.field import AlgebraField, bumps_field, zero_field
from spintomo.forward import pseudo_linearization_residual, scattering_matrices
from spintomo.geometry import (
    FanBeamPoint,
    builtin_metric,
    metric_lumped_weights,
    sample_fanbeam,
    shoot_geodesic,
    trace_bundle,
)
from spintomo.liegroup import AlgebraElement, exp_su2, group_defect
from spintomo.mcmc import ChainConfig, init_state, pcn_step, run_chain
from spintomo.mesh import generate_disk_mesh
from spintomo.prior import MaternParams, build_sampler, matern_kernel, sample_field

EUC = builtin_metric("euclidean")
BENT = builtin_metric("gaussian-pair")


@pytest.fixture(scope="module")
def mesh886():
    return generate_disk_mesh(886, seed=0)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels(mesh886):
    # compile the transport kernels outside the timed criteria
    geos = trace_bundle(EUC, mesh886, sample_fanbeam(2, seed=0), h=1e-2)
    scattering_matrices(zero_field(mesh886, "su2"), geos)
    scattering_matrices(zero_field(mesh886, "so3"), geos)


def test_criterion_01_zero_field_scatters_to_identity(mesh886):
    f2, f3 = zero_field(mesh886, "su2"), zero_field(mesh886, "so3")
    elapsed = 0.0
    for metric in (EUC, BENT):
        geos = trace_bundle(metric, mesh886, sample_fanbeam(1000, seed=1), h=1e-3)
        t0 = time.perf_counter()
        u2 = scattering_matrices(f2, geos)
        u3 = scattering_matrices(f3, geos)
        elapsed += time.perf_counter() - t0
        eye2 = np.broadcast_to(np.eye(2, dtype=complex), u2.shape)
        eye3 = np.broadcast_to(np.eye(3), u3.shape)
        assert (u2 == eye2).all() and (u3 == eye3).all()
    assert elapsed < 5.0


def test_criterion_02_constant_field_matches_closed_form(mesh886):
    rng = np.random.default_rng(42)
    errs = {1e-3: [], 5e-4: []}
    for _ in range(20):
        c = rng.normal(size=3)
        beta = rng.uniform(0, 2 * np.pi)
        alpha = rng.uniform(-1.2, 1.2)
        f = AlgebraField(mesh886, "su2", np.repeat(c[:, None], mesh886.nv, axis=1))
        t = 2.0 * np.cos(alpha)
        oracle = exp_su2(AlgebraElement(tuple(-t * c), "su2"))
        for h in errs:
            geo = shoot_geodesic(EUC, mesh886, FanBeamPoint(beta, alpha), h=h)
            errs[h].append(np.linalg.norm(scattering_matrices(f, [geo])[0] - oracle))
    rel = np.array(errs[1e-3]) / np.sqrt(2.0)  # Frobenius norm of any SU(2) element
    assert rel.max() <= 1e-5
    # aggregate second-order decay; per-chord ratios swing with the
    # fractional position of the boundary crossing
    ratio = np.sum(errs[1e-3]) / np.sum(errs[5e-4])
    assert 3.5 <= ratio <= 4.5


def test_criterion_03_unitarity_drift(mesh886):
    sampler = build_sampler(mesh886, MaternParams(nu=3.0, ell=0.2))
    rng = np.random.default_rng(3)
    worst = 0.0
    for group, n in (("su2", 250), ("so3", 250)):
        f = sample_field(sampler, group, rng)
        geos = trace_bundle(BENT, mesh886, sample_fanbeam(n, seed=30), h=1e-3)
        for u in scattering_matrices(f, geos):
            worst = max(worst, group_defect(u))
    assert worst <= 1e-8


def test_criterion_04_euclidean_exit_time(mesh886):
    h = 1e-3
    for entry in sample_fanbeam(100, seed=4):
        geo = shoot_geodesic(EUC, mesh886, entry, h=h)
        assert abs(geo.exit_time - 2.0 * np.cos(entry.alpha)) <= 2.0 * h


def test_criterion_05_pseudo_linearization_residual(mesh886):
    sampler = build_sampler(mesh886, MaternParams(nu=3.0, ell=0.2))
    rng = np.random.default_rng(5)
    entries = sample_fanbeam(20, seed=50)
    for entry in entries:
        f = sample_field(sampler, "su2", rng)
        g = sample_field(sampler, "su2", rng)
        geo = shoot_geodesic(BENT, mesh886, entry, h=1e-3)
        fine = shoot_geodesic(BENT, mesh886, entry, h=5e-4)
        r = pseudo_linearization_residual(f, g, geo)
        assert r <= 5e-3
        assert pseudo_linearization_residual(f, g, fine) < r


def test_criterion_06_matern_kernel_and_draws(mesh886):
    t0 = time.perf_counter()
    radii = np.linspace(0.05, 2.0, 20)
    half = matern_kernel(MaternParams(nu=0.5, ell=0.3), radii)
    assert np.max(np.abs(half - np.exp(-radii / 0.3))) <= 1e-10
    s3 = np.sqrt(3.0) * radii / 0.3
    expected = (1.0 + s3) * np.exp(-s3)
    assert np.max(np.abs(matern_kernel(MaternParams(nu=1.5, ell=0.3), radii) - expected)) <= 1e-10

    params = MaternParams(nu=3.0, ell=0.2)
    sampler = build_sampler(mesh886, params)
    rng = np.random.default_rng(6)
    draws = np.stack([sample_field(sampler, "su2", rng).coeffs[0] for _ in range(2000)])
    pairs = np.random.default_rng(60).integers(0, mesh886.nv, size=(20, 2))
    for i, j in pairs:
        k = matern_kernel(params, np.linalg.norm(mesh886.vertices[i] - mesh886.vertices[j]))
        emp = np.mean(draws[:, i] * draws[:, j])
        se = np.sqrt((1.0 + k**2) / 2000.0)
        assert abs(emp - k) <= 3.0 * se
    assert time.perf_counter() - t0 < 60.0


def test_criterion_07_pcn_flat_likelihood_sanity():
    mesh = generate_disk_mesh(300, seed=0)
    sampler = build_sampler(mesh, MaternParams(nu=3.0, ell=0.2))
    flat = Dataset("su2", 0.05, 0, (), np.zeros((0, 2, 2), dtype=complex))
    delta = 0.02
    n = 5000
    state = init_state(sampler, flat, [], None, seed=42)
    probes = [0, 50, 150, 299]
    trace = np.empty((n + 1, len(probes)))
    trace[0] = state.current.coeffs[0, probes]
    for step in range(n):
        state = pcn_step(state, delta, sampler, flat, [])
        trace[step + 1] = state.current.coeffs[0, probes]
    assert state.accepted == n  # flat likelihood accepts every proposal
    rho = np.sqrt(1.0 - 2.0 * delta)
    se = np.sqrt((1.0 - rho**2) / n)
    for k in range(len(probes)):
        x = trace[:, k]
        lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert abs(lag1 - rho) <= 3.0 * se


def test_criterion_08_hellinger_sandwich(mesh886):
    sampler = build_sampler(mesh886, MaternParams(nu=3.0, ell=0.2))
    geos = trace_bundle(BENT, mesh886, sample_fanbeam(500, seed=8), h=1e-3)
    rng = np.random.default_rng(80)
    for _ in range(50):
        f = sample_field(sampler, "su2", rng)
        g = sample_field(sampler, "su2", rng)
        msq = mean_scattering_sq_distance(f, g, geos)
        hsq = 2.0 * (1.0 - hellinger_affinity(f, g, geos, sigma=1.0))
        assert 0.0 <= hsq <= msq / 4.0 + 1e-15


@pytest.fixture(scope="module")
def desk_study(mesh886):
    """Scaled reconstruction study: three seeds, N in {200, 800}."""
    truth = bumps_field(mesh886, "su2")
    weights = metric_lumped_weights(mesh886, BENT)
    sampler = build_sampler(mesh886, MaternParams(nu=3.0, ell=0.2))
    zero_err = l2_error(zero_field(mesh886, "su2"), truth, weights)
    rel = {200: [], 800: []}
    reports = {200: [], 800: []}
    for s in range(3):
        for n in (200, 800):
            geos = trace_bundle(BENT, mesh886, sample_fanbeam(n, seed=100 + s), h=2e-3)
            ds = simulate(truth, geos, 0.05, seed=200 + s)
            cfg = ChainConfig(delta=2.5e-5, n_steps=20000, tune=True, seed=300 + s)
            report = run_chain(cfg, sampler, ds, geos)
            rel[n].append(l2_error(report.posterior_mean, truth, weights) / zero_err)
            reports[n].append(report)
    return rel, reports


def test_criterion_09_reconstruction_improves_with_data(desk_study):
    rel, _ = desk_study
    med200 = statistics.median(rel[200])
    med800 = statistics.median(rel[800])
    assert med800 < med200  # more geodesics, better recovery
    assert med200 < 1.0  # beats the zero field (relative error of 0 is 1)


def test_criterion_10_tuned_acceptance_in_band(desk_study):
    _, reports = desk_study
    for report in reports[200]:
        assert 0.15 <= report.acceptance_rate <= 0.35


def test_criterion_11_pipeline_rerun_is_bit_identical(tmp_path):
    def pipeline(out):
        args = ["--out", str(out)]
        assert main(["simulate", *args, "--nv", "300", "--step", "2e-3",
                     "--n", "20", "--sigma", "0.05", "--seed", "11"]) == 0
        assert main(["sample", *args, "--steps", "60", "--delta", "0.02"]) == 0
        assert main(["eval", *args]) == 0
        assert main(["forward", *args]) == 0
        assert main(["export", *args]) == 0

    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(a)
    pipeline(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
