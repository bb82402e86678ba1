import numpy as np
import pytest

from spintomo.mesh import Mesh, generate_disk_mesh
from spintomo.prior import (
    MaternParams,
    build_sampler,
    matern_covariance,
    matern_kernel,
    sample_field,
    shrinkage_scale,
)


@pytest.fixture(scope="module")
def disk():
    return generate_disk_mesh(886, seed=0)


@pytest.fixture(scope="module")
def sampler(disk):
    return build_sampler(disk, MaternParams(nu=3.0, ell=0.2))


def test_kernel_at_zero_is_one():
    for nu in (0.5, 1.0, 1.5, 3.0, 7.3):
        assert matern_kernel(MaternParams(nu=nu, ell=0.3), 0.0) == 1.0


def test_kernel_half_integer_closed_forms():
    # nu=1/2: exp(-r/ell); nu=3/2: (1+sqrt(3) r/ell) exp(-sqrt(3) r/ell)
    ell = 0.2
    radii = np.concatenate([[0.1, 0.5, 1.0], np.linspace(0.01, 2.0, 17)])
    p_half = MaternParams(nu=0.5, ell=ell)
    p_three_half = MaternParams(nu=1.5, ell=ell)
    for r in radii:
        assert matern_kernel(p_half, r) == pytest.approx(np.exp(-r / ell), abs=1e-10)
        s = np.sqrt(3.0) * r / ell
        assert matern_kernel(p_three_half, r) == pytest.approx(
            (1.0 + s) * np.exp(-s), abs=1e-10
        )


def test_kernel_vectorized_and_monotone():
    p = MaternParams(nu=3.0, ell=0.2)
    r = np.linspace(0.0, 2.0, 101)
    k = matern_kernel(p, r)
    assert k.shape == (101,)
    assert k[0] == 1.0
    assert np.all(np.diff(k) < 0)
    assert np.all((k > 0) & (k <= 1))
    with pytest.raises(ValueError):
        matern_kernel(p, -0.1)


def test_two_vertex_covariance():
    m = Mesh([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2]], [[0, 1, 2]])
    cov = matern_covariance(m.vertices[:2], MaternParams(nu=0.5, ell=0.2))
    assert cov == pytest.approx(np.array([[1.0, np.e**-1], [np.e**-1, 1.0]]), abs=1e-12)


def test_cholesky_reproduces_covariance(disk, sampler):
    cov = matern_covariance(disk.vertices, sampler.params)
    cov += sampler.jitter_used * np.eye(disk.nv)
    rebuilt = sampler.chol @ sampler.chol.T
    rel = np.linalg.norm(rebuilt - cov) / np.linalg.norm(cov)
    assert rel < 1e-8
    assert np.allclose(np.diag(rebuilt), 1.0 + sampler.jitter_used, atol=1e-12)
    # the factor is lower triangular with positive diagonal
    assert np.all(np.triu(sampler.chol, 1) == 0.0)
    assert np.all(np.diag(sampler.chol) > 0.0)


def test_empirical_moments(disk, sampler):
    rng = np.random.default_rng(5)
    draws = np.stack(
        [sample_field(sampler, "su2", rng).coeffs[0] for _ in range(2000)]
    )
    probe = np.linspace(0, disk.nv - 1, 21, dtype=int)
    # per-vertex variance within 3 MC standard errors of 1 + jitter
    v = draws[:, probe].var(axis=0)
    assert np.all(np.abs(v - (1.0 + sampler.jitter_used)) < 3.0 * np.sqrt(2.0 / 2000))
    # pairwise covariances within 3 SE of the kernel at 20 vertex pairs
    for a in range(20):
        i, j = probe[a], probe[a + 1]
        r = float(np.hypot(*(disk.vertices[i] - disk.vertices[j])))
        k = matern_kernel(sampler.params, r)
        emp = float(np.mean(draws[:, i] * draws[:, j]))
        se = np.sqrt((1.0 + k * k) / 2000)
        assert abs(emp - k) < 3.0 * se


def test_component_streams_independent(disk, sampler):
    rng = np.random.default_rng(17)
    draws = np.stack([sample_field(sampler, "su2", rng).coeffs for _ in range(2000)])
    v = disk.nv // 3
    c12 = np.mean(draws[:, 0, v] * draws[:, 1, v])
    c23 = np.mean(draws[:, 1, v] * draws[:, 2, v])
    assert abs(c12) < 3.0 / np.sqrt(2000)
    assert abs(c23) < 3.0 / np.sqrt(2000)


def test_smoothness_increases_with_nu(disk):
    # mean squared first-difference along mesh edges shrinks as nu grows
    e0, e1 = disk.edges().T
    msd = []
    for nu in (0.5, 1.5, 3.0):
        s = build_sampler(disk, MaternParams(nu=nu, ell=0.2))
        rng = np.random.default_rng(11)
        acc = 0.0
        for _ in range(500):
            f = sample_field(s, "su2", rng)
            d = f.coeffs[:, e0] - f.coeffs[:, e1]
            acc += float((d**2).mean())
        msd.append(acc / 500)
    assert msd[0] > msd[1] > msd[2]


def test_scale_linearity_and_zero(disk, sampler):
    from spintomo.prior import PriorSampler

    half = PriorSampler(
        sampler.mesh, sampler.params, 0.5, sampler.chol, sampler.jitter_used
    )
    rng1 = np.random.default_rng(23)
    rng2 = np.random.default_rng(23)
    f1 = sample_field(sampler, "su2", rng1)
    f2 = sample_field(half, "su2", rng2)
    assert np.array_equal(f2.coeffs, 0.5 * f1.coeffs)

    zero = PriorSampler(
        sampler.mesh, sampler.params, 0.0, sampler.chol, sampler.jitter_used
    )
    f0 = sample_field(zero, "su2", np.random.default_rng(23))
    assert np.all(f0.coeffs == 0.0)


def test_sampling_is_deterministic(disk, sampler):
    a = sample_field(sampler, "so3", np.random.default_rng(99))
    b = sample_field(sampler, "so3", np.random.default_rng(99))
    assert np.array_equal(a.coeffs, b.coeffs)
    assert a.group == "so3"


def test_shrinkage_scale():
    assert shrinkage_scale(4096, alpha=2.0) == 0.25
    assert shrinkage_scale(1) == 1.0
    with pytest.raises(ValueError):
        shrinkage_scale(0)


def test_param_validation():
    with pytest.raises(ValueError):
        MaternParams(nu=0.0, ell=0.2)
    with pytest.raises(ValueError):
        MaternParams(nu=1.0, ell=-0.2)
    with pytest.raises(ValueError):
        MaternParams(nu=1.0, ell=0.2, jitter=-1e-9)


def test_jitter_escalates_on_singular_covariance():
    # near-coincident vertices make the covariance numerically singular;
    # starting from jitter 0 the builder must walk up until a factorization
    # succeeds (1e-12 is already enough here)
    m = Mesh(
        [[0.0, 0.0], [1e-18, 0.0], [0.0, 1.0], [1.0, 0.5]],
        [[0, 2, 1], [1, 2, 3]],
    )
    s = build_sampler(m, MaternParams(nu=1.5, ell=0.2, jitter=0.0))
    assert 0.0 < s.jitter_used <= 1e-6


def test_indefinite_covariance_raises(monkeypatch, disk):
    import spintomo.prior as prior_mod

    # eigenvalues 3, -1, 1: no jitter below the cap can fix this
    monkeypatch.setattr(
        prior_mod,
        "matern_covariance",
        lambda points, p: np.array(
            [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        ),
    )
    m = Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])
    with pytest.raises(np.linalg.LinAlgError, match="not positive definite"):
        build_sampler(m, MaternParams(nu=1.5, ell=0.2))
