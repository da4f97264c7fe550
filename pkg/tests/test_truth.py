import numpy as np
import pytest

from ucfem.truth import CATALOG, builtin_truth, check_source_consistency, fd_laplacian


@pytest.mark.parametrize("tid", sorted(CATALOG))
def test_source_consistency(tid):
    assert check_source_consistency(builtin_truth(tid), n_points=100, seed=1) <= 1e-5


@pytest.mark.parametrize("tid", sorted(CATALOG))
def test_gradient_matches_finite_differences(tid):
    t = builtin_truth(tid)
    rng = np.random.default_rng(2)
    x, y = rng.uniform(0.01, 0.99, (2, 50))
    e = 1e-6
    gx, gy = t.grad(x, y)
    np.testing.assert_allclose(gx, (t.u(x + e, y) - t.u(x - e, y)) / (2 * e), atol=1e-6)
    np.testing.assert_allclose(gy, (t.u(x, y + e) - t.u(x, y - e)) / (2 * e), atol=1e-6)


def test_harmonic_flags():
    for tid in ("harmonic_poly_2", "harmonic_exp", "fractional_corner"):
        t = builtin_truth(tid)
        assert t.is_harmonic and t.f is None
    assert not builtin_truth("poisson_bump").is_harmonic


def test_identities():
    x = np.array([0.3, 0.7])
    y = np.array([0.6, 0.2])
    assert np.abs(fd_laplacian(lambda x, y: x * x - y * y, x, y)).max() < 1e-5
    assert np.abs(fd_laplacian(lambda x, y: np.exp(x) * np.cos(y), x, y)).max() < 1e-5
    assert builtin_truth("poisson_bump").f(0.5, 0.5) == pytest.approx(2 * np.pi ** 2)


def test_corner_parameters_and_continuity():
    t = builtin_truth("fractional_corner", gamma=0.5, delta=0.05)
    # continuous up to the corner nearest the branch point
    assert np.isfinite(t.u(0.0, 0.0))
    assert t.u(0.0, 0.0) == pytest.approx(np.real((0.05 + 0.05j) ** 0.5))
    assert t.smoothness_alpha == pytest.approx(1.5)
    with pytest.raises(ValueError):
        builtin_truth("fractional_corner", delta=0.0)


def test_unknown_id():
    with pytest.raises(ValueError, match="unknown truth"):
        builtin_truth("nope")


def test_source_of_harmonic_is_zero():
    t = builtin_truth("harmonic_exp")
    assert not np.any(t.source(np.ones(3), np.ones(3)))
