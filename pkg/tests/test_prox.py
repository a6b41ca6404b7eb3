import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from pylayersep.classes.errors import DimensionError, ProxError
from pylayersep.classes.prox import (ProxParams, project_nonneg, soft_threshold, solve_quadratic_gradient, svt,
                                     weighted_soft_threshold)


def nuclear_objective(X, M, tau):
    return tau * np.linalg.svd(X, compute_uv=False).sum() + 0.5 * np.sum((X - M) ** 2)


def scalar_minimizer(f, centre, span=10.0):
    """1-D minimizer of a convex scalar function, bracketed around centre"""
    return minimize_scalar(f, bounds=(centre - span, centre + span), method='bounded',
                           options={'xatol': 1e-10}).x


def test_svt_zero_tau_is_identity(rng):
    M = rng.normal(size=(4, 6))
    assert np.array_equal(svt(M, 0.0), M)


def test_svt_rank_one():
    u = np.array([3.0, 4.0]) / 5.0
    v = np.array([1.0, 0.0, 0.0])
    M = 5.0 * np.outer(u, v)
    assert np.allclose(svt(M, 2.0), 3.0 * np.outer(u, v), atol=1e-12)


def test_svt_shrinks_the_spectrum(rng):
    M = rng.normal(size=(6, 8))
    X = svt(M, 0.7)
    expected = np.maximum(np.linalg.svd(M, compute_uv=False) - 0.7, 0.0)
    assert np.allclose(np.linalg.svd(X, compute_uv=False), expected, atol=1e-10)


def test_svt_beats_random_perturbations(rng):
    for _ in range(100):
        M = rng.normal(size=(6, 8))
        tau = rng.uniform(0.1, 2.0)
        X = svt(M, tau)
        best = nuclear_objective(X, M, tau)
        for _ in range(100):
            candidate = X + rng.normal(scale=0.05, size=X.shape)
            assert nuclear_objective(candidate, M, tau) >= best - 1e-12


def test_svt_errors():
    with pytest.raises(ProxError):
        svt(np.eye(2), -1.0)
    with pytest.raises(ProxError):
        svt(np.array([[1.0, np.nan]]), 0.5)


def test_soft_threshold_example():
    assert np.array_equal(soft_threshold([3.0, -1.0, 0.5], 1.0), [2.0, 0.0, 0.0])
    assert np.array_equal(soft_threshold([3.0, -1.0, 0.5], 0.0), [3.0, -1.0, 0.5])


def test_soft_threshold_matches_scalar_search(rng):
    x = rng.normal(scale=2.0, size=200)
    y = soft_threshold(x, 0.3)
    for xi, yi in zip(x, y):
        oracle = scalar_minimizer(lambda t: 0.3 * abs(t) + 0.5 * (t - xi) ** 2, xi)
        assert abs(oracle - yi) < 1e-6


def test_weighted_soft_threshold_reductions(rng):
    x = rng.normal(size=10)
    assert np.array_equal(weighted_soft_threshold(x, 0.4, np.ones(10)), soft_threshold(x, 0.4))
    assert np.array_equal(weighted_soft_threshold(x, 0.4, np.zeros(10)), x)


def test_weighted_soft_threshold_matches_scalar_search(rng):
    x = rng.normal(scale=2.0, size=200)
    w = rng.uniform(0.0, 2.0, size=200)
    y = weighted_soft_threshold(x, 0.5, w)
    for xi, wi, yi in zip(x, w, y):
        oracle = scalar_minimizer(lambda t: 0.5 * wi * abs(t) + 0.5 * (t - xi) ** 2, xi)
        assert abs(oracle - yi) < 1e-6


def test_thresholds_are_non_expansive(rng):
    for _ in range(1000):
        a, b = rng.normal(scale=2.0, size=(2, 50))
        w = rng.uniform(0.0, 2.0, size=50)
        tau = rng.uniform(0.0, 1.0)
        gap = np.linalg.norm(a - b)
        assert np.linalg.norm(soft_threshold(a, tau) - soft_threshold(b, tau)) <= gap + 1e-12
        assert np.linalg.norm(weighted_soft_threshold(a, tau, w) - weighted_soft_threshold(b, tau, w)) <= gap + 1e-12
        assert np.linalg.norm(project_nonneg(a) - project_nonneg(b)) <= gap + 1e-12

        A, B = rng.normal(size=(2, 5, 7))
        assert np.linalg.norm(svt(A, tau) - svt(B, tau)) <= np.linalg.norm(A - B) + 1e-10


def test_threshold_errors():
    with pytest.raises(ProxError):
        soft_threshold([1.0], -0.1)
    with pytest.raises(ProxError):
        weighted_soft_threshold([1.0], 0.1, [-1.0])


def test_project_nonneg(rng):
    assert np.array_equal(project_nonneg(-rng.uniform(0.1, 1.0, size=(3, 4))), np.zeros((3, 4)))
    M = rng.uniform(size=(3, 4))
    assert np.array_equal(project_nonneg(M), M)


def test_project_nonneg_is_closest_point(rng):
    for _ in range(100):
        M = rng.normal(size=(4, 5))
        P = project_nonneg(M)
        best = np.linalg.norm(M - P)
        for _ in range(100):
            candidate = np.abs(P + rng.normal(scale=0.1, size=M.shape))
            assert np.linalg.norm(M - candidate) >= best


def test_quadratic_gradient_without_coupling(rng):
    anchor = rng.normal(size=12)
    out = solve_quadratic_gradient(rng.normal(size=12), rng.normal(size=12), 0.0, 2.0, anchor,
                                   threshold=1.0, weights=np.full(12, 0.5))
    assert np.allclose(out, soft_threshold(anchor, 0.25))


def test_quadratic_gradient_pure_quadratic(rng):
    other, d_i, anchor = rng.normal(size=(3, 12))
    out = solve_quadratic_gradient(other, d_i, 0.7, 1.5, anchor)
    expected = (2 * 0.7 * (d_i - other) + 1.5 * anchor) / (2 * 0.7 + 1.5)
    assert np.allclose(out, expected, atol=1e-12)


def test_quadratic_gradient_matches_line_search(rng):
    lam2, mu = 0.4, 1.3
    other, d_i, anchor = rng.normal(size=(3, 120))
    weights = rng.uniform(0.0, 1.5, size=120)
    out = solve_quadratic_gradient(other, d_i, lam2, mu, anchor, threshold=1.0, weights=weights)

    for k in range(120):
        def full(y, k=k):
            return (lam2 * (d_i[k] - y - other[k]) ** 2 + 0.5 * mu * (y - anchor[k]) ** 2
                    + weights[k] * abs(y))
        oracle = minimize_scalar(full, bracket=(-10.0, 0.0, 10.0), method='golden', tol=1e-12).x
        assert abs(oracle - out[k]) < 1e-5


def test_quadratic_gradient_errors():
    z = np.zeros(4)
    with pytest.raises(ProxError):
        solve_quadratic_gradient(z, z, 1.0, 0.0, z)
    with pytest.raises(ProxError):
        solve_quadratic_gradient(z, z, -1.0, 1.0, z)
    with pytest.raises(DimensionError):
        solve_quadratic_gradient(z, np.zeros(5), 1.0, 1.0, z)


def test_prox_params():
    params = ProxParams(0.5, weights=np.array([1.0, 0.0]))
    assert np.array_equal(params.shrink(np.array([2.0, 2.0])), [1.5, 2.0])
    with pytest.raises(ProxError):
        ProxParams(-1.0)
    with pytest.raises(ProxError):
        ProxParams(1.0, weights=np.array([np.inf]))
