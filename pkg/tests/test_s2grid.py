import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings, strategies as st

from ahcmc import s2grid


def scipy_real_harmonic(l, m, theta, phi):
    """Real orthonormal harmonic without Condon-Shortley phase, from scipy's complex ones."""
    Y = scipy.special.sph_harm_y(l, abs(m), theta, phi)
    sign = (-1) ** abs(m)
    if m == 0:
        return Y.real
    if m > 0:
        return math.sqrt(2) * sign * Y.real
    return math.sqrt(2) * sign * Y.imag


def test_harmonics_match_scipy():
    rng = np.random.default_rng(3)
    theta = rng.uniform(0.1, 3.0, 40)
    phi = rng.uniform(0, 2 * np.pi, 40)
    L = 9
    ls, ms = s2grid.degrees_orders(L)
    for k, (l, m) in enumerate(zip(ls, ms)):
        c = np.zeros(s2grid.n_coeffs(L))
        c[k] = 1.0
        ours = s2grid.evaluate(c, theta, phi)
        np.testing.assert_allclose(ours, scipy_real_harmonic(l, m, theta, phi), atol=1e-13)


def test_degree_one_are_coordinates(grid16):
    c = np.zeros(grid16.ncoef)
    k = math.sqrt(3 / (4 * math.pi))
    for idx, axis in ((s2grid.lm_index(1, 1), 0), (s2grid.lm_index(1, -1), 1), (s2grid.lm_index(1, 0), 2)):
        c[:] = 0
        c[idx] = 1
        np.testing.assert_allclose(grid16.synthesis(c), k * grid16.xyz[axis], atol=1e-14)


def test_quadrature_moments(grid16):
    x, y, z = grid16.xyz
    assert grid16.integrate(np.ones(grid16.shape)) == pytest.approx(4 * np.pi, abs=1e-13)
    assert grid16.integrate(z**2) == pytest.approx(4 * np.pi / 3, abs=1e-13)
    assert grid16.integrate(x**4) == pytest.approx(4 * np.pi / 5, abs=1e-13)
    assert grid16.integrate(x**2 * y**2) == pytest.approx(4 * np.pi / 15, abs=1e-13)
    assert grid16.integrate(x**2 * y**2 * z**2) == pytest.approx(4 * np.pi / 105, abs=1e-13)


def test_orthonormality(grid16):
    B = grid16.node_matrix()
    W = grid16.weights.ravel() if np.ndim(grid16.weights) == 2 else np.broadcast_to(grid16.weights, grid16.shape).ravel()
    G = B.T @ (W[:, None] * B)
    np.testing.assert_allclose(G, np.eye(grid16.ncoef), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_analysis_inverts_synthesis(seed):
    grid = s2grid.build_grid(12)
    c = np.random.default_rng(seed).standard_normal(grid.ncoef)
    np.testing.assert_allclose(grid.analysis(grid.synthesis(c)), c, atol=1e-12)


def test_batch_transforms(grid16):
    c = np.random.default_rng(0).standard_normal((grid16.ncoef, 3))
    f = grid16.synthesis(c)
    assert f.shape == (3,) + grid16.shape
    np.testing.assert_allclose(grid16.analysis(f), c, atol=1e-12)


def test_laplacian_eigenvalues(grid16):
    c = np.random.default_rng(1).standard_normal(grid16.ncoef)
    lap = grid16.laplacian_coeffs(c)
    np.testing.assert_allclose(lap, -grid16.degrees * (grid16.degrees + 1) * c)
    _, _, _, lapn = grid16.angular_derivatives(grid16.synthesis(c))
    np.testing.assert_allclose(lapn, grid16.synthesis(lap), atol=1e-10)


def test_derivatives_match_finite_differences():
    L = 10
    c = np.random.default_rng(2).standard_normal(s2grid.n_coeffs(L))
    th = np.array([0.4, 1.3, 2.2])
    ph = np.array([0.1, 2.0, 5.0])
    h = 1e-5
    for dt, dp in ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0)):
        exact = s2grid.evaluate(c, th, ph, dt, dp)
        lower = (dt - 1, dp) if dt else (dt, dp - 1)
        step = (h, 0) if dt else (0, h)
        fp = s2grid.evaluate(c, th + step[0], ph + step[1], *lower)
        fm = s2grid.evaluate(c, th - step[0], ph - step[1], *lower)
        np.testing.assert_allclose(exact, (fp - fm) / (2 * h), rtol=1e-6, atol=1e-6)


def test_derivative_dict(grid16):
    c = np.random.default_rng(4).standard_normal(grid16.ncoef)
    d = grid16.derivatives(c, 2)
    np.testing.assert_allclose(d[(1, 0)], grid16.synthesis(c, 1, 0))
    np.testing.assert_allclose(d[(0, 2)], grid16.synthesis(c, 0, 2))


def test_triples_roundtrip():
    c = np.random.default_rng(5).standard_normal(s2grid.n_coeffs(5))
    np.testing.assert_array_equal(s2grid.from_triples(s2grid.to_triples(c), 5), c)
    assert len(s2grid.resize(c, 3)) == 16
    assert s2grid.resize(c, 7)[-1] == 0


def test_errors():
    with pytest.raises(ValueError):
        s2grid.build_grid(4)
    with pytest.raises(ValueError):
        s2grid.lm_index(2, 3)
    with pytest.raises(ValueError):
        s2grid.evaluate(np.zeros(5), 0.3, 0.1)
    g = s2grid.build_grid(8)
    with pytest.raises(ValueError):
        g.synthesis(np.zeros(3))
    with pytest.raises(ValueError):
        g.analysis(np.zeros((3, 3)))


def test_module_level_wrappers_match_grid_methods():
    g = s2grid.build_grid(8)
    th, ph = g.theta_nodes, g.phi_nodes
    f = np.cos(th) ** 2 + np.sin(th) * np.cos(ph)
    c = s2grid.sh_analysis(g, f)
    assert np.allclose(c, g.analysis(f))
    assert np.allclose(s2grid.sh_synthesis(g, c), f, atol=1e-12)
    for a, b in zip(s2grid.angular_derivatives(g, f), g.angular_derivatives(f)):
        assert np.allclose(a, b)
