import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahcmc import ambient, conformal as cf, s2grid


def stereo(x):
    """Stereographic coordinate from the south pole."""
    return (x[0] + 1j * x[1]) / (1 + x[2])


def test_boost_is_dilation_in_stereographic_chart(grid16):
    x = grid16.xyz[:, 1:-1]  # avoid the south pole row
    t = 0.37
    z = stereo(x)
    zb = stereo(cf.MobiusBoost(t)(x))
    np.testing.assert_allclose(zb, math.exp(-t) * z, atol=1e-13)


def test_boost_group_structure(grid16):
    x = grid16.xyz
    b1, b2 = cf.MobiusBoost(0.3, (1, 1, 0)), cf.MobiusBoost(-0.7, (1, 1, 0))
    np.testing.assert_allclose(b1(b2(x)), b1.compose(b2)(x), atol=1e-14)
    np.testing.assert_allclose(b1.inverse()(b1(x)), x, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(b1(x), axis=0), 1.0, atol=1e-14)
    with pytest.raises(ValueError):
        b1.compose(cf.MobiusBoost(0.1, (0, 0, 1)))
    with pytest.raises(ValueError):
        cf.MobiusBoost(0.1, (0, 0, 0))
    v = np.array([0.1, -0.2, 0.3])
    np.testing.assert_allclose(cf.MobiusBoost.from_vector(v).vector, v)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.5, 1.5), st.integers(0, 1000))
def test_boost_is_conformal(t, seed):
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(3)
    x = rng.standard_normal((3, 5))
    x /= np.linalg.norm(x, axis=0)
    w = rng.standard_normal((3, 5))
    w -= np.sum(w * x, axis=0) * x  # tangent
    B = cf.MobiusBoost(t, tuple(axis))
    dw = B.differential(x, w)
    np.testing.assert_allclose(np.linalg.norm(dw, axis=0), B.factor(x) * np.linalg.norm(w, axis=0), rtol=1e-10)
    np.testing.assert_allclose(np.sum(dw * B(x), axis=0), 0, atol=1e-10)


def test_transformed_trace_two_ways(tau_a, grid16):
    g = cf.MobiusBoost(-0.4)
    x = grid16.xyz
    np.testing.assert_allclose(cf.transformed_trace(tau_a, g, x), cf.transformed_trace_tensorial(tau_a, g, x), atol=1e-12)


def test_first_moment_identity(tau_a):
    # for centered tau: int x3 tr h^{B_{-t}} = sinh t int tau
    fine = s2grid.build_grid(48)
    t = 0.4
    lhs = fine.integrate(fine.xyz[2] * cf.transformed_trace(tau_a, cf.MobiusBoost(-t), fine.xyz))
    rhs = math.sinh(t) * fine.integrate(tau_a.at_xyz(fine.xyz))
    assert lhs == pytest.approx(rhs, abs=1e-11)


def test_centering(grid16):
    tau = ambient.MassAspect.from_function(lambda x, y, z: 2 + 0.1 * x + 0.1 * y, 1)
    res = cf.center_mass_aspect(tau)
    assert res.mass_aspect.is_centered(s2grid.build_grid(48), 1e-12)
    assert res.iterations <= 10
    np.testing.assert_allclose(res.gamma.vector[2], 0, atol=1e-12)


def test_boost_then_recenter_returns(tau_a):
    b = cf.MobiusBoost.from_vector([0.2, 0.1, 0.25])
    boosted = cf.transform_mass_aspect(tau_a, b, L=24)
    grid = s2grid.build_grid(32)
    assert not boosted.is_centered(grid)
    back = cf.center_mass_aspect(boosted, L=24).mass_aspect
    np.testing.assert_allclose(back(grid.theta_nodes, grid.phi_nodes), tau_a(grid.theta_nodes, grid.phi_nodes), atol=1e-9)


def test_centering_requires_positive_tau():
    with pytest.raises(ValueError):
        cf.center_mass_aspect(ambient.MassAspect.from_function(lambda x, y, z: z, 1))


def test_conformal_metric_curvature(grid24):
    c = np.zeros(grid24.ncoef)
    c[4:9] = 0.01 * np.arange(1, 6)
    M = cf.IntrinsicMetric.conformal(grid24, c)
    beta = grid24.synthesis(c)
    lap = grid24.synthesis(grid24.laplacian_coeffs(c))
    np.testing.assert_allclose(M.K, np.exp(-2 * beta) * (1 - lap), atol=1e-13)
    assert grid24.integrate(M.K * M.density) == pytest.approx(4 * math.pi, abs=1e-12)


def test_round_uniformization(grid24):
    u = cf.uniformize(cf.IntrinsicMetric.conformal(grid24, np.zeros(1)))
    assert np.abs(u.beta).max() < 1e-12
    assert np.abs(cf.kw_residual(u)).max() < 1e-12


def test_synthetic_beta_recovered(grid24):
    rng = np.random.default_rng(0)
    c = np.zeros(grid24.ncoef)
    c[4:36] = 0.01 * rng.standard_normal(32) / np.repeat(np.arange(2, 6) ** 2, [5, 7, 9, 11])
    c = cf.synthetic_beta(24, c)
    u = cf.uniformize(cf.IntrinsicMetric.conformal(grid24, c))
    np.testing.assert_allclose(u.beta, c, atol=1e-11)
    assert np.abs(u.gauge).max() < 1e-8
    np.testing.assert_allclose(u.eigenvalues[:5], [0, 2, 2, 2, 6], atol=1e-8)
    assert u.conformality_defect < 1e-10
    assert np.abs(cf.kw_residual(u)).max() < 1e-10


def test_regime_guard(grid24):
    c = np.zeros(grid24.ncoef)
    c[s2grid.lm_index(3, 1)] = 0.4
    with pytest.raises(cf.UniformizationError):
        cf.uniformize(cf.IntrinsicMetric.conformal(grid24, c))
