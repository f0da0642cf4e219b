import numpy as np

from ahcmc import tensor


def sphere_polar(a, theta):
    """Round 2-sphere of radius a in (theta, phi): metric and derivatives."""
    n = len(theta)
    g = np.zeros((n, 2, 2))
    g[:, 0, 0] = a**2
    g[:, 1, 1] = a**2 * np.sin(theta) ** 2
    dg = np.zeros((n, 2, 2, 2))
    dg[:, 0, 1, 1] = 2 * a**2 * np.sin(theta) * np.cos(theta)
    ddg = np.zeros((n, 2, 2, 2, 2))
    ddg[:, 0, 0, 1, 1] = 2 * a**2 * np.cos(2 * theta)
    return g, dg, ddg


def test_sphere_christoffel_closed_form():
    th = np.array([0.3, 1.0, 2.0])
    g, dg, _ = sphere_polar(2.0, th)
    gam = tensor.christoffel(np.linalg.inv(g), dg)
    np.testing.assert_allclose(gam[:, 0, 1, 1], -np.sin(th) * np.cos(th))
    np.testing.assert_allclose(gam[:, 1, 0, 1], np.cos(th) / np.sin(th))
    np.testing.assert_allclose(gam[:, 1, 1, 0], np.cos(th) / np.sin(th))
    assert np.allclose(gam[:, 0, 0, 0], 0)


def test_sphere_ricci_and_scalar():
    a = 1.7
    th = np.array([0.4, 1.2, 2.6])
    g, dg, ddg = sphere_polar(a, th)
    ginv = np.linalg.inv(g)
    gam = tensor.christoffel(ginv, dg)
    ric = tensor.ricci(gam, tensor.christoffel_derivative(ginv, dg, ddg))
    np.testing.assert_allclose(ric, g / a**2, atol=1e-13)
    np.testing.assert_allclose(tensor.scalar_curvature(ginv, ric), 2 / a**2)


def test_flat_polar_has_zero_curvature():
    # R^3 in spherical coordinates: g = diag(1, r^2, r^2 sin^2)
    r, th = 1.3, np.array([0.5, 1.5])
    n = len(th)
    g = np.zeros((n, 3, 3))
    g[:, 0, 0] = 1
    g[:, 1, 1] = r**2
    g[:, 2, 2] = r**2 * np.sin(th) ** 2
    dg = np.zeros((n, 3, 3, 3))
    dg[:, 0, 1, 1] = 2 * r
    dg[:, 0, 2, 2] = 2 * r * np.sin(th) ** 2
    dg[:, 1, 2, 2] = 2 * r**2 * np.sin(th) * np.cos(th)
    ddg = np.zeros((n, 3, 3, 3, 3))
    ddg[:, 0, 0, 1, 1] = 2
    ddg[:, 0, 0, 2, 2] = 2 * np.sin(th) ** 2
    ddg[:, 0, 1, 2, 2] = ddg[:, 1, 0, 2, 2] = 4 * r * np.sin(th) * np.cos(th)
    ddg[:, 1, 1, 2, 2] = 2 * r**2 * np.cos(2 * th)
    ginv = tensor.inverse(g)
    ric = tensor.ricci(tensor.christoffel(ginv, dg), tensor.christoffel_derivative(ginv, dg, ddg))
    np.testing.assert_allclose(ric, 0, atol=1e-13)
