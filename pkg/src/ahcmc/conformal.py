"""Moebius boosts, mass-aspect transformation and centering, uniformization of near-round spheres."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import s2grid
from .ambient import MassAspect


class UniformizationError(RuntimeError):
    pass


class CenteringError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


# ---------------------------------------------------------------------------
# boosts


@dataclass(frozen=True)
class MobiusBoost:
    """Conformal map B(x) = (x_perp + (sinh t + x_n cosh t) n) / (cosh t + x_n sinh t).

    ``B* g0 = exp(2u) g0`` with ``exp(u) = 1 / (cosh t + x_n sinh t)``.
    The map fixes the two poles +-n and pushes points toward +n for t > 0.
    """

    t: float = 0.0
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        nrm = np.linalg.norm(a)
        if nrm == 0:
            raise ValueError("boost axis must be nonzero")
        object.__setattr__(self, "axis", tuple(float(v) for v in a / nrm))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_vector(cls, b) -> "MobiusBoost":
        b = np.asarray(b, dtype=float)
        t = float(np.linalg.norm(b))
        if t == 0.0:
            return cls()
        return cls(t, tuple(b / t))

    @property
    def vector(self) -> np.ndarray:
        return self.t * np.asarray(self.axis)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        n = np.asarray(self.axis).reshape((3,) + (1,) * (x.ndim - 1))
        xn = np.sum(x * n, axis=0)
        return x, n, xn

    def factor(self, x) -> np.ndarray:
        _, _, xn = self._split(x)
        return 1.0 / (math.cosh(self.t) + xn * math.sinh(self.t))

    def __call__(self, x) -> np.ndarray:
        x, n, xn = self._split(x)
        c, s = math.cosh(self.t), math.sinh(self.t)
        perp = x - xn * n
        return (perp + (s + xn * c) * n) / (c + xn * s)

    def differential(self, x, w) -> np.ndarray:
        """dB_x(w) for ambient vectors w, shape (3, ...)."""
        x, n, xn = self._split(x)
        w = np.asarray(w, dtype=float)
        wn = np.sum(w * n, axis=0)
        c, s = math.cosh(self.t), math.sinh(self.t)
        D = c + xn * s
        perp_w = w - wn * n
        perp_x = x - xn * n
        return (perp_w + c * wn * n) / D - (perp_x + (s + xn * c) * n) * (s * wn / D**2)

    def inverse(self) -> "MobiusBoost":
        return MobiusBoost(-self.t, self.axis)

    def compose(self, other: "MobiusBoost") -> "MobiusBoost":
        """self after other; defined for parallel axes."""
        a, b = np.asarray(self.axis), np.asarray(other.axis)
        d = float(a @ b)
        if abs(abs(d) - 1.0) > 1e-14 and self.t != 0.0 and other.t != 0.0:
            raise ValueError("composition of boosts along different axes is not a pure boost")
        if self.t == 0.0:
            return other
        return MobiusBoost(self.t + math.copysign(1.0, d) * other.t, self.axis)

    def to_record(self) -> dict:
        return {"t": self.t, "axis": list(self.axis)}


def _xyz_to_angles(x):
    theta = np.arccos(np.clip(x[2], -1.0, 1.0))
    phi = np.arctan2(x[1], x[0])
    return theta, phi


def _as_callable(tau):
    if isinstance(tau, MassAspect):
        return tau.at_xyz
    return tau


def mobius_pullback(boost: MobiusBoost, field, x) -> np.ndarray:
    """Values of ``field`` composed with ``boost`` at points ``x`` (3, ...).

    ``field`` may be a MassAspect, a callable of a (3, ...) array, or a
    coefficient vector.
    """
    y = boost(x)
    if isinstance(field, np.ndarray) and field.ndim == 1:
        th, ph = _xyz_to_angles(y)
        return s2grid.evaluate(field, th, ph)
    return _as_callable(field)(y)


def transformed_trace(tau, gamma: MobiusBoost, x) -> np.ndarray:
    """tr h^gamma = exp(3v) tau o gamma with gamma* g0 = exp(2v) g0."""
    return gamma.factor(x) ** 3 * mobius_pullback(gamma, tau, x)


def transformed_trace_tensorial(tau, gamma: MobiusBoost, x) -> np.ndarray:
    """Trace of exp(v) gamma* h with h = (tau / 2) g0, from the differential of gamma."""
    x = np.asarray(x, dtype=float)
    # orthonormal tangent frame at x
    ref = np.where(np.abs(x[2]) < 0.9, 1.0, 0.0)
    helper = np.stack([1.0 - ref, np.zeros_like(ref), ref])
    e1 = np.cross(x, helper, axis=0)
    e1 /= np.linalg.norm(e1, axis=0)
    e2 = np.cross(x, e1, axis=0)
    tau_y = mobius_pullback(gamma, tau, x)
    tr = 0.0
    for e in (e1, e2):
        de = gamma.differential(x, e)
        tr = tr + 0.5 * tau_y * np.sum(de * de, axis=0)
    return gamma.factor(x) * tr


def transform_mass_aspect(tau, gamma: MobiusBoost, L: int = 24) -> MassAspect:
    """Re-expand tr h^gamma to band ``L`` on a fine grid."""
    grid = s2grid.build_grid(max(L, 8) + 16)
    vals = transformed_trace(tau, gamma, grid.xyz)
    return MassAspect(s2grid.resize(grid.analysis(vals), L))


@dataclass(frozen=True)
class CenteringResult:
    gamma: MobiusBoost
    mass_aspect: MassAspect
    moments: np.ndarray
    iterations: int


def _moments(tau, gamma, grid):
    return grid.integrate(grid.xyz * transformed_trace(tau, gamma, grid.xyz))


def center_mass_aspect(tau, L: int = 24, tol: float = 1e-12, max_iter: int = 50, grid_L: int = 48) -> CenteringResult:
    """Boost gamma with vanishing first moments of tr h^gamma (Newton on the boost vector)."""
    grid = s2grid.build_grid(grid_L)
    total = abs(float(grid.integrate(_as_callable(tau)(grid.xyz))))
    if np.min(_as_callable(tau)(grid.xyz)) <= 0:
        raise ValueError("centering requires a positive mass aspect")
    b = np.zeros(3)
    m = _moments(tau, MobiusBoost(), grid)
    it = 0
    h = 1e-7
    while np.max(np.abs(m)) > tol * total:
        if it >= max_iter:
            raise CenteringError(f"center_mass_aspect: no convergence in {max_iter} iterations", np.abs(m).max())
        J = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            J[:, k] = (
                _moments(tau, MobiusBoost.from_vector(b + e), grid) - _moments(tau, MobiusBoost.from_vector(b - e), grid)
            ) / (2 * h)
        step = np.linalg.solve(J, -m)
        alpha = 1.0
        while True:
            trial = _moments(tau, MobiusBoost.from_vector(b + alpha * step), grid)
            if np.max(np.abs(trial)) < np.max(np.abs(m)) or alpha < 1e-3:
                break
            alpha *= 0.5
        b = b + alpha * step
        m = trial
        it += 1
    gamma = MobiusBoost.from_vector(b)
    return CenteringResult(gamma, transform_mass_aspect(tau, gamma, L), m, it)


# ---------------------------------------------------------------------------
# uniformization


@dataclass(frozen=True, eq=False)
class IntrinsicMetric:
    """A metric on the (theta, phi) chart sampled on a grid."""

    grid: s2grid.GridS2
    metric: np.ndarray
    inverse: np.ndarray
    christoffel: np.ndarray
    density: np.ndarray  # sqrt(det) / sin(theta)
    K: np.ndarray

    @property
    def area(self) -> float:
        return float(self.grid.integrate(self.density))

    @classmethod
    def from_geometry(cls, geom) -> "IntrinsicMetric":
        return cls(
            geom.grid, geom.induced_metric, geom.induced_inverse, geom.induced_christoffel, geom.area_density, geom.gauss_K
        )

    @classmethod
    def conformal(cls, grid: s2grid.GridS2, beta_coeffs) -> "IntrinsicMetric":
        """exp(2 beta) g0 with beta given by harmonic coefficients of any band."""
        th, ph = grid.theta_nodes, grid.phi_nodes
        b = {k: s2grid.evaluate(beta_coeffs, th, ph, *k) for k in [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)]}
        s, c = np.sin(th), np.cos(th)
        e2 = np.exp(2 * b[(0, 0)])
        g0 = np.zeros(th.shape + (2, 2))
        g0[..., 0, 0] = 1.0
        g0[..., 1, 1] = s**2
        g0inv = np.zeros_like(g0)
        g0inv[..., 0, 0] = 1.0
        g0inv[..., 1, 1] = 1.0 / s**2
        db = np.stack([b[(1, 0)], b[(0, 1)]], -1)
        G = np.zeros(th.shape + (2, 2, 2))
        G[..., 0, 1, 1] = -s * c
        G[..., 1, 0, 1] = c / s
        G[..., 1, 1, 0] = c / s
        eye = np.eye(2)
        G = (
            G
            + np.einsum("ki,...j->...kij", eye, db)
            + np.einsum("kj,...i->...kij", eye, db)
            - np.einsum("...ij,...kl,...l->...kij", g0, g0inv, db)
        )
        lap = b[(2, 0)] + c / s * b[(1, 0)] + b[(0, 2)] / s**2
        K = np.exp(-2 * b[(0, 0)]) * (1.0 - lap)
        return cls(grid, e2[..., None, None] * g0, g0inv / e2[..., None, None], G, e2, K)

    def laplacian_matrix(self) -> np.ndarray:
        grid = self.grid
        gi = self.inverse.reshape(-1, 2, 2)
        cc = np.einsum("...ij,...kij->...k", self.inverse, self.christoffel).reshape(-1, 2)
        return (
            gi[:, 0, 0, None] * grid.node_matrix(2, 0)
            + 2.0 * gi[:, 0, 1, None] * grid.node_matrix(1, 1)
            + gi[:, 1, 1, None] * grid.node_matrix(0, 2)
            - cc[:, 0, None] * grid.node_matrix(1, 0)
            - cc[:, 1, None] * grid.node_matrix(0, 1)
        )


@dataclass(frozen=True, eq=False)
class UniformizationResult:
    beta: np.ndarray  # harmonic coefficients on the unit sphere
    beta_nodes: np.ndarray
    diffeo: np.ndarray  # harmonic coefficients (3, ncoef) of the conformal map X: chart -> S^2
    map_nodes: np.ndarray  # X at chart nodes, (3, nlat, nlon)
    stretch: np.ndarray  # lambda with X* g0 = lambda g_hat at chart nodes
    khat: np.ndarray  # Gauss curvature of the normalized metric at chart nodes
    residual_norm: float
    conformality_defect: float
    gauge: np.ndarray
    area_defect: float
    sup_beta: float
    dirichlet_beta: float
    eigenvalues: np.ndarray
    metric: IntrinsicMetric
    scale: float  # 4 pi / area
    iterations: int

    @property
    def grid(self) -> s2grid.GridS2:
        return self.metric.grid


def _procrustes(X, target, w):
    sw = np.sqrt(w.ravel())
    R, _ = scipy.linalg.orthogonal_procrustes((X.reshape(3, -1) * sw).T, (target.reshape(3, -1) * sw).T)
    return np.einsum("ji,j...->i...", R, X)


def _harmonics_at(L, x):
    th, ph = _xyz_to_angles(x.reshape(3, -1))
    return s2grid.legendre_tables(L, th, 0)[0] * s2grid.trig_tables(L, ph, 0)[0]


def uniformize(
    metric,
    tol: float = 1e-13,
    max_iter: int = 30,
    regime: float = 0.2,
    initial_w=None,
) -> UniformizationResult:
    """Conformal map of the area-normalized metric onto the round sphere, gauged so that exp(2 beta) has vanishing first moments.

    Solves ``Delta_hat w - K_hat + exp(2w) = 0`` so that ``exp(2w) g_hat`` is
    round, takes the degree-one eigenfunctions of the round metric as the
    map ``X``, applies a boost so that the map has vanishing centre of mass
    and removes the rotation by a Procrustes fit.  ``beta`` satisfies
    ``(X^{-1})* g_hat = exp(2 beta) g0``.
    """
    if not isinstance(metric, IntrinsicMetric):
        metric = IntrinsicMetric.from_geometry(metric)
    grid = metric.grid
    area = metric.area
    scale = 4.0 * math.pi / area
    khat = metric.K / scale
    if np.max(np.abs(khat - 1.0)) > regime:
        raise UniformizationError(f"uniformize: outside near-round regime (sup|K_hat-1| = {np.max(np.abs(khat - 1)):.3g})")
    wq = (grid.weights * metric.density * scale)  # d mu_hat
    x = grid.xyz
    Y = grid.node_matrix()
    LapHat = metric.laplacian_matrix() / scale
    An = grid.analysis_matrix
    c = np.zeros(grid.ncoef) if initial_w is None else np.asarray(initial_w, dtype=float).copy()
    xw = (x.reshape(3, -1) * wq.ravel())
    rn = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        w = Y @ c
        e2 = np.exp(2 * w)
        F = LapHat @ c - khat.ravel() + e2
        gauge = xw @ e2
        res = np.concatenate([An @ F, gauge])
        rn_new = float(np.abs(res).max())
        if rn_new <= tol or (rn_new >= rn and rn < 1e-10):
            rn = min(rn, rn_new)
            break
        rn = rn_new
        J = np.vstack([An @ (LapHat + (2 * e2)[:, None] * Y), (xw * (2 * e2)) @ Y])
        c = c - np.linalg.lstsq(J, res, rcond=None)[0]
    else:
        if rn > 1e-9:
            raise UniformizationError(f"uniformize: Newton failed (residual {rn:.3g})")
    w = Y @ c
    e2 = np.exp(2 * w)

    # degree-one eigenfunctions of the round metric exp(2w) g_hat
    Yt, Yp = grid.node_matrix(1, 0), grid.node_matrix(0, 1)
    gi = metric.inverse.reshape(-1, 2, 2) / scale
    W = wq.ravel()
    stiff = (
        Yt.T @ ((W * gi[:, 0, 0])[:, None] * Yt)
        + Yt.T @ ((W * gi[:, 0, 1])[:, None] * Yp)
        + Yp.T @ ((W * gi[:, 0, 1])[:, None] * Yt)
        + Yp.T @ ((W * gi[:, 1, 1])[:, None] * Yp)
    )
    mass = Y.T @ ((W * e2)[:, None] * Y)
    vals, vecs = scipy.linalg.eigh(0.5 * (stiff + stiff.T), 0.5 * (mass + mass.T), subset_by_index=[0, 4])
    E = (Y @ vecs[:, 1:4]).T.reshape((3,) + grid.shape) * math.sqrt(4.0 * math.pi / 3.0)
    X = _procrustes(E, x, wq)

    # boost to vanishing centre of mass, then remove the rotation again
    def com(b):
        Z = MobiusBoost.from_vector(b)(X)
        return np.sum(Z * wq, axis=(-2, -1))

    b = np.zeros(3)
    m = com(b)
    for _ in range(50):
        if np.max(np.abs(m)) < 1e-14:
            break
        h = 1e-7
        Jb = np.column_stack([(com(b + h * e) - com(b - h * e)) / (2 * h) for e in np.eye(3)])
        b = b - np.linalg.solve(Jb, m)
        m = com(b)
    X = MobiusBoost.from_vector(b)(X)
    X = X / np.linalg.norm(X, axis=0)
    X = _procrustes(X, x, wq)

    # conformal stretch lambda
    Xc = grid.analysis(X)
    dX = np.stack([grid.synthesis(Xc, 1, 0), grid.synthesis(Xc, 0, 1)], -1)  # (3, nlat, nlon, 2)
    T = np.einsum("c...i,c...j->...ij", dX, dX)
    ghat = metric.metric * scale
    ghinv = metric.inverse / scale
    lam = 0.5 * np.einsum("...ij,...ij->...", ghinv, T)
    D = T - lam[..., None, None] * ghat
    defect = float(np.max(np.sqrt(np.einsum("...ik,...jl,...ij,...kl->...", ghinv, ghinv, D, D)) / lam))

    # beta coefficients by change of variables y = X(p)
    beta_vals = -0.5 * np.log(lam)
    Yx = _harmonics_at(grid.L, X)
    beta = Yx @ (wq * lam * beta_vals).ravel()
    beta_nodes = grid.synthesis(beta)
    gauge = grid.integrate(x * np.exp(2 * beta_nodes))
    area_defect = float(grid.integrate(np.exp(2 * beta_nodes)) - 4.0 * math.pi)
    ell = grid.degrees
    dirichlet = float(np.sum(ell * (ell + 1.0) * beta**2))
    return UniformizationResult(
        beta=beta,
        beta_nodes=beta_nodes,
        diffeo=Xc,
        map_nodes=X,
        stretch=lam,
        khat=khat,
        residual_norm=rn,
        conformality_defect=defect,
        gauge=gauge,
        area_defect=area_defect,
        sup_beta=float(np.max(np.abs(beta_nodes))),
        dirichlet_beta=dirichlet,
        eigenvalues=vals,
        metric=metric,
        scale=scale,
        iterations=it,
    )


def kw_residual(u: UniformizationResult) -> np.ndarray:
    """int <grad K_hat, grad x_i> exp(2 beta) d mu0, evaluated on the chart.

    Under ``y = X(p)`` the integrand becomes ``lambda^{-1} <grad K_hat, grad X_i>_hat d mu_hat``,
    with ``K_hat`` the intrinsic curvature of the normalized metric.
    """
    grid = u.grid
    kc = grid.analysis(u.khat)
    dK = np.stack([grid.synthesis(kc, 1, 0), grid.synthesis(kc, 0, 1)], -1)
    dX = np.stack([grid.synthesis(u.diffeo, 1, 0), grid.synthesis(u.diffeo, 0, 1)], -1)
    ghinv = u.metric.inverse / u.scale
    integrand = np.einsum("...ij,...i,c...j->c...", ghinv, dK, dX) / u.stretch
    wq = u.metric.density * u.scale
    return grid.integrate(integrand * wq)


def synthetic_beta(grid_L: int, coeffs) -> np.ndarray:
    """Adjust degree 0 and 1 coefficients so exp(2 beta) has area 4 pi and vanishing first moments."""
    grid = s2grid.build_grid(grid_L + 16)
    c = s2grid.resize(np.asarray(coeffs, dtype=float), grid_L)
    x = grid.xyz
    for _ in range(50):
        b = grid.synthesis(s2grid.resize(c, grid.L))
        e2 = np.exp(2 * b)
        F = np.concatenate([[grid.integrate(e2) - 4 * math.pi], grid.integrate(x * e2)])
        if np.max(np.abs(F)) < 1e-15:
            break
        # unknowns: coefficients 0..3
        J = np.empty((4, 4))
        for k in range(4):
            Yk = grid.synthesis(np.eye(grid.ncoef)[k])
            J[0, k] = grid.integrate(2 * Yk * e2)
            J[1:, k] = grid.integrate(x * 2 * Yk * e2)
        c[:4] -= np.linalg.solve(J, F)
    return c
