"""Geometry of graph spheres r = rho(theta, phi) in an ambient metric."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import ambient, s2grid, tensor


class OrientationError(ValueError):
    """The graph normal fails to point outward."""


@dataclass(frozen=True, eq=False)
class GraphSurface:
    """Sphere given by its absolute radius field ``rho`` (harmonic coefficients)."""

    grid: s2grid.GridS2
    rho_coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.rho_coeffs, dtype=float)
        if c.shape != (self.grid.ncoef,):
            c = s2grid.resize(c, self.grid.L)
        object.__setattr__(self, "rho_coeffs", c)

    @classmethod
    def round(cls, grid: s2grid.GridS2, radius: float) -> "GraphSurface":
        c = np.zeros(grid.ncoef)
        c[0] = radius * math.sqrt(4.0 * math.pi)
        return cls(grid, c)

    @classmethod
    def from_values(cls, grid: s2grid.GridS2, values) -> "GraphSurface":
        return cls(grid, grid.analysis(values))

    @cached_property
    def rho(self) -> np.ndarray:
        return self.grid.synthesis(self.rho_coeffs)

    @property
    def inner_radius(self) -> float:
        return float(self.rho.min())

    @property
    def outer_radius(self) -> float:
        return float(self.rho.max())

    def with_coeffs(self, coeffs) -> "GraphSurface":
        return GraphSurface(self.grid, coeffs)

    def to_record(self) -> dict:
        return {"grid": self.grid.descriptor(), "rho": s2grid.to_triples(self.rho_coeffs)}


def area_radius(area: float) -> float:
    """Radius r with 4 pi sinh^2 r = area."""
    if not area > 0:
        raise ValueError(f"area must be positive (got {area})")
    return float(np.arcsinh(np.sqrt(area / (4.0 * np.pi))))


_SAMPLERS: dict = {}


def _sampler(spec: ambient.AmbientMetricSpec, grid: s2grid.GridS2) -> ambient.MetricSampler:
    key = (id(spec), id(grid))
    hit = _SAMPLERS.get(key)
    if hit is None or hit[0] is not spec or hit[1] is not grid:
        if len(_SAMPLERS) > 64:
            _SAMPLERS.clear()
        hit = (spec, grid, spec.grid_sampler(grid))
        _SAMPLERS[key] = hit
    return hit[2]


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    spec: ambient.AmbientMetricSpec
    surface: GraphSurface
    induced_metric: np.ndarray  # (nlat, nlon, 2, 2) in (theta, phi)
    induced_inverse: np.ndarray
    induced_christoffel: np.ndarray  # (..., k, i, j)
    area_density: np.ndarray  # sqrt(det gamma) / sin(theta): d mu = area_density d mu0
    normal: np.ndarray  # contravariant ambient components of nu
    A: np.ndarray
    H: np.ndarray
    ringA: np.ndarray
    ringA_sq: np.ndarray
    A_sq: np.ndarray
    gauss_K: np.ndarray
    gauss_K_equation: np.ndarray
    ambient_scalar: np.ndarray
    ric_nu_nu: np.ndarray
    radial_tangent_sq: np.ndarray
    normal_radial: np.ndarray
    one_minus_normal_radial: np.ndarray
    radial_dot_tangent: np.ndarray  # <d_r, e_i>
    total_area: float

    @property
    def grid(self) -> s2grid.GridS2:
        return self.surface.grid

    @property
    def r_hat(self) -> float:
        return area_radius(self.total_area)

    @property
    def rho(self) -> np.ndarray:
        return self.surface.rho

    @property
    def f(self) -> np.ndarray:
        return self.surface.rho - self.r_hat

    def integrate(self, field) -> float:
        return surface_integrate(self, field)

    def mean(self, field) -> float:
        return surface_integrate(self, field) / self.total_area

    def laplacian(self, field) -> np.ndarray:
        return surface_laplacian(self, field)

    def gradient_dot(self, f, g) -> np.ndarray:
        """<grad f, grad g> for node fields."""
        grid = self.grid
        cf, cg = grid.analysis(f), grid.analysis(g)
        df = np.stack([grid.synthesis(cf, 1, 0), grid.synthesis(cf, 0, 1)], -1)
        dgg = np.stack([grid.synthesis(cg, 1, 0), grid.synthesis(cg, 0, 1)], -1)
        return np.einsum("...ij,...i,...j->...", self.induced_inverse, df, dgg)


def _rho_derivatives(grid: s2grid.GridS2, coeffs):
    d = grid.derivatives(coeffs, order=3)
    D1 = np.stack([d[(1, 0)], d[(0, 1)]], -1)
    D2 = np.empty(D1.shape[:-1] + (2, 2))
    D3 = np.empty(D1.shape[:-1] + (2, 2, 2))
    for i in range(2):
        for j in range(2):
            D2[..., i, j] = d[(2 - i - j, i + j)]
            for k in range(2):
                n = i + j + k
                D3[..., i, j, k] = d[(3 - n, n)]
    return d[(0, 0)], D1, D2, D3


def geometry_of(spec: ambient.AmbientMetricSpec, surf: GraphSurface) -> SurfaceGeometry:
    grid = surf.grid
    rho, D1, D2, D3 = _rho_derivatives(grid, surf.rho_coeffs)
    if np.min(rho) < spec.r1:
        raise ambient.DomainError(f"surface leaves the chart: min rho {np.min(rho):.6g} < r1={spec.r1}")
    shp = rho.shape
    g, dg, ddg = _sampler(spec, grid).fields(rho, order=2)
    ginv = np.linalg.inv(g)

    # embedding X = (rho, theta, phi): E[i, a] = d_i X^a, E2[k, i, a], E3[l, k, i, a]
    E = np.zeros(shp + (2, 3))
    E[..., :, 0] = D1
    E[..., 0, 1] = 1.0
    E[..., 1, 2] = 1.0
    E2 = np.zeros(shp + (2, 2, 3))
    E2[..., 0] = D2
    E3 = np.zeros(shp + (2, 2, 2, 3))
    E3[..., 0] = D3

    gam = np.einsum("...ab,...ia,...jb->...ij", g, E, E)
    # derivatives of g along the surface
    dkg = np.einsum("...cab,...kc->...kab", dg, E)
    dlkg = np.einsum("...dcab,...ld,...kc->...lkab", ddg, E, E) + np.einsum("...cab,...lkc->...lkab", dg, E2)
    dgam = (
        np.einsum("...kab,...ia,...jb->...kij", dkg, E, E)
        + np.einsum("...ab,...kia,...jb->...kij", g, E2, E)
        + np.einsum("...ab,...ia,...kjb->...kij", g, E, E2)
    )
    ddgam = (
        np.einsum("...lkab,...ia,...jb->...lkij", dlkg, E, E)
        + np.einsum("...kab,...lia,...jb->...lkij", dkg, E2, E)
        + np.einsum("...kab,...ia,...ljb->...lkij", dkg, E, E2)
        + np.einsum("...lab,...kia,...jb->...lkij", dkg, E2, E)
        + np.einsum("...lab,...ia,...kjb->...lkij", dkg, E, E2)
        + np.einsum("...ab,...lkia,...jb->...lkij", g, E3, E)
        + np.einsum("...ab,...kia,...ljb->...lkij", g, E2, E2)
        + np.einsum("...ab,...lia,...kjb->...lkij", g, E2, E2)
        + np.einsum("...ab,...ia,...lkjb->...lkij", g, E, E3)
    )
    gaminv = np.linalg.inv(gam)
    det = gam[..., 0, 0] * gam[..., 1, 1] - gam[..., 0, 1] ** 2
    if np.any(det <= 0):
        raise OrientationError("induced metric degenerate")
    area_density = np.sqrt(det) / grid.sin_theta
    igam = tensor.christoffel(gaminv, dgam)
    idgam = tensor.christoffel_derivative(gaminv, dgam, ddgam)
    K = 0.5 * tensor.scalar_curvature(gaminv, tensor.ricci(igam, idgam))

    # normal
    n = np.zeros(shp + (3,))
    n[..., 0] = 1.0
    n[..., 1:] = -D1
    # |n|^2 - 1 assembled so the leading 1 cancels exactly
    q = (ginv[..., 0, 0] - 1.0) + np.einsum("...ab,...a,...b->...", ginv[..., 1:, 1:], n[..., 1:], n[..., 1:])
    q = q + 2.0 * np.einsum("...a,...a->...", ginv[..., 0, 1:], n[..., 1:])
    nn = np.sqrt(1.0 + q)
    u = 1.0 / nn
    if np.any(u <= 0) or np.any(~np.isfinite(u)):
        raise OrientationError("graph orientation violated")
    one_minus_u = q / (nn * (1.0 + nn))
    nu = np.einsum("...ab,...b->...a", ginv, n) / nn[..., None]

    Gam = tensor.christoffel(ginv, dg)
    A = -(D2 + np.einsum("...a,...abc,...ib,...jc->...ij", n, Gam, E, E)) / nn[..., None, None]
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    H = np.einsum("...ij,...ij->...", gaminv, A)
    ringA = A - 0.5 * H[..., None, None] * gam
    ringA_sq = np.einsum("...ik,...jl,...ij,...kl->...", gaminv, gaminv, ringA, ringA)
    A_sq = ringA_sq + 0.5 * H**2

    ric, Rs = ambient.curvature_from_fields(g, dg, ddg)
    ric_nn = np.einsum("...ab,...a,...b->...", ric, nu, nu)
    K_eq = 0.5 * Rs - ric_nn + 0.25 * H**2 - 0.5 * ringA_sq

    rdot = np.einsum("...a,...ia->...i", g[..., 0, :], E)
    rt_sq = np.einsum("...ij,...i,...j->...", gaminv, rdot, rdot)
    area = float(grid.integrate(area_density))
    return SurfaceGeometry(
        spec=spec,
        surface=surf,
        induced_metric=gam,
        induced_inverse=gaminv,
        induced_christoffel=igam,
        area_density=area_density,
        normal=nu,
        A=A,
        H=H,
        ringA=ringA,
        ringA_sq=ringA_sq,
        A_sq=A_sq,
        gauss_K=K,
        gauss_K_equation=K_eq,
        ambient_scalar=Rs,
        ric_nu_nu=ric_nn,
        radial_tangent_sq=rt_sq,
        normal_radial=u,
        one_minus_normal_radial=one_minus_u,
        radial_dot_tangent=rdot,
        total_area=area,
    )


def surface_integrate(geom: SurfaceGeometry, field) -> float:
    return float(geom.grid.integrate(np.asarray(field) * geom.area_density))


def surface_laplacian(geom: SurfaceGeometry, field) -> np.ndarray:
    """Laplace-Beltrami of a band-limited node field (or batch of fields)."""
    grid = geom.grid
    c = grid.analysis(field)
    return laplacian_from_coeffs(geom, c)


def laplacian_from_coeffs(geom: SurfaceGeometry, c) -> np.ndarray:
    grid = geom.grid
    d = grid.derivatives(c, order=2)
    gi = geom.induced_inverse
    ig = geom.induced_christoffel
    # contracted Christoffel: gamma^{ij} Gamma^k_ij
    cc = np.einsum("...ij,...kij->...k", gi, ig)
    second = gi[..., 0, 0] * d[(2, 0)] + 2.0 * gi[..., 0, 1] * d[(1, 1)] + gi[..., 1, 1] * d[(0, 2)]
    first = cc[..., 0] * d[(1, 0)] + cc[..., 1] * d[(0, 1)]
    return second - first


def laplacian_matrix(geom: SurfaceGeometry) -> np.ndarray:
    """Dense map from harmonic coefficients to node values of the surface Laplacian."""
    grid = geom.grid
    gi = geom.induced_inverse.reshape(-1, 2, 2)
    cc = np.einsum("...ij,...kij->...k", geom.induced_inverse, geom.induced_christoffel).reshape(-1, 2)
    return (
        gi[:, 0, 0, None] * grid.node_matrix(2, 0)
        + 2.0 * gi[:, 0, 1, None] * grid.node_matrix(1, 1)
        + gi[:, 1, 1, None] * grid.node_matrix(0, 2)
        - cc[:, 0, None] * grid.node_matrix(1, 0)
        - cc[:, 1, None] * grid.node_matrix(0, 1)
    )
