"""Spectral kernel on the unit sphere.

Gauss-Legendre colatitudes times equispaced longitudes, real orthonormal
spherical harmonics, angular derivatives and quadrature.

Coefficient packing: degree ``l`` and order ``m`` (``-l <= m <= l``) live at
index ``l*l + l + m``.  Orders ``m > 0`` carry ``sqrt(2) P_l^m cos(m phi)``,
orders ``m < 0`` carry ``sqrt(2) P_l^|m| sin(|m| phi)``; no Condon-Shortley
phase, so ``Y_{1,1}``, ``Y_{1,-1}``, ``Y_{1,0}`` are positive multiples of
``x1``, ``x2``, ``x3``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


def n_coeffs(L: int) -> int:
    return (L + 1) ** 2


def lm_index(l: int, m: int) -> int:
    if abs(m) > l:
        raise ValueError(f"|m| must not exceed l (got l={l}, m={m})")
    return l * l + l + m


def degrees_orders(L: int) -> tuple[np.ndarray, np.ndarray]:
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
    return ls, ms


def _assoc_legendre(L: int, theta: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre functions, shape (L+1, L+1, npts) as [l, m]."""
    x = np.cos(theta)
    s = np.sin(theta)
    P = np.zeros((L + 1, L + 1) + theta.shape)
    P[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, L + 1):
        P[m, m] = math.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L):
        P[m + 1, m] = math.sqrt(2 * m + 3.0) * x * P[m, m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def legendre_tables(L: int, theta, nderiv: int = 3) -> np.ndarray:
    """Colatitude factors of the packed real harmonics and their theta-derivatives.

    Returns shape (nderiv+1, (L+1)**2, npts).  The sqrt(2) of m != 0 is included.
    Derivatives use the Legendre recurrence and ODE, so ``theta`` must avoid
    the poles when ``nderiv > 0``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    P = _assoc_legendre(L, theta)
    x = np.cos(theta)
    s = np.sin(theta)
    ls, ms = degrees_orders(L)
    out = np.zeros((nderiv + 1, len(ls)) + theta.shape)
    for k, (l, m) in enumerate(zip(ls, ms)):
        am = abs(m)
        scale = math.sqrt(2.0) if m != 0 else 1.0
        p = P[l, am]
        out[0, k] = scale * p
        if nderiv == 0:
            continue
        prev = P[l - 1, am] if l - 1 >= am else 0.0
        c = math.sqrt((2 * l + 1.0) / (2 * l - 1.0) * (l * l - am * am)) if l > am else 0.0
        d1 = (l * x * p - c * prev) / s
        out[1, k] = scale * d1
        if nderiv == 1:
            continue
        cot = x / s
        q = l * (l + 1.0) - am * am / s**2
        d2 = -cot * d1 - q * p
        out[2, k] = scale * d2
        if nderiv == 2:
            continue
        d3 = d1 / s**2 - cot * d2 - q * d1 - 2.0 * am * am * x / s**3 * p
        out[3, k] = scale * d3
    return out


def trig_tables(L: int, phi, nderiv: int = 3) -> np.ndarray:
    """Longitude factors cos(m phi) / sin(|m| phi) and their phi-derivatives."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    ls, ms = degrees_orders(L)
    am = np.abs(ms).astype(float)[:, None]
    base = np.where(ms[:, None] < 0, -np.pi / 2, 0.0)  # sin(a) = cos(a - pi/2)
    arg = am * phi.reshape(1, -1) + base
    out = np.empty((nderiv + 1, len(ls)) + phi.shape)
    for j in range(nderiv + 1):
        out[j] = (am**j * np.cos(arg + j * np.pi / 2)).reshape((len(ls),) + phi.shape)
    return out


def evaluate(coeffs, theta, phi, dtheta: int = 0, dphi: int = 0) -> np.ndarray:
    """Evaluate a coefficient vector at arbitrary paired points (theta, phi)."""
    coeffs = np.asarray(coeffs)
    L = int(round(math.sqrt(coeffs.shape[0]))) - 1
    if n_coeffs(L) != coeffs.shape[0]:
        raise ValueError("coefficient vector length is not a square")
    theta = np.asarray(theta, dtype=float)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
    P = legendre_tables(L, theta.ravel(), nderiv=dtheta)[dtheta]
    T = trig_tables(L, phi.ravel(), nderiv=dphi)[dphi]
    return np.einsum("k,kn,kn->n", coeffs, P, T).reshape(theta.shape)


def resize(coeffs, L: int) -> np.ndarray:
    """Truncate or zero-pad a coefficient vector to band limit L."""
    coeffs = np.asarray(coeffs)
    out = np.zeros(n_coeffs(L), dtype=coeffs.dtype)
    n = min(len(coeffs), len(out))
    out[:n] = coeffs[:n]
    return out


def to_triples(coeffs, tol: float = 0.0) -> list[dict]:
    L = int(round(math.sqrt(len(coeffs)))) - 1
    ls, ms = degrees_orders(L)
    return [
        {"l": int(l), "m": int(m), "value": float(v)}
        for l, m, v in zip(ls, ms, coeffs)
        if abs(v) > tol
    ]


def from_triples(triples, L: int | None = None) -> np.ndarray:
    triples = list(triples)
    if L is None:
        L = max((int(t["l"]) for t in triples), default=0)
    out = np.zeros(n_coeffs(L))
    for t in triples:
        out[lm_index(int(t["l"]), int(t["m"]))] += float(t["value"])
    return out


@dataclass(frozen=True, eq=False)
class GridS2:
    """Gauss-Legendre x equispaced grid with band limit ``L``.

    ``M >= L`` sets the node resolution (``M + 1`` colatitudes, ``2M + 2``
    longitudes); ``M > L`` gives dealiasing headroom for nonlinear products.
    """

    L: int
    M: int
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.theta), len(self.phi))

    @property
    def n_nodes(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def ncoef(self) -> int:
        return n_coeffs(self.L)

    @cached_property
    def degrees(self) -> np.ndarray:
        return degrees_orders(self.L)[0]

    @cached_property
    def orders(self) -> np.ndarray:
        return degrees_orders(self.L)[1]

    @cached_property
    def _P(self) -> np.ndarray:
        return legendre_tables(self.L, self.theta, nderiv=3)

    @cached_property
    def _T(self) -> np.ndarray:
        return trig_tables(self.L, self.phi, nderiv=3)

    @cached_property
    def theta_nodes(self) -> np.ndarray:
        return np.broadcast_to(self.theta[:, None], self.shape)

    @cached_property
    def phi_nodes(self) -> np.ndarray:
        return np.broadcast_to(self.phi[None, :], self.shape)

    @cached_property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.theta_nodes)

    @cached_property
    def xyz(self) -> np.ndarray:
        """Coordinate functions x1, x2, x3 at the nodes, shape (3, nlat, nlon)."""
        th, ph = self.theta_nodes, self.phi_nodes
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    def descriptor(self) -> dict:
        return {"L": self.L, "M": self.M, "nlat": self.shape[0], "nlon": self.shape[1]}

    def integrate(self, f) -> float:
        """Quadrature against the round area measure."""
        return np.sum(self.weights * f, axis=(-2, -1))

    def synthesis(self, coeffs, dtheta: int = 0, dphi: int = 0) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if coeffs.shape[0] != self.ncoef:
            raise ValueError(f"expected {self.ncoef} coefficients, got {coeffs.shape[0]}")
        P = self._P[dtheta]
        T = self._T[dphi]
        if coeffs.ndim == 1:
            return (P.T * coeffs) @ T
        return np.einsum("kb,kt,kp->btp", coeffs, P, T)

    def analysis(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        fw = f * self.weights
        if f.ndim == 2:
            F = fw @ self._T[0].T  # (nlat, k)
            return np.einsum("tk,kt->k", F, self._P[0])
        F = np.einsum("btp,kp->btk", fw, self._T[0])
        return np.einsum("btk,kt->kb", F, self._P[0])

    def node_matrix(self, dtheta: int = 0, dphi: int = 0) -> np.ndarray:
        """Dense (n_nodes, ncoef) synthesis matrix for a derivative order."""
        key = (dtheta, dphi)
        cache = self._matrices
        if key not in cache:
            P = self._P[dtheta]
            T = self._T[dphi]
            cache[key] = np.einsum("kt,kp->tpk", P, T).reshape(self.n_nodes, self.ncoef)
        return cache[key]

    @cached_property
    def _matrices(self) -> dict:
        return {}

    @cached_property
    def analysis_matrix(self) -> np.ndarray:
        return (self.node_matrix() * self.weights.reshape(-1, 1)).T

    def derivatives(self, coeffs, order: int = 2) -> dict:
        """Node values of all partial derivatives up to ``order`` keyed by (i, j)."""
        out = {}
        for n in range(order + 1):
            for i in range(n + 1):
                out[(i, n - i)] = self.synthesis(coeffs, i, n - i)
        return out

    def laplacian_coeffs(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        lam = -(self.degrees * (self.degrees + 1.0))
        return (lam * coeffs.T).T

    def angular_derivatives(self, f):
        """Return (d/dtheta, d/dphi, gradient, laplacian) of a band-limited node field.

        The gradient is returned in the orthonormal frame (e_theta, e_phi/sin).
        """
        c = self.analysis(f)
        ft = self.synthesis(c, 1, 0)
        fp = self.synthesis(c, 0, 1)
        grad = np.stack([ft, fp / self.sin_theta])
        lap = self.synthesis(self.laplacian_coeffs(c))
        return ft, fp, grad, lap


def build_grid(L: int, pad: bool = False) -> GridS2:
    """Build a grid with band limit ``L``; ``pad`` sizes the nodes for band 3L/2."""
    if L < 8:
        raise ValueError(f"band limit must be at least 8 (got {L})")
    M = int(math.ceil(1.5 * L)) if pad else L
    x, w = np.polynomial.legendre.leggauss(M + 1)
    order = np.argsort(-x)  # north to south
    theta = np.arccos(x[order])
    nlon = 2 * M + 2
    phi = 2.0 * np.pi * np.arange(nlon) / nlon
    weights = np.outer(w[order], np.full(nlon, 2.0 * np.pi / nlon))
    return GridS2(L=L, M=M, theta=theta, phi=phi, weights=weights)


def sh_analysis(grid: GridS2, field) -> np.ndarray:
    return grid.analysis(field)


def sh_synthesis(grid: GridS2, coeffs) -> np.ndarray:
    return grid.synthesis(coeffs)


def angular_derivatives(grid: GridS2, field):
    return grid.angular_derivatives(field)
