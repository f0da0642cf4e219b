"""Asymptotically hyperbolic metrics on the exterior chart [r1, inf) x S^2.

The metric is

    g = dr^2 + sinh^2(r) g0 + h / (3 sinh r) + Q,    h = (tau / 2) g0,

in coordinates (r, theta, phi), index order 0, 1, 2.  Every component is a
finite sum of separable terms ``R(r) * S(theta, phi) * T(theta)`` with a
closed-form radial factor ``R``, a spherical-harmonic angular factor ``S``
and a trigonometric factor ``T``, so all metric derivatives are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import s2grid, tensor

QUAD_DECAY = 4.0


class DomainError(ValueError):
    """Point outside the modelled exterior chart."""


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class MassAspect:
    """Real harmonic coefficients of tau = tr_{g0} h."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        L = int(round(math.sqrt(len(c)))) - 1
        if s2grid.n_coeffs(L) != len(c):
            c = s2grid.resize(c, int(math.ceil(math.sqrt(len(c)))) - 1)
        object.__setattr__(self, "coeffs", c)

    @property
    def L(self) -> int:
        return int(round(math.sqrt(len(self.coeffs)))) - 1

    @classmethod
    def constant(cls, value: float) -> "MassAspect":
        return cls(np.array([value * math.sqrt(4.0 * math.pi)]))

    @classmethod
    def from_function(cls, func, L: int, tol: float = 1e-15) -> "MassAspect":
        """Project ``func(x1, x2, x3)`` onto harmonics of degree <= L."""
        grid = s2grid.build_grid(max(L, 8) + 8)
        c = grid.analysis(func(*grid.xyz))
        c = s2grid.resize(c, L)
        c[np.abs(c) < tol * max(1.0, np.abs(c).max())] = 0.0
        return cls(c)

    @classmethod
    def from_triples(cls, triples) -> "MassAspect":
        return cls(s2grid.from_triples(triples))

    def to_triples(self) -> list[dict]:
        return s2grid.to_triples(self.coeffs)

    def __call__(self, theta, phi, dtheta: int = 0, dphi: int = 0):
        return s2grid.evaluate(self.coeffs, theta, phi, dtheta, dphi)

    def at_xyz(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        theta = np.arccos(np.clip(x[2], -1.0, 1.0))
        phi = np.arctan2(x[1], x[0])
        return self(theta, phi)

    def moments(self, grid: s2grid.GridS2) -> np.ndarray:
        """First moments of tau against x1, x2, x3."""
        return grid.integrate(grid.xyz * self(grid.theta_nodes, grid.phi_nodes))

    def is_centered(self, grid: s2grid.GridS2 | None = None, tol: float = 1e-12) -> bool:
        grid = grid or s2grid.build_grid(max(self.L, 8))
        return bool(np.all(np.abs(self.moments(grid)) <= tol * max(1.0, abs(self.mean() * 4 * math.pi))))

    def mean(self) -> float:
        return float(self.coeffs[0] / math.sqrt(4.0 * math.pi))

    def scaled(self, a: float, b: float = 0.0) -> "MassAspect":
        """The mass aspect a * tau + b."""
        c = a * self.coeffs
        c[0] += b * math.sqrt(4.0 * math.pi)
        return MassAspect(c)


@dataclass(frozen=True, eq=False)
class QTerm:
    """Remainder Q = amplitude * exp(-4r) * q(theta, phi) on chosen components.

    ``structure`` entries: ``"rr"`` puts ``q`` on dr^2, ``"tt"`` puts
    ``q sinh^2 r g0`` on the tangential block, ``"rt"`` puts
    ``q sinh r (dr dx3 + dx3 dr)``.  All have |Q|_g of order exp(-4r).
    """

    amplitude: float
    profile: np.ndarray
    structure: tuple[str, ...] = ("rr",)

    def __post_init__(self):
        object.__setattr__(self, "profile", np.asarray(self.profile, dtype=float))
        bad = set(self.structure) - {"rr", "tt", "rt"}
        if bad:
            raise ValueError(f"unknown Q structure {sorted(bad)}")
        object.__setattr__(self, "structure", tuple(self.structure))


@dataclass(frozen=True)
class HypothesisConstants:
    C1: float = 1.0
    C2: float = 10.0
    C3: float = 0.1
    C4: float = 1.0


@dataclass(frozen=True, eq=False)
class AmbientMetricSpec:
    mass_aspect: MassAspect
    q_term: QTerm | None = None
    t: float = 1.0
    r1: float = 1.0
    hypothesis: HypothesisConstants = field(default_factory=HypothesisConstants)

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"family parameter t must lie in [0, 1] (got {self.t})")

    @property
    def effective_mass_aspect(self) -> MassAspect:
        if self.t == 1.0:
            return self.mass_aspect
        return self.mass_aspect.scaled(self.t, 2.0 * (1.0 - self.t))

    @property
    def effective_q(self) -> QTerm | None:
        if self.q_term is None or self.t == 0.0:
            return None
        if self.t == 1.0:
            return self.q_term
        return replace(self.q_term, amplitude=self.t * self.q_term.amplitude)

    def sampler(self, theta, phi) -> "MetricSampler":
        return MetricSampler(self, theta, phi)

    def grid_sampler(self, grid: s2grid.GridS2) -> "MetricSampler":
        return MetricSampler(self, grid.theta_nodes, grid.phi_nodes)


def hyperbolic_spec(r1: float = 1.0) -> AmbientMetricSpec:
    """Pure hyperbolic space (tau = 0); deliberately fails the positivity condition on tau."""
    return AmbientMetricSpec(MassAspect(np.zeros(1)), r1=r1)


def family_metric(base: AmbientMetricSpec, t: float) -> AmbientMetricSpec:
    """Member g^t of the path from the symmetric endpoint (t=0) to ``base`` (t=1)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"family parameter t must lie in [0, 1] (got {t})")
    if t == 1.0:
        return base
    return replace(base, t=float(t))


# ---------------------------------------------------------------------------
# separable factors


class _ExpSum:
    """sum_k c_k exp(a_k r)."""

    def __init__(self, terms):
        self.terms = [(float(c), float(a)) for c, a in terms]

    def __call__(self, r, n=0):
        out = 0.0
        for c, a in self.terms:
            out = out + c * a**n * np.exp(a * r)
        return out * np.ones_like(r)


class _Csch:
    """scale / sinh(r)."""

    def __init__(self, scale):
        self.scale = scale

    def __call__(self, r, n=0):
        cs = 1.0 / np.sinh(r)
        ct = 1.0 / np.tanh(r)
        if n == 0:
            v = cs
        elif n == 1:
            v = -cs * ct
        elif n == 2:
            v = cs * (ct**2 + cs**2)
        elif n == 3:
            v = -cs * ct**3 - 5.0 * cs**3 * ct
        else:
            raise ValueError("radial derivative order above 3")
        return self.scale * v


_ONE = _ExpSum([(1.0, 0.0)])
_SINH2 = _ExpSum([(0.25, 2.0), (-0.5, 0.0), (0.25, -2.0)])


def _trig(kind: str, theta, n: int):
    s, c = np.sin(theta), np.cos(theta)
    if kind == "one":
        return np.ones_like(theta) if n == 0 else np.zeros_like(theta)
    if kind == "sin2":
        return [s * s, 2 * s * c, 2 * np.cos(2 * theta), -4 * np.sin(2 * theta)][n]
    if kind == "msin":
        return [-s, -c, s, c][n]
    raise ValueError(kind)


def _terms(spec: AmbientMetricSpec):
    """(a, b, radial, angular coeffs or None, trig kind) for the lower triangle."""
    tau = spec.effective_mass_aspect
    out = [
        (0, 0, _ONE, None, "one"),
        (1, 1, _SINH2, None, "one"),
        (2, 2, _SINH2, None, "sin2"),
    ]
    if np.any(tau.coeffs != 0):
        csch = _Csch(1.0 / 6.0)
        out += [(1, 1, csch, tau.coeffs, "one"), (2, 2, csch, tau.coeffs, "sin2")]
    q = spec.effective_q
    if q is not None and q.amplitude != 0.0:
        A = q.amplitude
        if "rr" in q.structure:
            out.append((0, 0, _ExpSum([(A, -QUAD_DECAY)]), q.profile, "one"))
        if "tt" in q.structure:
            rad = _ExpSum([(0.25 * A, -2.0), (-0.5 * A, -4.0), (0.25 * A, -6.0)])
            out += [(1, 1, rad, q.profile, "one"), (2, 2, rad, q.profile, "sin2")]
        if "rt" in q.structure:
            out.append((1, 0, _ExpSum([(0.5 * A, -3.0), (-0.5 * A, -5.0)]), q.profile, "msin"))
    return out


class MetricSampler:
    """Metric and exact derivatives at fixed angular points, any radius."""

    def __init__(self, spec: AmbientMetricSpec, theta, phi, order: int = 2):
        theta = np.asarray(theta, dtype=float)
        phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape)
        if np.any(np.sin(theta) <= 1e-300):
            raise DomainError("poles are coordinate singularities of (theta, phi); sample off-pole")
        self.spec = spec
        self.theta = theta
        self.phi = phi
        self.order = order
        self._terms = []
        cache = {}
        for a, b, rad, coeffs, kind in _terms(spec):
            key = id(coeffs)
            if coeffs is None:
                S = None
            elif key in cache:
                S = cache[key]
            else:
                S = {}
                for n in range(order + 1):
                    for i in range(n + 1):
                        S[(i, n - i)] = s2grid.evaluate(coeffs, theta, phi, i, n - i)
                cache[key] = S
            T = [_trig(kind, theta, n) for n in range(order + 1)]
            self._terms.append((a, b, rad, S, T))

    def _angular(self, S, T, i, j):
        """d_theta^i d_phi^j of S * T."""
        if S is None:
            return T[i] if j == 0 else np.zeros_like(self.theta)
        total = 0.0
        for k in range(i + 1):
            total = total + math.comb(i, k) * S[(i - k, j)] * T[k]
        return total

    def fields(self, r, order: int | None = None):
        """Return (g, dg, ddg); ``ddg`` is None when ``order < 2``."""
        order = self.order if order is None else order
        r = np.broadcast_to(np.asarray(r, dtype=float), self.theta.shape)
        if np.any(r < self.spec.r1):
            raise DomainError(f"r below r1={self.spec.r1}: interior region not modeled")
        shp = self.theta.shape
        g = np.zeros(shp + (3, 3))
        dg = np.zeros(shp + (3, 3, 3))
        ddg = np.zeros(shp + (3, 3, 3, 3)) if order >= 2 else None
        for a, b, rad, S, T in self._terms:
            R = [rad(r, n) for n in range(order + 1)]
            ST = {(i, j): self._angular(S, T, i, j) for i in range(order + 1) for j in range(order + 1 - i)}
            # derivative multi-index over (r, theta, phi)
            vals = {(0, 0, 0): R[0] * ST[(0, 0)]}
            if order >= 1:
                vals[(1, 0, 0)] = R[1] * ST[(0, 0)]
                vals[(0, 1, 0)] = R[0] * ST[(1, 0)]
                vals[(0, 0, 1)] = R[0] * ST[(0, 1)]
            if order >= 2:
                vals[(2, 0, 0)] = R[2] * ST[(0, 0)]
                vals[(1, 1, 0)] = R[1] * ST[(1, 0)]
                vals[(1, 0, 1)] = R[1] * ST[(0, 1)]
                vals[(0, 2, 0)] = R[0] * ST[(2, 0)]
                vals[(0, 1, 1)] = R[0] * ST[(1, 1)]
                vals[(0, 0, 2)] = R[0] * ST[(0, 2)]
            pairs = [(a, b)] if a == b else [(a, b), (b, a)]
            for p, q in pairs:
                g[..., p, q] += vals[(0, 0, 0)]
                for l in range(3 if order >= 1 else 0):
                    e = [0, 0, 0]
                    e[l] += 1
                    dg[..., l, p, q] += vals[tuple(e)]
                if order >= 2:
                    for m in range(3):
                        for l in range(3):
                            e = [0, 0, 0]
                            e[l] += 1
                            e[m] += 1
                            ddg[..., m, l, p, q] += vals[tuple(e)]
        return g, dg, ddg


# ---------------------------------------------------------------------------
# public operations


@dataclass(frozen=True)
class MetricAt:
    g: np.ndarray
    g_inv: np.ndarray
    dg_dr: np.ndarray
    dg_dtheta: np.ndarray  # [..., 2, 3, 3]: d/dtheta, d/dphi


def metric_at(spec: AmbientMetricSpec, r, theta, phi=0.0) -> MetricAt:
    s = spec.sampler(theta, phi)
    g, dg, _ = s.fields(r, order=1)
    return MetricAt(g=g, g_inv=np.linalg.inv(g), dg_dr=dg[..., 0, :, :], dg_dtheta=dg[..., 1:, :, :])


def christoffel_at(spec: AmbientMetricSpec, r, theta, phi=0.0) -> np.ndarray:
    """Gamma[..., k, i, j] in coordinates (r, theta, phi)."""
    g, dg, _ = spec.sampler(theta, phi).fields(r, order=1)
    return tensor.christoffel(np.linalg.inv(g), dg)


def curvature_from_fields(g, dg, ddg):
    ginv = np.linalg.inv(g)
    gam = tensor.christoffel(ginv, dg)
    dgam = tensor.christoffel_derivative(ginv, dg, ddg)
    ric = tensor.ricci(gam, dgam)
    return ric, tensor.scalar_curvature(ginv, ric)


def curvature_at(spec: AmbientMetricSpec, r, theta, phi=0.0):
    """(Ricci [..., 3, 3], scalar curvature [...])."""
    g, dg, ddg = spec.sampler(theta, phi).fields(r, order=2)
    return curvature_from_fields(g, dg, ddg)


def coordinate_sphere_H(spec: AmbientMetricSpec, s: float, grid: s2grid.GridS2) -> np.ndarray:
    """Mean curvature of {r = s} at the grid nodes, outward normal, from Christoffel symbols."""
    g, dg, _ = spec.grid_sampler(grid).fields(s, order=1)
    ginv = np.linalg.inv(g)
    gam = tensor.christoffel(ginv, dg)
    norm = np.sqrt(ginv[..., 0, 0])  # |dr|
    tang = np.linalg.inv(g[..., 1:, 1:])
    # A_ij = -nu_a Gamma^a_ij with nu_a = dr / |dr|
    A = -gam[..., 0, 1:, 1:] / norm[..., None, None]
    return np.einsum("...ij,...ij->...", tang, A)


def H_expansion_two_term(spec: AmbientMetricSpec, s: float, grid: s2grid.GridS2) -> np.ndarray:
    """Two-term expansion 2 coth s - tau / (2 sinh^3 s) at the grid nodes."""
    tau = spec.effective_mass_aspect(grid.theta_nodes, grid.phi_nodes)
    return 2.0 / np.tanh(s) - tau / (2.0 * np.sinh(s) ** 3)


# ---------------------------------------------------------------------------
# hypothesis monitors


def q_bound_envelope(spec: AmbientMetricSpec, radii, grid: s2grid.GridS2) -> float:
    """sup over samples of exp(4r) (|Q| + |DQ| + |D^2 Q|), norms and D taken in hyperbolic space.

    Covariant derivatives use the exact hyperbolic Christoffel symbols, so the
    monitor is free of the coordinate singularity at the poles.  The third
    derivative is not included.
    """
    q = spec.effective_q
    if q is None:
        return 0.0
    th = grid.theta_nodes.ravel()
    ph = grid.phi_nodes.ravel()
    full = MetricSampler(spec, th, ph, order=2)
    base = MetricSampler(replace(spec, q_term=None), th, ph, order=2)
    hyp = MetricSampler(replace(spec, q_term=None, mass_aspect=MassAspect(np.zeros(1)), t=1.0), th, ph, order=2)
    worst = 0.0
    for r in radii:
        g1, dg1, ddg1 = full.fields(r)
        g0, dg0, ddg0 = base.fields(r)
        b, db, ddb = hyp.fields(r)
        Q, dQ, ddQ = g1 - g0, dg1 - dg0, ddg1 - ddg0
        binv = np.linalg.inv(b)
        G = tensor.christoffel(binv, db)
        dG = tensor.christoffel_derivative(binv, db, ddb)
        DQ = dQ - np.einsum("...cla,...cb->...lab", G, Q) - np.einsum("...clb,...ac->...lab", G, Q)
        dDQ = (
            ddQ
            - np.einsum("...mcla,...cb->...mlab", dG, Q)
            - np.einsum("...cla,...mcb->...mlab", G, dQ)
            - np.einsum("...mclb,...ac->...mlab", dG, Q)
            - np.einsum("...clb,...mac->...mlab", G, dQ)
        )
        DDQ = (
            dDQ
            - np.einsum("...cml,...cab->...mlab", G, DQ)
            - np.einsum("...cma,...lcb->...mlab", G, DQ)
            - np.einsum("...cmb,...lac->...mlab", G, DQ)
        )
        lam = np.sqrt(np.diagonal(b, axis1=-2, axis2=-1))  # b is diagonal
        inv = 1.0 / lam
        n0 = np.sqrt(np.einsum("...ab,...a,...b->...", Q**2, inv**2, inv**2))
        n1 = np.sqrt(np.einsum("...lab,...l,...a,...b->...", DQ**2, inv**2, inv**2, inv**2))
        n2 = np.sqrt(np.einsum("...mlab,...m,...l,...a,...b->...", DDQ**2, inv**2, inv**2, inv**2, inv**2))
        worst = max(worst, float(np.max((n0 + n1 + n2) * np.exp(QUAD_DECAY * r))))
    return worst


def c3_norm(tau: MassAspect, grid: s2grid.GridS2) -> float:
    """sup over nodes of |d^k (tau/2)| summed over orders k <= 3 (unit g0 frame)."""
    th, ph = grid.theta_nodes, grid.phi_nodes
    s = np.sin(th)
    total = 0.0
    for n in range(4):
        worst = 0.0
        for i in range(n + 1):
            j = n - i
            worst = max(worst, float(np.max(np.abs(tau(th, ph, i, j) / s**j))))
        total += 0.5 * worst
    return total


def check_hypothesis(spec: AmbientMetricSpec, grid: s2grid.GridS2, radii=None) -> dict:
    """Evaluate the decay, regularity and positivity monitors against the stored constants."""
    tau = spec.effective_mass_aspect
    H = spec.hypothesis
    radii = list(radii) if radii is not None else [spec.r1, spec.r1 + 2.0, spec.r1 + 5.0]
    tau_min = float(np.min(tau(grid.theta_nodes, grid.phi_nodes)))
    c3 = c3_norm(tau, grid)
    qenv = q_bound_envelope(spec, radii, grid)
    out = {
        "tau_min": tau_min,
        "C3_ok": tau_min >= H.C3,
        "h_C3_norm": c3,
        "C2_ok": c3 <= H.C2,
        "q_envelope": qenv,
        "C1_ok": qenv <= H.C1,
        "centered": tau.is_centered(grid),
    }
    out["ok"] = bool(out["C1_ok"] and out["C2_ok"] and out["C3_ok"])
    return out
