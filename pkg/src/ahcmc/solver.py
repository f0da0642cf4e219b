"""Newton solver for constant mean curvature graphs, Jacobi operators, continuation and foliation sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from . import ambient, s2grid
from .surface import GraphSurface, SurfaceGeometry, geometry_of, laplacian_from_coeffs, laplacian_matrix


class SolverError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(SolverError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class SingularJacobianError(SolverError):
    pass


class FoliationError(SolverError):
    pass


class ContinuationError(SolverError):
    def __init__(self, message, accepted=None):
        super().__init__(message)
        self.accepted = list(accepted or [])


@dataclass(frozen=True, eq=False)
class CmcProblem:
    spec: ambient.AmbientMetricSpec
    l: float
    grid: s2grid.GridS2
    tol: float = 1e-12
    max_iter: int = 40

    def __post_init__(self):
        if not self.l > 2.0:
            raise ValueError(f"l must exceed 2 (got {self.l})")
        if not 1e-12 <= self.tol <= 1e-6:
            raise ValueError(f"tol must lie in [1e-12, 1e-6] (got {self.tol})")


@dataclass(frozen=True, eq=False)
class JacobiMatrix:
    """Galerkin form of P on harmonic coefficients.

    ``stiffness[k, l] = int <grad Y_k, grad Y_l> - V Y_k Y_l dmu`` with
    ``V = |A|^2 + Rc(nu, nu)`` and ``mass[k, l] = int Y_k Y_l dmu``.  The
    normalized operator L has the same eigenvectors and eigenvalues scaled by
    ``area / 4 pi``.  ``strong`` maps coefficients to coefficients of P f.
    """

    stiffness: np.ndarray
    mass: np.ndarray
    strong: np.ndarray
    area: float
    potential: np.ndarray
    constraint: np.ndarray  # int Y_k dmu

    @property
    def scale(self) -> float:
        return self.area / (4.0 * math.pi)

    @property
    def normalized_stiffness(self) -> np.ndarray:
        return self.scale * self.stiffness

    def asymmetry(self) -> float:
        s = np.abs(self.stiffness - self.stiffness.T).max() / max(np.abs(self.stiffness).max(), 1e-300)
        m = np.abs(self.mass - self.mass.T).max() / np.abs(self.mass).max()
        return float(max(s, m))


@dataclass(eq=False)
class FoliationLeaf:
    l: float
    surface: GraphSurface
    geometry: SurfaceGeometry
    newton_history: list = field(default_factory=list)
    lapse: np.ndarray | None = None
    lapse_mean: float | None = None
    lapse_fd: np.ndarray | None = None
    stability_eigenvalue: float | None = None
    normalized_eigenvalue: float | None = None
    quadratic_ratio: float | None = None
    t: float = 1.0

    @property
    def r_hat(self) -> float:
        return self.geometry.r_hat

    @property
    def spec(self) -> ambient.AmbientMetricSpec:
        return self.geometry.spec


# ---------------------------------------------------------------------------
# residual and linearization


def cmc_residual(spec: ambient.AmbientMetricSpec, surf: GraphSurface, l: float) -> np.ndarray:
    geom = geometry_of(spec, surf)
    return surf.grid.analysis(geom.H - l)


def _grad_coeffs(grid, c):
    return grid.synthesis(c, 1, 0), grid.synthesis(c, 0, 1)


def shape_derivative_matrix(geom: SurfaceGeometry) -> np.ndarray:
    """Coefficient Jacobian of H under graph variations rho -> rho + delta.

    A radial variation ``delta d_r`` has normal speed ``u delta`` and
    tangential part ``delta d_r^T``, so
    ``dH = P(u delta) + delta <grad H, d_r^T>``.
    """
    grid = geom.grid
    Y = grid.node_matrix()
    Yt, Yp = grid.node_matrix(1, 0), grid.node_matrix(0, 1)
    gi = geom.induced_inverse.reshape(-1, 2, 2)
    u = geom.normal_radial
    cu = grid.analysis(u)
    ut, up = _grad_coeffs(grid, cu)
    lap_u = laplacian_from_coeffs(geom, cu).ravel()
    ut, up, uf = ut.ravel(), up.ravel(), u.ravel()
    cH = grid.analysis(geom.H)
    Ht, Hp = _grad_coeffs(grid, cH)
    rd = geom.radial_dot_tangent.reshape(-1, 2)
    transport = gi[:, 0, 0] * Ht.ravel() * rd[:, 0] + gi[:, 0, 1] * (Ht.ravel() * rd[:, 1] + Hp.ravel() * rd[:, 0])
    transport = transport + gi[:, 1, 1] * Hp.ravel() * rd[:, 1]
    gu_t = gi[:, 0, 0] * ut + gi[:, 0, 1] * up
    gu_p = gi[:, 0, 1] * ut + gi[:, 1, 1] * up
    LY = laplacian_matrix(geom)
    V = geom.A_sq.ravel() + geom.ric_nu_nu.ravel()
    lap_uY = uf[:, None] * LY + lap_u[:, None] * Y + 2.0 * (gu_t[:, None] * Yt + gu_p[:, None] * Yp)
    dH = -lap_uY - (V * uf)[:, None] * Y + transport[:, None] * Y
    return grid.analysis_matrix @ dH


def jacobi_operator(spec: ambient.AmbientMetricSpec, surf: GraphSurface, geom: SurfaceGeometry | None = None) -> JacobiMatrix:
    geom = geom or geometry_of(spec, surf)
    grid = geom.grid
    Y = grid.node_matrix()
    Yt, Yp = grid.node_matrix(1, 0), grid.node_matrix(0, 1)
    w = (grid.weights * geom.area_density).ravel()
    gi = geom.induced_inverse.reshape(-1, 2, 2)
    V = (geom.A_sq + geom.ric_nu_nu).ravel()
    mass = Y.T @ (w[:, None] * Y)
    grad = (
        Yt.T @ ((w * gi[:, 0, 0])[:, None] * Yt)
        + Yt.T @ ((w * gi[:, 0, 1])[:, None] * Yp)
        + Yp.T @ ((w * gi[:, 0, 1])[:, None] * Yt)
        + Yp.T @ ((w * gi[:, 1, 1])[:, None] * Yp)
    )
    stiff = grad - Y.T @ ((w * V)[:, None] * Y)
    stiff = 0.5 * (stiff + stiff.T)
    mass = 0.5 * (mass + mass.T)
    strong = grid.analysis_matrix @ (-laplacian_matrix(geom) - V[:, None] * Y)
    return JacobiMatrix(
        stiffness=stiff,
        mass=mass,
        strong=strong,
        area=geom.total_area,
        potential=V.reshape(grid.shape),
        constraint=Y.T @ w,
    )


def _mean_zero_basis(jm: JacobiMatrix) -> np.ndarray:
    return scipy.linalg.null_space(jm.constraint[None, :] / np.linalg.norm(jm.constraint))


def stability_spectrum(jm: JacobiMatrix, count: int = 1, sym_tol: float = 1e-8):
    """Lowest mean-zero eigenvalues of P and of the normalized L.

    With ``count > 1`` arrays of the lowest ``count`` eigenvalues are returned.
    """
    if jm.asymmetry() > sym_tol:
        raise ValueError(f"Jacobi matrix not symmetric (defect {jm.asymmetry():.3g})")
    Z = _mean_zero_basis(jm)
    S = Z.T @ jm.stiffness @ Z
    M = Z.T @ jm.mass @ Z
    vals = scipy.linalg.eigh(0.5 * (S + S.T), 0.5 * (M + M.T), eigvals_only=True, subset_by_index=[0, count - 1])
    if count == 1:
        return float(vals[0]), float(jm.scale * vals[0])
    return vals, jm.scale * vals


def full_spectrum(jm: JacobiMatrix) -> np.ndarray:
    """All Galerkin eigenvalues of P (no mean-zero restriction)."""
    return scipy.linalg.eigh(jm.stiffness, jm.mass, eigvals_only=True)


def solve_jacobi(jm: JacobiMatrix, rhs_const: float = 1.0) -> np.ndarray:
    """Coefficients of phi with P phi = rhs_const."""
    return np.linalg.solve(jm.stiffness, rhs_const * jm.constraint)


# ---------------------------------------------------------------------------
# Newton


def round_radius(spec: ambient.AmbientMetricSpec, l: float, grid: s2grid.GridS2) -> float:
    """Radius of the coordinate sphere with mean mean curvature ``l``."""
    if not l > 2.0:
        raise ValueError(f"l must exceed 2 (got {l})")

    def g(s):
        return float(np.mean(ambient.coordinate_sphere_H(spec, s, grid))) - l

    guess = math.atanh(2.0 / l)
    hi = max(guess + 2.0, spec.r1 + 1.0)
    while g(hi) > 0:
        hi += 2.0
        if hi > 40:
            raise SolverError("no coordinate sphere with the requested mean curvature")
    # outermost root: walk inward until H exceeds l
    lo = hi
    while g(lo) <= 0:
        hi = lo
        lo -= 0.25
        if lo < spec.r1:
            raise SolverError(f"mean curvature {l} not reached outside r1={spec.r1}")
    return float(scipy.optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))


def cmc_solve(
    problem: CmcProblem,
    initial_guess: GraphSurface | None = None,
    polish: int = 3,
    cond_limit: float = 1e14,
) -> FoliationLeaf:
    spec, grid, l = problem.spec, problem.grid, problem.l
    surf = initial_guess if initial_guess is not None else GraphSurface.round(grid, round_radius(spec, l, grid))
    if surf.grid is not grid:
        surf = GraphSurface(grid, s2grid.resize(surf.rho_coeffs, grid.L))
    history = []
    geom = geometry_of(spec, surf)
    res = grid.analysis(geom.H - l)
    rn = float(np.abs(res).max())
    history.append(rn)
    extra = 0
    for _ in range(problem.max_iter):
        if rn <= problem.tol:
            if extra >= polish:
                break
            extra += 1
        J = shape_derivative_matrix(geom)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > cond_limit:
            if rn <= problem.tol:
                break  # converged; the kernel only blocks polishing
            raise SingularJacobianError(f"cmc_solve: singular Jacobian (condition {cond:.3g})")
        step = np.linalg.solve(J, -res)
        alpha = 1.0
        while True:
            trial = surf.with_coeffs(surf.rho_coeffs + alpha * step)
            try:
                tg = geometry_of(spec, trial)
                tres = grid.analysis(tg.H - l)
                tn = float(np.abs(tres).max())
            except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                tn = math.inf
            if tn < (1.0 - 1e-4 * alpha) * rn or (rn <= problem.tol and tn <= rn * 1.0000001):
                break
            alpha *= 0.5
            if alpha < 1.0 / 256:
                tn = math.inf
                break
        if not math.isfinite(tn):
            if rn <= problem.tol:
                break  # polishing stalled at round-off
            raise ConvergenceError(f"cmc_solve: line search failed at residual {rn:.3g}", history)
        surf, geom, res, rn = trial, tg, tres, tn
        history.append(rn)
    if rn > problem.tol:
        raise ConvergenceError(f"cmc_solve: max_iter {problem.max_iter} exceeded (residual {rn:.3g})", history)
    leaf = FoliationLeaf(l=l, surface=surf, geometry=geom, newton_history=history, t=spec.t)
    leaf.quadratic_ratio = quadratic_ratio(history)
    return leaf


def quadratic_ratio(history, floor: float = 1e-13) -> float:
    """max r_{k+1} / r_k^2 over steps whose input residual is above ``floor``."""
    ratios = [b / a**2 for a, b in zip(history[:-1], history[1:]) if a > floor and b > floor]
    return float(max(ratios)) if ratios else 0.0


def uniqueness_probe(problem: CmcProblem, guesses) -> tuple[list, float]:
    leaves = [cmc_solve(problem, g) for g in guesses]
    ref = leaves[0].surface.rho
    spread = max(float(np.abs(lf.surface.rho - ref).max()) for lf in leaves)
    return leaves, spread


def attach_stability(leaf: FoliationLeaf) -> FoliationLeaf:
    jm = jacobi_operator(leaf.spec, leaf.surface, leaf.geometry)
    leaf.stability_eigenvalue, leaf.normalized_eigenvalue = stability_spectrum(jm)
    return leaf


def oscillation_ok(leaf: FoliationLeaf, C4: float | None = None) -> bool:
    C4 = leaf.spec.hypothesis.C4 if C4 is None else C4
    return leaf.surface.outer_radius - leaf.surface.inner_radius <= C4


# ---------------------------------------------------------------------------
# continuation


def continuation_in_t(
    base: ambient.AmbientMetricSpec,
    l: float,
    grid: s2grid.GridS2,
    t_steps: int = 10,
    tol: float = 1e-12,
    max_iter: int = 40,
    min_dt: float = 1e-4,
) -> list[FoliationLeaf]:
    """March the CMC leaf with H = l from the symmetric endpoint t=0 to t=1."""
    spec0 = ambient.family_metric(base, 0.0)
    r0 = round_radius(spec0, l, grid)
    surf = GraphSurface.round(grid, r0)
    leaf = cmc_solve(CmcProblem(spec0, l, grid, tol, max_iter), surf)
    _accept(leaf)
    accepted = [leaf]
    t = 0.0
    dt = 1.0 / t_steps
    targets = [min(1.0, (k + 1) / t_steps) for k in range(t_steps)]
    k = 0
    while t < 1.0:
        t_next = min(targets[k], t + dt) if dt < 1.0 / t_steps else targets[k]
        spec_t = ambient.family_metric(base, t_next)
        try:
            leaf = cmc_solve(CmcProblem(spec_t, l, grid, tol, max_iter), accepted[-1].surface)
            _accept(leaf)
        except SolverError as exc:
            dt = 0.5 * (t_next - t)
            if dt < min_dt:
                raise ContinuationError(f"continuation_in_t: step underflow at t={t:.6g} ({exc})", accepted) from exc
            continue
        leaf.t = t_next
        accepted.append(leaf)
        t = t_next
        if t >= targets[k] - 1e-15:
            k = min(k + 1, len(targets) - 1)
            dt = 1.0 / t_steps
    return accepted


def _accept(leaf: FoliationLeaf, eig_floor: float = -1e-8):
    attach_stability(leaf)
    if leaf.stability_eigenvalue < eig_floor:
        raise SolverError(f"unstable leaf (lowest mean-zero eigenvalue {leaf.stability_eigenvalue:.3g})")
    if not oscillation_ok(leaf):
        raise SolverError("leaf violates the oscillation bound osc(rho) <= C4")


# ---------------------------------------------------------------------------
# foliation


def lapse_from_jacobi(leaf: FoliationLeaf) -> np.ndarray:
    """Solve P phi = dH/dl = 1 on the leaf."""
    jm = jacobi_operator(leaf.spec, leaf.surface, leaf.geometry)
    return leaf.surface.grid.synthesis(solve_jacobi(jm, 1.0))


def lapse(spec, leaf: FoliationLeaf, dl: float | None = None, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Lapse by (a) central difference of neighbouring leaves and (b) the Jacobi equation."""
    grid = leaf.surface.grid
    dl = dl if dl is not None else 1e-3 * (leaf.l - 2.0)
    plus = cmc_solve(CmcProblem(spec, leaf.l + dl, grid, tol), leaf.surface)
    minus = cmc_solve(CmcProblem(spec, leaf.l - dl, grid, tol), leaf.surface)
    drho = (plus.surface.rho - minus.surface.rho) / (2.0 * dl)
    fd = drho * leaf.geometry.normal_radial
    return fd, lapse_from_jacobi(leaf)


def normalized_mean(geom: SurfaceGeometry, field) -> float:
    """Average with respect to the normalized metric (same as the dmu average)."""
    return geom.integrate(field) / geom.total_area


def lapse_identity_terms(leaf: FoliationLeaf, phi: np.ndarray) -> dict:
    geom = leaf.geometry
    grid = geom.grid
    tau = leaf.spec.effective_mass_aspect(grid.theta_nodes, grid.phi_nodes)
    phibar = normalized_mean(geom, phi)
    avg = grid.integrate(3.0 * tau / (2.0 * math.sinh(geom.r_hat))) / (4.0 * math.pi)
    lhs = geom.total_area / (4.0 * math.pi)
    rhs = -2.0 * phibar + phibar * avg
    return {"lhs": lhs, "rhs": rhs, "phibar": phibar, "residual": abs(lhs - rhs), "relative": abs(lhs - rhs) / abs(phibar)}


def foliation_sweep(
    spec: ambient.AmbientMetricSpec,
    l_values,
    grid: s2grid.GridS2,
    tol: float = 1e-12,
    max_iter: int = 40,
    lapse_fd: bool = True,
) -> list[FoliationLeaf]:
    """Leaves for descending ``l_values`` with lapses and nesting checks."""
    l_values = sorted((float(v) for v in l_values), reverse=True)
    leaves = []
    prev = None
    for l in l_values:
        guess = None
        if prev is not None:
            # shift by the round-radius difference
            shift = round_radius(spec, l, grid) - round_radius(spec, prev.l, grid)
            c = prev.surface.rho_coeffs.copy()
            c[0] += shift * math.sqrt(4.0 * math.pi)
            guess = GraphSurface(grid, c)
        leaf = cmc_solve(CmcProblem(spec, l, grid, tol, max_iter), guess)
        attach_stability(leaf)
        phi_b = lapse_from_jacobi(leaf)
        if lapse_fd:
            fd, _ = lapse(spec, leaf, tol=tol)
            leaf.lapse_fd = fd
        leaf.lapse = phi_b
        leaf.lapse_mean = normalized_mean(leaf.geometry, phi_b)
        if np.min(phi_b) * np.max(phi_b) <= 0:
            raise FoliationError(f"foliation property violated: lapse changes sign at l={l}")
        leaves.append(leaf)
        prev = leaf
    for a, b in zip(leaves[:-1], leaves[1:]):
        if not b.surface.inner_radius > a.surface.outer_radius:
            raise FoliationError(f"foliation property violated: leaves at l={a.l} and l={b.l} intersect")
    return leaves


def lapse_ratio(phi: np.ndarray) -> float:
    a = np.abs(phi)
    return float(a.min() / a.max())
