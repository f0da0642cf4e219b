"""Acceptance criteria 1-14, each at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""
import filecmp
import math

import numpy as np
import pytest
import yaml

from ahcmc import ambient, cli, conformal as cf, s2grid, solver as so, surface as sf, verify as vf
from conftest import record_criterion

R_HAT = (4.0, 5.0, 6.0)
INNER = (2.5, 3.0, 3.5)


def fit_line(e):
    if e.fitted_exponent is None:
        return f"{e.name}: degenerate (all values <= floor)" if e.degenerate else f"{e.name}: max {max(e.values):.3g}"
    return f"{e.name}: {e.fitted_exponent:.2f} (>= {e.threshold})"


def check(number, ok, detail):
    record_criterion(number, ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def solve_near(spec, r, grid):
    l = cli.l_for_radius(spec, r, grid)
    return so.cmc_solve(so.CmcProblem(spec, l, grid), sf.GraphSurface.round(grid, r))


@pytest.fixture(scope="module")
def specs(tau_a, tau_c):
    boosted = cf.transform_mass_aspect(tau_a, cf.MobiusBoost.from_vector([0.2, 0.1, 0.25]), L=24)
    recentered = cf.center_mass_aspect(boosted, L=24).mass_aspect
    return {
        "tau_two": ambient.AmbientMetricSpec(ambient.MassAspect.constant(2.0)),
        "tau_A": ambient.AmbientMetricSpec(tau_a),
        "tau_A_recentered": ambient.AmbientMetricSpec(recentered),
        # centered and without parity symmetry, so its drift is not zero by symmetry
        "tau_C": ambient.AmbientMetricSpec(tau_c),
    }


@pytest.fixture(scope="module")
def reports(specs, grid24):
    out = {}
    for label, spec in specs.items():
        leaves = [solve_near(spec, r, grid24) for r in R_HAT]
        inner = [solve_near(spec, r, grid24) for r in INNER]
        out[label] = (vf.build_report(label, spec, leaves, grid24, inner_leaves=inner), leaves)
    return out


def entries(reports, name, labels=None):
    labels = labels or list(reports)
    return [(lab, reports[lab][0].entries[name]) for lab in labels]


def summarize(number, items):
    ok = all(e.passed for _, e in items)
    detail = "; ".join(f"{lab} {fit_line(e)}" for lab, e in items)
    check(number, ok, detail)


# ---------------------------------------------------------------------------


def test_criterion_01_exactness_floor(grid24):
    hyp = ambient.hyperbolic_spec()
    worst = {"w": 0.0, "H": 0.0, "GB": 0.0, "ringA": 0.0}
    for r in (3.0, 5.0):
        leaf = so.cmc_solve(so.CmcProblem(hyp, 2 / math.tanh(r), grid24))
        G = leaf.geometry
        worst["w"] = max(worst["w"], float(np.abs(G.f).max()))
        worst["H"] = max(worst["H"], float(np.abs(G.H - 2 / math.tanh(G.r_hat)).max()))
        worst["GB"] = max(worst["GB"], abs(G.integrate(G.gauss_K) - 4 * math.pi))
        worst["ringA"] = max(worst["ringA"], float(np.sqrt(np.abs(G.ringA_sq)).max()))
    ok = worst["w"] <= 1e-10 and worst["H"] <= 1e-10 and worst["GB"] <= 1e-8 and worst["ringA"] <= 1e-10
    check(1, ok, ", ".join(f"{k} {v:.2g}" for k, v in worst.items()))


def test_criterion_02_scalar_curvature(reports):
    summarize(2, entries(reports, "lemma31iii_scalar", ["tau_two", "tau_A", "tau_A_recentered"]))


def test_criterion_03_mean_curvature_expansion(reports):
    summarize(3, entries(reports, "lemma31i_H_expansion", ["tau_two", "tau_A", "tau_A_recentered"]))


def test_criterion_04_H_identity(reports):
    summarize(4, entries(reports, "lemma41_H_identity"))


def test_criterion_05_exp_integral(reports):
    summarize(5, entries(reports, "prop42i_exp_integral"))


def test_criterion_06_graph_and_radial_tangent(reports):
    summarize(6, entries(reports, "thm71_w_sup") + entries(reports, "thm71_radial_tangent_L2"))


def test_criterion_07_trace_free_second_form(reports):
    summarize(7, entries(reports, "prop44_ringA_L2") + entries(reports, "thm52_ringA_sup"))


def test_criterion_08_conformal_factor(reports):
    items = entries(reports, "thm51_beta_sup")
    gauge = max(q["thm51_gauge"] for rep, _ in reports.values() for q in rep.leaves)
    ok = all(e.passed for _, e in items) and gauge <= 1e-8
    detail = "; ".join(f"{lab} {fit_line(e)}" for lab, e in items) + f"; max gauge {gauge:.2g}"
    check(8, ok, detail)


def test_criterion_09_kazdan_warner(reports):
    leaf_kw = max(max(e.values) for _, e in entries(reports, "kw_residual"))
    n = np.array([0.3, 0.2, 0.9])
    n /= np.linalg.norm(n)
    src = s2grid.build_grid(96)
    beta = s2grid.resize(src.analysis(0.01 / (1.3 - np.einsum("i,i...->...", n, src.xyz))), 90)
    kw = {}
    for L in (24, 48):
        g = s2grid.build_grid(L)
        kw[L] = float(np.abs(cf.kw_residual(cf.uniformize(cf.IntrinsicMetric.conformal(g, beta)))).max())
    ok = leaf_kw <= 1e-6 and kw[24] <= 1e-6 and kw[24] >= 10 * kw[48]
    check(9, ok, f"leaves max {leaf_kw:.2g}; spot L=24 {kw[24]:.2g}, L=48 {kw[48]:.2g}, ratio {kw[24] / kw[48]:.1f}")


def test_criterion_10_ball_fit_and_drift(reports, tau_a, grid24):
    items = entries(reports, "thm61_ball_fit") + entries(reports, "drift")
    genuine = reports["tau_C"][0].entries["drift"]
    off = ambient.AmbientMetricSpec(cf.transform_mass_aspect(tau_a, cf.MobiusBoost.from_vector([0.2, 0.1, 0.25]), L=24))
    drifts = [vf.drift_estimate(solve_near(off, r, grid24).surface) for r in R_HAT]
    ok = all(e.passed for _, e in items) and not genuine.degenerate and min(drifts) >= 1e-3
    detail = "; ".join(f"{lab} {fit_line(e)}" for lab, e in items)
    detail += f"; off-centered drift min {min(drifts):.3g}"
    check(10, ok, detail)


def test_criterion_11_stability(reports, grid24, spec_a):
    min_l = min(q["stability_L"] for rep, _ in reports.values() for q in rep.leaves)
    hyp = ambient.hyperbolic_spec()
    spec_err = 0.0
    for r in (3.0, 5.0):
        leaf = so.cmc_solve(so.CmcProblem(hyp, 2 / math.tanh(r), grid24))
        ev = so.full_spectrum(so.jacobi_operator(hyp, leaf.surface, leaf.geometry))
        k = np.concatenate([np.full(2 * j + 1, j) for j in range(8)])
        spec_err = max(spec_err, float(np.abs(ev[: len(k)] - np.sort((k * (k + 1) - 2) / math.sinh(r) ** 2)).max()))
    leaf = solve_near(spec_a, 4.0, grid24)
    fd, phi = so.lapse(spec_a, leaf)
    rel = float(np.abs(fd - phi).max() / np.abs(phi).max())
    ok = min_l > 0 and spec_err <= 1e-8 and rel <= 1e-6
    check(11, ok, f"min L eigenvalue {min_l:.3g}; round spectrum error {spec_err:.2g}; lapse FD defect {rel:.2g}")


def test_criterion_12_foliation(spec_a, grid24):
    ls = [cli.l_for_radius(spec_a, r, grid24) for r in (3.0, 4.0, 5.0, 5.5, 6.0)]
    leaves = so.foliation_sweep(spec_a, ls, grid24)
    inner = [lf.surface.inner_radius for lf in leaves]
    nested = all(b > a for a, b in zip(inner, inner[1:]))
    signed = all(np.min(lf.lapse) * np.max(lf.lapse) > 0 for lf in leaves)
    ratios = [so.lapse_ratio(lf.lapse) for lf in leaves if lf.r_hat >= 5]
    lid = [(lf.r_hat, so.lapse_identity_terms(lf, lf.lapse)["relative"]) for lf in leaves]
    e = vf.evaluate_entry("barro_residual", [b[0] for b in lid], [b[1] for b in lid])
    ok = nested and signed and min(ratios) >= 0.5 and e.passed
    check(12, ok, f"nested {nested}; single-signed {signed}; min lapse ratio (r>=5) {min(ratios):.4f}; {fit_line(e)}")


def test_criterion_13_uniqueness_and_continuation(specs, grid24):
    rng = np.random.default_rng(11)
    spreads = {}
    for label in ("tau_two", "tau_A", "tau_A_recentered"):
        spec = specs[label]
        for l in (2.01, cli.l_for_radius(spec, 4.0, grid24)):
            base = so.cmc_solve(so.CmcProblem(spec, l, grid24))
            guesses = []
            for _ in range(3):
                c = base.surface.rho_coeffs.copy()
                c[0] += 0.05 * math.sqrt(4 * math.pi) * rng.standard_normal()
                c[1:16] += 0.01 * rng.standard_normal(15)
                guesses.append(sf.GraphSurface(grid24, c))
            leaves, spread = so.uniqueness_probe(so.CmcProblem(spec, l, grid24), guesses)
            spread = max(spread, float(np.abs(leaves[0].surface.rho - base.surface.rho).max()))
            spreads[(label, round(l, 6))] = spread
    spec = specs["tau_A"]
    path = so.continuation_in_t(spec, 2.01, grid24, t_steps=10)
    direct = so.cmc_solve(so.CmcProblem(spec, 2.01, grid24))
    cont = float(np.abs(path[-1].surface.rho - direct.surface.rho).max())
    worst = max(spreads.values())
    ok = worst <= 1e-8 and cont <= 1e-8 and path[-1].t == 1.0
    check(13, ok, f"max probe spread {worst:.2g} over {len(spreads)} (spec, l) pairs; continuation vs direct {cont:.2g}")


def test_criterion_14_determinism(tmp_path):
    coeff = 0.5 * math.sqrt(4 * math.pi / 5)
    doc = {
        "metric": {"mass_aspect": {"constant": 2.0, "coeffs": [{"l": 2, "m": 0, "value": coeff}]}},
        "verify": {"label": "tau_A"},
    }
    cfg = tmp_path / "verify.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["verify", str(cfg), "--output-dir", str(a)]) == 0
    assert cli.main(["verify", str(cfg), "--output-dir", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    ok = not mismatch and not errors and "estimates.csv" in match and "MANIFEST" in match
    check(14, ok, f"{len(match)} files bit-identical, {len(mismatch)} differ")
