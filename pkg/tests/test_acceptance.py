"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line straight to the
terminal and then asserts. Three criteria fail on this build; the analysis
is in the decisions ledger.
"""

import math
import time

import numpy as np
import pytest

from cusplab import bounds as bd
from cusplab.experiments import fit_recovery, square_exact
from cusplab.fem import WeightSpec, assemble, build_graded_mesh, unit_square_mesh
from cusplab.geometry import CuspDomain, CuspProfile, lemma_ed_check, modulus_check
from cusplab.linalg import solve_generalized
from cusplab.manifold import ball_volume, endpoint_classify, hardy_manifold_constant, ManifoldModel, supnorm_trace

TOL = 1e-8


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:<3} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return emit


def test_1_square_sanity(report):
    t0 = time.perf_counter()
    mesh = unit_square_mesh(1 / 64)
    f = assemble(mesh)
    E = solve_generalized(f.stiffness, f.mass, 11, TOL)
    el = time.perf_counter() - t0
    exact = np.array([lam for _, _, lam in square_exact(10)])
    err = np.abs(E.eigenvalues[1:] - exact) / exact
    report(1, "square sanity", bool(np.all(err < 0.01) and el < 60), f"max rel err {err.max():.3e}, {el:.2f} s")


def test_2_exponential_inequality(report):
    t0 = time.perf_counter()
    lam = np.logspace(0, 6, 61)
    ts = np.logspace(-4, 0, 41)
    reps = [bd.estbasic_check(c9, a, lam, ts) for a in (1.5, 2.0, 3.0) for c9 in (0.5, 1.0, 2.0)]
    el = time.perf_counter() - t0
    nv = sum(r.violations for r in reps)
    report(2, "exponential inequality grid", nv == 0 and el < 5, f"{nv} violations over {sum(r.n_checked for r in reps)} points, {el:.3f} s")


def test_3_manifold_hardy(report):
    vals = {(a, U): hardy_manifold_constant(ManifoldModel(a, 0, bc="neumann", U_max=U), TOL) for a in (1.0, 1.5, 2.0, 3.0) for U in (1e3, 1e4, 1e5)}
    bad = [k for k, v in vals.items() if v < 3 / 16 - 10 * TOL]
    worst = min(vals, key=vals.get)
    report(3, "manifold form bound >= 3/16", not bad, f"{len(bad)} of {len(vals)} below 0.1875; min {vals[worst]:.4g} at alpha={worst[0]:g}, U_max={worst[1]:g}")


def test_4_endpoint_classification(report):
    bad = [(n, a) for n in (0, 1, 2) for a in (1, 2, 3) if not endpoint_classify(a, n).matches]
    report(4, "endpoint classification", not bad, f"{len(bad)} mismatching (n, alpha) of 9")


def test_5_breakdown(report):
    t0 = time.perf_counter()
    s1 = supnorm_trace(1.0)
    s2 = supnorm_trace(2.0)
    el = time.perf_counter() - t0
    ok1 = s1.strictly_increasing and s1.fit_rel_error <= 0.2
    ok2 = s2.last_rel_change < 0.02
    report(
        5,
        "sup-norm breakdown",
        ok1 and ok2 and el < 600,
        f"alpha=1 increasing {s1.strictly_increasing}, slope {s1.fit_slope:.4f} vs lambda {s1.fit_lambda:.4f} (rel {s1.fit_rel_error:.3f}); "
        f"alpha=2 last change {s2.last_rel_change:.1%} (need < 2%); {el:.1f} s",
    )


def test_6_distance_bounds(report):
    dom = CuspDomain(CuspProfile.canonical(1.0, 2.0), w_min=1e-4, side="below")
    mod = modulus_check(dom.profile, seed=0)
    rep = lemma_ed_check(dom, 10_000, 1e-2, 0, A_eff=mod.A_eff)
    report(
        6,
        "distance bounds, repaired constant",
        rep.upper_violations == 0 and rep.repaired_violations == 0 and len(rep.samples) == 10_000,
        f"upper {rep.upper_violations}, lower {rep.repaired_violations} of {len(rep.samples)} (A_eff {rep.A_eff:.4g}); printed constant: {rep.printed_violations} violations",
    )


def test_7_ball_volume(report):
    rows = [ball_volume(4.0, e) for e in (0.5, 0.1, 0.05)]
    cross = max(b.cross_rel_diff for b in rows)
    r = rows[-1].ratio_derived
    report(
        7,
        "ball volume",
        cross <= 1e-6 and abs(r - 1) <= 0.1,
        f"integrators agree to {cross:.1e}; ratio at eps=0.05 {r:.4f} (need within 10%); printed form ratios "
        + ", ".join(f"{b.ratio_printed:.3g}" for b in rows),
    )


def test_8_fit_recovery(report):
    rows = fit_recovery(0)
    clean = max(r[4] for r in rows if r[1] == 0)
    noisy = max(r[5] for r in rows if r[1] > 0)
    report(8, "fit recovery", clean <= 1e-6 and noisy <= 0.05, f"noiseless abs err {clean:.1e}, noisy rel err {noisy:.2%}")


@pytest.fixture(scope="module")
def horn_spectrum():
    dom = CuspDomain(CuspProfile.canonical(1.0, 2.0), w_min=1e-3, side="above")
    mesh = build_graded_mesh(dom, 1 / 16)
    f1 = assemble(mesh, WeightSpec.log_dist(1.0))
    E = solve_generalized(f1.stiffness, f1.mass, mesh.n_nodes, TOL)
    return dom, mesh, f1, E


def test_9_heat_kernel(report, horn_spectrum):
    dom, mesh, _, E = horn_spectrum
    t = np.geomspace(1e-3, 10.0, 25)
    lam = np.maximum(E.eigenvalues, 0.0)
    V2 = E.vectors**2
    K = np.array([V2 @ np.exp(-lam * s) for s in t])
    drops = np.array([V2 @ (np.exp(-lam * a) - np.exp(-lam * b)) for a, b in zip(t[:-1], t[1:])])
    limit = float(np.max(np.abs(K[-1] * mesh.area - 1)))
    uc = bd.ultracontractivity_fit(E, 1.5, t[t <= 1])
    ok = bool(np.all(K > 0) and np.all(drops > 0) and limit < 1e-3)
    report(
        9,
        "heat kernel on the truncated cusp",
        ok,
        f"positive {np.all(K > 0)}, decreasing {np.all(drops > 0)}, |K(10)|Omega| - 1| {limit:.1e}; "
        f"slope {uc.fitted_exponent:.3f} vs 2 (informational, within 0.3: {abs(uc.fitted_exponent - 2) <= 0.3})",
    )


def test_10_deficit_curves(report, horn_spectrum):
    dom, mesh, f1, E = horn_spectrum
    eps = np.geomspace(1.0, 1e-3, 13)
    tip = np.flatnonzero(mesh.nodes[:, 1] < dom.y_cut + 0.1 * (dom.height - dom.y_cut))
    fam, lab = bd.default_family(f1.stiffness, f1.mass, E, tip)
    cusp = bd.eta_lower_bound(fam, f1.stiffness, f1.mass, eps, mesh, f1.weighted_mass, 1.0, lab, 1.5)

    sq = unit_square_mesh(1 / 32)
    dist = lambda P: np.minimum.reduce([P[:, 0] + 0.5, 0.5 - P[:, 0], P[:, 1], 1.0 - P[:, 1]])
    g1 = assemble(sq, WeightSpec.log_dist(1.0), distance=dist)
    Es = solve_generalized(g1.stiffness, g1.mass, 8, TOL)
    tip_s = np.flatnonzero(np.hypot(sq.nodes[:, 0] + 0.5, sq.nodes[:, 1]) < 0.15)
    fam_s, lab_s = bd.default_family(g1.stiffness, g1.mass, Es, tip_s)
    square = bd.eta_lower_bound(fam_s, g1.stiffness, g1.mass, eps, sq, g1.weighted_mass, 1.0, lab_s)

    shapes = all(c.monotone and c.convex and c.beta_monotone and c.beta_convex for c in (cusp, square))
    b2 = square.beta_fit["b2"]
    report(10, "deficit curves", shapes and b2 > 0, f"nonincreasing and convex on both runs: {shapes}; square b2 {b2:.4g}")
