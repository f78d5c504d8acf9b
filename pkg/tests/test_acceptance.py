"""End-to-end acceptance criteria 1-7, each at its stated tolerance."""
import math

import numpy as np

from conftest import conformal, fixture_fields, h2xr, h2xr_killing, plane, space, sphere
from oracles import ripple_laplacian
from equipart import expr as ex
from equipart.equilibrium import (SamplePlan, check_equilibrium, detect_regions,
                                  extract_profiles, sample_domain)
from equipart.geometry import (Manifold, ScalarField, grad_norm_sq, laplace_beltrami,
                               laplace_beltrami_christoffel)
from equipart.polar import PolarPlan, build_patch, separability_check, small_r_slope
from equipart.reports import Verdict
from equipart.stability import (WarpedPlane, criterion_value, first_variation_check,
                                ritore_criterion, second_variation_mode)
from equipart.symmetry import killing_residual, lie_bracket


def _fmt(x):
    return f"{x:.3g}"


def test_criterion_1_hyperbolic_product(acceptance):
    H = h2xr()
    fields = h2xr_killing(H)
    pts = sample_domain(H, SamplePlan(samples=2000))
    kill = max(float(killing_residual(H, X, pts).max()) for X in fields)
    invariants = [
        ScalarField(H, "x^2 + y^2"), ScalarField(H, "z"),
        ScalarField(H, "(x^2 + y^2 - 2)/y", domain="y^2 > 0.0025"),
        ScalarField(H, "(x^2 + y^2 - 2)/x", domain="x^2 > 0.0025"),
    ]
    reports = [check_equilibrium(H, f) for f in invariants]
    control = check_equilibrium(H, ScalarField(H, "x + z^2"))
    worst = max(r.max_residual for r in reports)
    ok = (kill <= 1e-10 and all(r.verdict is Verdict.CONSISTENT for r in reports)
          and worst <= 1e-8 and control.verdict is Verdict.REFUTED)
    acceptance(1, ok, f"killing={_fmt(kill)} invariants={[r.verdict.value for r in reports]} "
                      f"max_residual={_fmt(worst)} control={control.verdict.value}")
    assert ok


def test_criterion_2_ripple_profiles(acceptance):
    b = 3 * math.pi
    M = Manifold.euclidean(("x", "y"), domain=f"x^2 + y^2 < {b * b!r}",
                           box={"x": (-b, b), "y": (-b, b)})
    f = ScalarField(M, "cos(sqrt(x^2+y^2))")
    dec = detect_regions(M, f, SamplePlan(samples=2000))
    cluster = max(min(abs(c - v) for c in dec.critical_values) for v in (-1.0, 1.0))
    profiles = extract_profiles(M, f, decomposition=dec)
    grad_err, lap_err, rings = 0.0, 0.0, set()
    for prof in profiles:
        ring = np.floor(np.hypot(prof.points[:, 0], prof.points[:, 1]) / math.pi)
        i = int(ring[0])
        assert np.all(ring == i)
        rings.add(i)
        grad_err = max(grad_err, float(np.abs(prof.gradnormsq - (1 - prof.f_values ** 2)).max()))
        for bn in prof.bins:
            fv = dec.f_values[bn.indices]
            lap_err = max(lap_err, abs(bn.laplacian - float(ripple_laplacian(fv, i).mean())))
            grad_err = max(grad_err, abs(bn.gradnormsq - float((1 - fv ** 2).mean())))
    ok = grad_err <= 1e-9 and lap_err <= 1e-6 and rings == {0, 1, 2} and cluster <= 1e-3
    acceptance(2, ok, f"grad_err={_fmt(grad_err)} lap_bin_err={_fmt(lap_err)} "
                      f"regions={sorted(rings)} cluster_err={_fmt(cluster)}")
    assert ok


def test_criterion_3_polar_separability(acceptance):
    cases = {"plane": (plane(), (0.0, 0.0)), "sphere": (sphere(), (math.pi / 2, 0.0)),
             "conformal": (conformal(), (0.0, 0.0))}
    stats, gauss, slopes = {}, {}, {}
    plan = PolarPlan()
    for name, (M, c) in cases.items():
        patch = build_patch(M, c, plan)
        rep = separability_check(M, c, plan, patch=patch)
        stats[name] = rep.max_residual
        gauss[name] = float(np.nanmax(patch.gauss))
        slopes[name] = float(np.abs(small_r_slope(M, c, PolarPlan(directions=8)) - 2).max())
    ok = (stats["plane"] <= 1e-3 and stats["sphere"] <= 1e-3 and stats["conformal"] >= 1e-2
          and max(gauss.values()) <= 1e-4 and max(slopes.values()) <= 0.05)
    acceptance(3, ok, "stat=" + ",".join(f"{k}:{_fmt(v)}" for k, v in stats.items())
               + f" gauss_max={_fmt(max(gauss.values()))}"
               + f" slope_dev_max={_fmt(max(slopes.values()))}")
    assert ok


def test_criterion_4_conformal_potential(acceptance):
    rep = check_equilibrium(plane(), "(y - x^2)/2")
    ok = rep.verdict is Verdict.REFUTED and rep.max_residual >= 0.1
    acceptance(4, ok, f"verdict={rep.verdict.value} witness_residual={_fmt(rep.max_residual)}")
    assert ok


def test_criterion_5_stability(acceptance):
    ritore = WarpedPlane("r*(1 + r^2)", 0.5, 2.0)
    flat = WarpedPlane("r", 0.5, 2.0)
    round_ = WarpedPlane("sin(r)", 0.1, 3.0)
    rep, _ = ritore_criterion(ritore)
    c1 = criterion_value(ritore, 1.0)
    q = second_variation_mode(ritore, 1.0, 1)
    grid = np.linspace(0.5, 2.0, 31)
    c_flat = max(float(np.abs(criterion_value(w, grid) - 1).max()) for w in (flat, round_))
    q_flat = max(abs(second_variation_mode(flat, 1.0, 1)),
                 abs(second_variation_mode(round_, math.pi / 4, 1)))
    first = [first_variation_check(w, r0) for w, r0 in
             ((flat, 1.0), (ritore, 1.0), (round_, math.pi / 4))]
    fv = max(max(r.sub_residuals[f"k={k}"] for k in (1, 2, 3)) for r in first)
    ctrl = max(r.sub_residuals["control_rel_error"] for r in first)
    ok = (rep.verdict is Verdict.UNSTABLE and abs(c1 - 4) <= 1e-12
          and abs(q + 1.5 * math.pi) <= 1e-6 and c_flat <= 1e-12 and q_flat <= 1e-6
          and all(r.verdict is Verdict.CONSISTENT for r in first) and fv <= 1e-6
          and ctrl <= 1e-4)
    acceptance(5, ok, f"c(1)={c1!r} Q={q!r} c_flat_dev={_fmt(c_flat)} Q_flat={_fmt(q_flat)} "
                      f"first_var_max={_fmt(fv)} control_err={_fmt(ctrl)}")
    assert ok


def _derivative_sweep():
    worst = 0.0
    for M, f in fixture_fields():
        pts = sample_domain(M, SamplePlan(samples=100, seed=9), f)
        exprs = [f.expr, f.grad_norm_sq_expr]
        for e in exprs:
            for j, c in enumerate(M.coords):
                d = ex.differentiate(e, c)
                exact = ex.evaluate_many(d, M.env(pts))
                h = 1e-5 * (1 + np.abs(pts[:, j]))
                up, dn = pts.copy(), pts.copy()
                up[:, j] += h
                dn[:, j] -= h
                fd = (ex.evaluate_many(e, M.env(up)) - ex.evaluate_many(e, M.env(dn))) / (2 * h)
                rel = np.abs(exact - fd) / (1 + np.abs(exact))
                worst = max(worst, float(np.max(rel)))
    return worst


def test_criterion_6_property_suites(acceptance):
    deriv = _derivative_sweep()

    lap = 0.0
    for M, f in fixture_fields():
        pts = sample_domain(M, SamplePlan(samples=200, seed=11), f)
        a, b = laplace_beltrami(M, f, pts), laplace_beltrami_christoffel(M, f, pts)
        lap = max(lap, float(np.max(np.abs(a - b) / (1 + np.abs(a)))))

    E2 = plane()
    P = Manifold(("r", "t"), [["1", "0"], ["0", "r^2"]], domain="r > 0")
    rng = np.random.default_rng(5)
    r, t = rng.uniform(0.3, 2.5, 100), rng.uniform(-3, 3, 100)
    cart, pol = np.column_stack([r * np.cos(t), r * np.sin(t)]), np.column_stack([r, t])
    chart = 0.0
    for fc, fp in [("x^2*y + 3*x", "r^3*cos(t)^2*sin(t) + 3*r*cos(t)"),
                   ("exp(x)*sin(y)", "exp(r*cos(t))*sin(r*sin(t))")]:
        for op in (laplace_beltrami, grad_norm_sq):
            a, b = op(E2, fc, cart), op(P, fp, pol)
            chart = max(chart, float(np.max(np.abs(a - b) / (1 + np.abs(a)))))

    reparam_ok = True
    plan = SamplePlan(samples=500)
    T = ex.parse("f^3 + f", ["f"])
    for M, f in fixture_fields():
        if check_equilibrium(M, f, plan).verdict is Verdict.CONSISTENT:
            reparam_ok &= check_equilibrium(M, f.compose(T), plan).verdict is Verdict.CONSISTENT

    H = h2xr()
    X = h2xr_killing(H)
    pts = sample_domain(H, SamplePlan(samples=100))
    bracket = max(float(killing_residual(H, lie_bracket(X[i], X[j]), pts).max())
                  for i in range(4) for j in range(i + 1, 4))

    from equipart.cli import TaskSpec, emit_report, run_task
    from equipart.manifest import resolve_manifest
    m = resolve_manifest("h2xr")
    spec = TaskSpec("check-symmetry", vfields=("X1", "X4"), field="f3", samples=1000)
    same_bytes = (emit_report(run_task(m, spec))
                  == emit_report(run_task(m, TaskSpec(**{**spec.__dict__, "threads": 8}))))

    ok = (deriv <= 1e-6 and lap <= 1e-10 and chart <= 1e-9 and reparam_ok
          and bracket <= 1e-9 and same_bytes)
    acceptance(6, ok, f"derivative={_fmt(deriv)} laplacian={_fmt(lap)} chart={_fmt(chart)} "
                      f"reparam={reparam_ok} bracket={_fmt(bracket)} threads_bytes={same_bytes}")
    assert ok


def test_criterion_7_euclidean_classification(acceptance):
    E3 = space()
    verdicts = {f: check_equilibrium(E3, f).verdict
                for f in ("x", "x^2 + y^2", "x^2 + y^2 + z^2", "x^2 + 2*y^2")}
    expected = [Verdict.CONSISTENT] * 3 + [Verdict.REFUTED]
    ok = list(verdicts.values()) == expected
    acceptance(7, ok, " ".join(f"[{k}]={v.value}" for k, v in verdicts.items()))
    assert ok
