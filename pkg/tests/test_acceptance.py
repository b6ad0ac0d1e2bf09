"""Acceptance criteria; each test prints one PASS/FAIL line through the ``acceptance`` fixture."""

import numpy as np
import pytest

from hybridqvi import library
from hybridqvi.finite_horizon import TimeGrid, backward_march, build_terminal_data, terminal_consistency_check
from hybridqvi.grid import build_grid
from hybridqvi.model import HybridState, model_from_dict
from hybridqvi.stationary import SolveConfig, solve_stationary
from hybridqvi.trajectory import simulate
from hybridqvi.validation import validate_model
from hybridqvi.verification import (
    random_lipschitz_models,
    run_comparison_shadow,
    run_convergence,
    run_ode_estimates,
)


def jump_free_cost_model():
    doc = library.linear_field_doc(0.5)
    doc["name"] = "linear_with_cost"
    doc["costs"] = {"K": "min(abs(x1), 1)", "h": "0"}
    return model_from_dict(doc)


def test_constant_cost_fixed_point(acceptance):
    m = library.constant_cost()
    V, _, diag = solve_stationary(m, 0.1, SolveConfig(tol=1e-12))
    dt = diag.dt
    fixed = dt / (1.0 - np.exp(-dt))
    e_fixed = float(np.max(np.abs(V.values - fixed)))
    e_limit = float(np.max(np.abs(V.values - 1.0)))
    acceptance(1, "constant-cost fixed point", e_fixed <= 1e-10 and e_limit <= 5 * dt,
               f"|V - dt/(1-e^-dt)| = {e_fixed:.2e} (<= 1e-10), |V - 1/lambda| = {e_limit:.3e} (<= {5 * dt:.3g})")


def test_conveyor_jump_loop(acceptance):
    m = library.conveyor()
    audit = validate_model(m)
    V, _, diag = solve_stationary(m, 0.02)
    want = float(np.exp(-1.5) / (1 - np.exp(-1.5)))
    got = V.at(HybridState(0, [0.5]))
    tol = max(2 * diag.h, 2 * diag.dt)
    ok = abs(got - want) <= tol and audit["transversality"].passed
    acceptance(2, "conveyor jump loop", ok,
               f"V(0.5) = {got:.5f} vs {want:.5f} (tol {tol:.3g}); transversality "
               f"{'passes' if audit['transversality'].passed else 'fails'}")


def test_grid_convergence(acceptance):
    st = run_convergence(library.conveyor(), levels=4, h0=0.1)
    errs = ", ".join(f"{e:.2e}" for e in st.errors)
    acceptance(3, "grid convergence", st.empirical_order >= 0.8,
               f"order {st.empirical_order:.3f} (>= 0.8) over errors {errs}")


def test_qvi_residual(acceptance):
    parts, worst = [], 0.0
    for name, h in (("constant_cost", 0.05), ("conveyor", 0.05), ("switching", 0.05), ("two_chart", 0.15)):
        _, _, diag = solve_stationary(getattr(library, name)(), h, SolveConfig(tol=1e-6))
        w = max(diag.residual.values())
        worst = max(worst, w)
        parts.append(f"{name} {w:.2e}")
    acceptance(4, "QVI residual", worst <= 1e-6, "max over A, C, free: " + ", ".join(parts) + " (<= 1e-6)")


def test_monotone_contraction(acceptance):
    worst_ratio, msgs = 0.0, []
    ok = True
    for m in (library.constant_cost(), jump_free_cost_model()):
        _, _, diag = solve_stationary(m, 0.05)
        r = max(diag.contraction_ratios)
        ok &= r <= diag.discount_per_step * (1 + 1e-9)
        worst_ratio = max(worst_ratio, r / diag.discount_per_step)
    min_inc = np.inf
    for m in (library.constant_cost(), library.conveyor(), library.switching(), library.two_chart(),
              jump_free_cost_model()):
        _, _, diag = solve_stationary(m, 0.1)
        min_inc = min(min_inc, diag.min_increment)
    ok &= min_inc >= 0.0
    acceptance(5, "monotone contraction", ok,
               f"max ratio / e^(-lambda dt) = {worst_ratio:.12f} (<= 1 + 1e-9); min increment {min_inc:.3g} (>= 0)")


def test_comparison_shadow(acceptance):
    reps = [run_comparison_shadow(library.constant_cost(), sweeps=100, grid_h=0.1),
            run_comparison_shadow(library.conveyor(), sweeps=100, grid_h=0.05)]
    ok = all(r.passed for r in reps)
    gaps = ", ".join(f"{r['order_preserved'].margin:.3g}" for r in reps)
    acceptance(6, "comparison shadow", ok, f"min (V+ - V-) over 100 sweeps on both models = {gaps} (>= 0)")


def test_terminal_data(acceptance):
    m = library.conveyor()
    td = build_terminal_data(m, build_grid(m, 0.05))
    onA = td.construction == 3
    pattern = bool(np.all(td.field.values[onA] == 1.0) and np.all(td.field.values[~onA] == 0.0))
    sw = library.switching_doc()
    sw["costs"]["h"] = "x1 * x1"
    m2 = model_from_dict(sw)
    td2 = build_terminal_data(m2, build_grid(m2, 0.05))
    worst = max(max(td.residual.values()), max(td2.residual.values()))
    acceptance(7, "terminal data", pattern and worst <= 1e-9,
               f"max residual {worst:.2e} (<= 1e-9); 1 on {int(onA.sum())} A nodes and 0 elsewhere: {pattern}")


def test_finite_horizon_exactness(acceptance):
    m = library.constant_cost()
    g = build_grid(m, 0.1)
    tg = TimeGrid(2.0, 100)
    res = backward_march(m, g, tg)
    err = max(float(np.max(np.abs(f.values - (2.0 - n * tg.dt)))) for n, f in enumerate(res.fields))
    tc = terminal_consistency_check(m, res, r=1.0, last=5)
    mono = bool(np.all(np.diff(tc) < 0)) and tc[-1] == 0.0
    acceptance(8, "finite-horizon exactness", err <= 1e-10 and mono,
               f"max |V(s,x) - (T-s)| = {err:.2e} (<= 1e-10); terminal gaps {np.round(tc, 12).tolist()}")


def test_ode_estimates(acceptance):
    lin = run_ode_estimates(library.linear_field(0.5), trials=20, seed=0)
    r_lin = lin.extra["max_separation_ratio"]
    worst_r, speed_ok = 0.0, lin["flow_speed"].passed
    for m, _ in random_lipschitz_models(100, seed=0):
        rep = run_ode_estimates(m, trials=4, seed=1, dt=0.01)
        worst_r = max(worst_r, rep.extra["max_separation_ratio"])
        speed_ok &= rep["flow_speed"].passed
    ok = abs(r_lin - 1.0) <= 1e-8 and worst_r < 1.0 and speed_ok
    acceptance(9, "ODE estimates", ok,
               f"linear ratio {r_lin:.12f} (|.-1| <= 1e-8); worst random ratio {worst_r:.6f} (< 1); "
               f"speed bound {'holds' if speed_ok else 'fails'}")


def test_policy_consistency(acceptance):
    parts, ok = [], True
    for name in ("conveyor", "switching"):
        m = getattr(library, name)()
        V, pol, diag = solve_stationary(m, 0.02, SolveConfig(tol=1e-8))
        slack = max(5 * diag.h, 5 * diag.dt)
        sep = m.constants.beta / m.dynamics_bound_local
        rng = np.random.default_rng(10)
        lo, hi = m.sampling_box(0)
        worst, min_gap, jumps = -np.inf, np.inf, 0
        for _ in range(10):
            x0 = HybridState(0, rng.uniform(lo, hi))
            rec = simulate(m, x0, pol)
            worst = max(worst, rec.total_cost - V.at(x0))
            t = rec.event_times
            jumps += t.size
            if t.size > 1:
                min_gap = min(min_gap, float(np.min(np.diff(t))))
        ok &= worst <= slack and min_gap >= sep - 1e-9
        parts.append(f"{name}: cost - V(x0) <= {worst:.2e} (slack {slack:.3g}), "
                     f"min jump gap {min_gap:.3f} (>= {sep:.3f}) over {jumps} jumps")
    acceptance(10, "policy consistency", ok, "; ".join(parts))
