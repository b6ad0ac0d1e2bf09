import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from hybridqvi import library
from hybridqvi.model import HybridState, model_from_dict
from hybridqvi.stationary import solve_stationary
from hybridqvi.trajectory import (
    ExplicitControl,
    ModelConsistencyError,
    ZenoGuardError,
    apply_autonomous_jump,
    default_step,
    integrate_arc,
    simulate,
)


def exp_growth_model():
    doc = library.conveyor_doc()
    doc.update(name="exp_growth", dynamics=[["x1"]], dynamics_growth="linear", trunc_radius=4.0)
    doc["charts"][0]["domain"] = {"type": "box", "lo": [0.0], "hi": [4.0]}
    doc["charts"][0]["A"] = {"type": "halfspace", "normal": [-1.0], "offset": -float(np.e)}
    doc.pop("oracle")
    return model_from_dict(doc)


def test_constant_arc_without_hit(constant_cost):
    arc, hit = integrate_arc(constant_cost, HybridState(0, [0.3]), 0.0, [0.0], 2.0)
    assert hit is None and arc.t1 == pytest.approx(2.0)
    assert np.all(arc.path == 0.3)
    assert arc.running_cost == pytest.approx(2.0)
    assert arc.discounted_running_cost == pytest.approx(1 - np.exp(-2.0))


def test_linear_motion_hit(conveyor):
    arc, hit = integrate_arc(conveyor, HybridState(0, [0.0]), 0.0, [0.0], 10.0)
    assert hit.kind == "A" and abs(hit.time - 2.0) <= 1e-9
    assert hit.state.coords[0] == pytest.approx(2.0, abs=1e-9)


def test_exponential_motion_hit():
    m = exp_growth_model()
    _, hit = integrate_arc(m, HybridState(0, [1.0]), 0.0, [0.0], 5.0)
    assert abs(hit.time - 1.0) <= 1e-6


def test_rk4_hit_time_order():
    m = exp_growth_model()
    t = [integrate_arc(m, HybridState(0, [1.0]), 0.0, [0.0], 5.0, dt=h)[1].time for h in (0.2, 0.1, 0.05)]
    order = np.log2(abs(t[0] - t[1]) / abs(t[1] - t[2]))
    assert order >= 3.5


def test_exit_outside_A_is_a_model_fault(conveyor):
    rev = conveyor.with_changes(charts=[replace(conveyor.charts[0], f=lambda t, x, u: -np.ones_like(x))])
    with pytest.raises(ModelConsistencyError, match="leaves the domain"):
        integrate_arc(rev, HybridState(0, [0.5]), 0.0, [0.0], 3.0)


def test_apply_autonomous_jump(conveyor, two_chart):
    assert apply_autonomous_jump(conveyor, HybridState(0, [2.0]), 0).coords[0] == 0.5
    post = apply_autonomous_jump(two_chart, HybridState(0, [2.0]), 0)
    assert post.chart == 1 and np.allclose(post.coords, [-1.0, 0.0])
    with pytest.raises(ModelConsistencyError):
        apply_autonomous_jump(conveyor, HybridState(0, [1.0]), 0)


def test_stationary_unit_cost(constant_cost):
    rec = simulate(constant_cost, HybridState(0, [0.5]), ExplicitControl(constant_cost), tail_tol=1e-6)
    assert rec.total_cost == pytest.approx(1.0, abs=1e-6)
    assert rec.truncation_bound < 1e-6


def test_finite_unit_cost(constant_cost):
    rec = simulate(constant_cost, HybridState(0, [0.5]), ExplicitControl(constant_cost), horizon="finite", T=2.0)
    assert rec.total_cost == pytest.approx(2.0, abs=1e-12)


def test_conveyor_geometric_series(conveyor):
    rec = simulate(conveyor, HybridState(0, [0.5]), ExplicitControl(conveyor))
    assert rec.total_cost == pytest.approx(np.exp(-1.5) / (1 - np.exp(-1.5)), abs=1e-4)
    gaps = np.diff(rec.event_times)
    assert np.all(gaps >= conveyor.constants.beta / conveyor.dynamics_bound_local - 1e-9)
    assert all(e.kind == "autonomous" and e.cost >= conveyor.constants.C_prime for e in rec.events)


def test_initial_state_in_A_jumps_immediately(conveyor):
    rec = simulate(conveyor, HybridState(0, [2.5]), ExplicitControl(conveyor))
    assert rec.events[0].time == 0.0 and rec.events[0].post.coords[0] == 0.5
    assert rec.total_cost == pytest.approx(1.0 / (1 - np.exp(-1.5)), abs=1e-4)


def test_finite_conveyor_path_cost():
    m = library.finite_conveyor()
    rec = simulate(m, HybridState(0, [1.5]), ExplicitControl(m), horizon="finite", T=1.0)
    assert len(rec.events) == 1
    assert rec.total_cost == pytest.approx(float(library.finite_conveyor_value(0.0, 1.5, 1.0)), abs=1e-9)


def test_declined_jump_is_reconsidered_while_in_C(switching):
    calls = []

    def jumps(t, state):
        calls.append(t)
        return None if len(calls) == 1 else HybridState(0, [1.5])

    # the origin attracts, so the path stays in C after the first refusal at |x| = 0.5
    ctrl = ExplicitControl(switching, u=[0.0], jumps=jumps)
    rec = simulate(switching, HybridState(0, [0.9]), ctrl, tail_tol=1e-3)
    assert len(calls) == 2
    jumps_c = [e for e in rec.events if e.kind == "controlled"]
    assert calls[1] - calls[0] == pytest.approx(default_step(switching))
    assert jumps_c[0].time == pytest.approx(calls[1]) and jumps_c[0].pre.coords[0] < 0.5
    ctrl = ExplicitControl(switching, u=[0.0], jumps=[(0.0, HybridState(0, [1.5]))])
    rec = simulate(switching, HybridState(0, [0.9]), ctrl, tail_tol=1e-3)
    ev = rec.events[0]
    assert ev.kind == "controlled" and ev.pre.coords[0] == pytest.approx(0.5, abs=1e-8)
    assert ev.cost == pytest.approx(0.5 + 0.1 * 1.0, abs=1e-8)


def test_scheduled_jump_fires_inside_C(switching):
    ctrl = ExplicitControl(switching, u=[0.0], jumps=[(0.5, HybridState(0, [1.5]))])
    rec = simulate(switching, HybridState(0, [0.2]), ctrl, tail_tol=1e-3)
    ev = rec.events[0]
    assert ev.kind == "controlled" and ev.time == pytest.approx(0.5, abs=1e-9)


def test_zeno_guard(conveyor):
    with pytest.raises(ZenoGuardError):
        simulate(conveyor, HybridState(0, [0.5]), ExplicitControl(conveyor), max_jumps=3)


def test_policy_simulation_bounded_by_value(switching):
    V, policy, diag = solve_stationary(switching, 0.05)
    for x in (-2.0, 1.0, 1.9):
        s = HybridState(0, [x])
        rec = simulate(switching, s, policy)
        assert rec.total_cost <= V.at(s) + 5 * 0.05


def test_serialization(tmp_path, conveyor):
    rec = simulate(conveyor, HybridState(0, [1.5]), ExplicitControl(conveyor), tail_tol=1e-4)
    assert rec.ledger_total() == pytest.approx(rec.total_cost, abs=1e-10)
    rec.to_csv(tmp_path / "s.csv")
    with open(tmp_path / "s.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "chart", "x1", "event_kind", "cost_increment", "discounted_increment"]
    assert sum(float(r["discounted_increment"]) for r in rows) == pytest.approx(rec.total_cost, abs=1e-10)
    assert sum(r["event_kind"] == "autonomous" for r in rows) == len(rec.events)
    times = [float(r["t"]) for r in rows]
    assert all(b >= a for a, b in zip(times, times[1:]))
    rec.to_jsonl(tmp_path / "t.jsonl")
    lines = [json.loads(s) for s in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert lines[-1]["type"] == "summary" and lines[-1]["total_cost"] == rec.total_cost
    assert sum(1 for d in lines if d["type"] == "event") == len(rec.events)
