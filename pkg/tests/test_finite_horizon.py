import numpy as np
import pytest

from hybridqvi import library
from hybridqvi.finite_horizon import (
    SlicedPolicy,
    TerminalDataError,
    TimeGrid,
    backward_march,
    build_terminal_data,
    check_triangle,
    terminal_consistency_check,
    triangle_margin,
)
from hybridqvi.grid import build_grid
from hybridqvi.model import HybridState, model_from_dict
from hybridqvi.trajectory import simulate


def switching_with_overlap(C_c):
    doc = library.switching_doc()
    doc["charts"][0]["D"] = {"type": "ball", "center": [0.3], "radius": 0.3}
    doc["jump_map"] = [{"chart": 0, "coords": ["0.2 + 0.2 * v1"]}]
    doc["constants"]["R"] = 2.0
    doc["costs"]["C_c"] = C_c
    return model_from_dict(doc)


def test_time_grid():
    tg = TimeGrid(2.0, 100)
    assert tg.dt == pytest.approx(0.02) and tg.times[-1] == pytest.approx(2.0)
    m = library.constant_cost()
    g = build_grid(m, 0.1)
    tg.check(m, g)
    with pytest.raises(ValueError):
        TimeGrid(2.0, 10).check(m, g)
    assert TimeGrid.for_grid(m, g, 1.0).dt <= 0.05 + 1e-15
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)


def test_triangle_check():
    assert check_triangle(library.switching())  # C and D disjoint: vacuous
    assert check_triangle(switching_with_overlap("0.7"))
    assert check_triangle(switching_with_overlap("0.5 + abs(x1 - y1)"))
    bad = switching_with_overlap("0.5 + (x1 - y1) * (x1 - y1) * 10")
    worst, wit = triangle_margin(bad)
    assert worst < 0 and wit is not None
    assert not check_triangle(bad)
    with pytest.raises(TerminalDataError, match="triangle"):
        build_terminal_data(bad, build_grid(bad, 0.1))


def test_terminal_data_zero_h(conveyor):
    g = build_grid(conveyor, 0.05)
    td = build_terminal_data(conveyor, g)
    vals = td.field.values
    assert np.all(vals[td.construction == 3] == 1.0)
    assert np.all(vals[td.construction != 3] == 0.0)
    assert max(td.residual.values()) <= 1e-9 and td.triangle_checked


def test_terminal_data_is_h_when_compatible():
    m = library.finite_conveyor()
    g = build_grid(m, 0.05)
    td = build_terminal_data(m, g)
    assert np.array_equal(td.field.values, m.h(0, g.nodes(0)))


def test_terminal_data_switching_residuals():
    doc = library.switching_doc()
    doc["costs"]["h"] = "x1 * x1"
    m = model_from_dict(doc)
    td = build_terminal_data(m, build_grid(m, 0.05))
    assert max(td.residual.values()) <= 1e-9
    x = td.field.grid.nodes(0)[:, 0]
    inC = np.abs(x) <= 0.5
    assert np.all(td.field.values[inC] <= x[inC] ** 2 + 1e-15)


def test_constant_cost_slices_exact():
    m = library.constant_cost()
    g = build_grid(m, 0.1)
    tg = TimeGrid(2.0, 100)
    res = backward_march(m, g, tg)
    for n, f in enumerate(res.fields):
        assert np.max(np.abs(f.values - (2.0 - n * tg.dt))) <= 1e-10
    tc = terminal_consistency_check(m, res, r=10.0)
    assert tc[-1] == 0.0 and tc[-2] == pytest.approx(tg.dt)
    assert np.all(np.diff(tc) < 0)


def test_transport_characteristics():
    m = library.transport()
    g = build_grid(m, 0.02)
    tg = TimeGrid.for_grid(m, g, 1.0)
    res = backward_march(m, g, tg)
    x = g.nodes(0)[:, 0]
    err = np.abs(res.fields[0].values - library.transport_value(0.0, x, 1.0))
    away = (x < 2.5) & (np.abs(x + 1.0) > 0.3)  # clear of the outflow edge and of the kink
    assert err[away].max() <= 2 * (g.h + tg.dt)
    assert err[x < 2.5].max() <= 5 * np.sqrt(g.h)


def test_finite_conveyor_path_enumeration():
    m = library.finite_conveyor()
    g = build_grid(m, 0.05)
    tg = TimeGrid.for_grid(m, g, 1.0)
    res = backward_march(m, g, tg)
    x = g.nodes(0)[:, 0]
    for n in (0, tg.steps // 3, tg.steps - 1):
        want = library.finite_conveyor_value(n * tg.dt, x, 1.0)
        assert np.max(np.abs(res.fields[n].values - want)) <= g.h + tg.dt


def test_slices_monotone_in_horizon_and_nonnegative(switching):
    g = build_grid(switching, 0.05)
    res = backward_march(switching, g, TimeGrid.for_grid(switching, g, 0.5))
    allv = np.stack([f.values for f in res.fields])
    assert np.all(np.isfinite(allv)) and allv.min() >= 0
    assert np.all(allv[:-1] >= allv[1:] - 1e-12)
    assert max(max(r.values()) for r in res.residuals) <= 1e-12


def test_overlap_model_sub_iterates():
    m = switching_with_overlap("0.5 + abs(x1 - y1)")
    g = build_grid(m, 0.05)
    res = backward_march(m, g, TimeGrid.for_grid(m, g, 0.3))
    assert max(res.sub_iterations) >= 1
    assert max(max(r.values()) for r in res.residuals) <= 1e-9


def test_index_and_sliced_policy(switching):
    g = build_grid(switching, 0.1)
    tg = TimeGrid.for_grid(switching, g, 0.5)
    res = backward_march(switching, g, tg)
    idx = res.index()
    assert len(idx["slices"]) == tg.steps + 1 and idx["terminal"]["triangle_checked"]
    pol = res.policy
    assert isinstance(pol, SlicedPolicy)
    s = HybridState(0, [1.0])
    rec = simulate(switching, s, pol, horizon="finite", T=0.5)
    assert rec.total_cost <= res.fields[0].at(s) + 5 * g.h


def test_time_dependent_midpoint():
    doc = library.constant_cost_doc()
    doc["costs"]["K"] = "t"
    m = model_from_dict(doc)
    assert m.time_dependent
    g = build_grid(m, 0.1)
    tg = TimeGrid(1.0, 20)
    res = backward_march(m, g, tg)
    # midpoint quadrature of t is exact: V(s) = (1 - s^2) / 2
    for n in (0, 10):
        s = n * tg.dt
        assert np.allclose(res.fields[n].values, (1 - s * s) / 2, atol=1e-12)
