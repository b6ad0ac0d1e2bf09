import json

import numpy as np
import pytest

from hybridqvi import library
from hybridqvi.model import Constants, ControlGrid, HybridState, ModelError, load_model, model_from_dict


def test_conveyor_evaluation(conveyor):
    x = np.array([[0.5], [2.5]])
    assert conveyor.f(0, x, conveyor.controls.U[0]).tolist() == [[1.0], [1.0]]
    j, y = conveyor.g(0, np.array([[2.0]]), conveyor.controls.V[0])
    assert j == 0 and y.tolist() == [[0.5]]
    assert conveyor.C_a(0, x, conveyor.controls.V[0]).tolist() == [1.0, 1.0]
    assert conveyor.sd(0, "A", np.array([[2.0]]))[0] == pytest.approx(0.0)
    assert conveyor.sd(0, "C", np.array([[1.0]]))[0] == np.inf


def test_two_chart_jump_changes_chart(two_chart):
    j, y = two_chart.g(0, np.array([[2.0]]), two_chart.controls.V[0])
    assert j == 1 and y.tolist() == [[-1.0, 0.0]]
    j, y = two_chart.g(1, np.array([[1.5, 0.3]]), two_chart.controls.V[0])
    assert j == 0 and y.tolist() == [[0.5]]


def test_oracle_expression_matches_closed_form(conveyor):
    x = np.linspace(0, 3, 31)[:, None]
    assert np.allclose(conveyor.oracle(0, x), library.conveyor_value(x[:, 0]))


def test_constants_alias_and_validation():
    c = Constants.from_dict({"lambda": 2.0, "F": 1, "L": 1, "G": 0, "beta": 1, "xi0": 0.1, "R": 1, "k": 0, "C_prime": 1})
    assert c.lam == 2.0
    assert Constants.from_dict(c.to_dict()) == c
    with pytest.raises(ModelError):
        Constants.from_dict({**c.to_dict(), "lam": -1.0})


def test_control_grid_shapes():
    cg = ControlGrid([[0.0], [1.0]], [[0.0]])
    assert cg.U.shape == (2, 1)
    with pytest.raises(ModelError):
        ControlGrid(np.empty((0, 1)), [[0.0]])


def test_hybrid_state_coerces_coords():
    s = HybridState(0, [1, 2])
    assert s.coords.dtype == float and s.coords.shape == (2,)


def test_load_roundtrip(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(library.switching_doc()))
    m = load_model(p)
    assert m.name == "switching" and len(m.controls.U) == 3
    assert m.C_c(0, 0, np.array([[0.0]]), np.array([[1.5]]))[0] == pytest.approx(0.65)


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d.pop("dynamics"), "missing"),
    (lambda d: d["dynamics"].__setitem__(0, ["1", "2"]), "components"),
    (lambda d: d["charts"][0].__setitem__("A", {"type": "cone"}), "unknown region"),
    (lambda d: d["costs"].__setitem__("K", "x1 +"), "costs.K"),
    (lambda d: d["jump_map"].__setitem__(0, {"chart": 5, "coords": ["0"]}), "targets missing chart"),
    (lambda d: d["jump_map"].__setitem__(0, None), "jump map"),
])
def test_malformed_documents(mutate, msg):
    doc = library.conveyor_doc()
    mutate(doc)
    with pytest.raises(ModelError, match=msg):
        model_from_dict(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ModelError, match="invalid JSON"):
        load_model(p)


def test_linear_growth_bound():
    m = library.linear_field(0.5)
    assert m.linear_growth
    assert m.dynamics_bound_local == pytest.approx(0.5 * (1 + 2.0))


def test_with_changes_does_not_mutate(conveyor):
    m2 = conveyor.with_changes(trunc_radius=1.0)
    assert m2.trunc_radius == 1.0 and conveyor.trunc_radius != 1.0


def test_c_meets_d(switching, conveyor):
    assert not switching.c_meets_d
    doc = library.switching_doc()
    doc["charts"][0]["D"] = {"type": "ball", "center": [0.4], "radius": 0.2}
    assert model_from_dict(doc).c_meets_d
