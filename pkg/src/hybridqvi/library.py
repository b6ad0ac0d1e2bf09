"""Reference models with closed-form or enumerable value functions.

Each ``*_doc`` function returns the JSON document of a model (the same
layout :func:`~hybridqvi.model.load_model` reads); the matching builder
without the suffix returns the :class:`~hybridqvi.model.HybridModel`.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import HybridModel, model_from_dict

__all__ = [
    "constant_cost_doc",
    "constant_cost",
    "conveyor_doc",
    "conveyor",
    "conveyor_value",
    "switching_doc",
    "switching",
    "two_chart_doc",
    "two_chart",
    "transport_doc",
    "transport",
    "transport_value",
    "finite_conveyor_doc",
    "finite_conveyor",
    "finite_conveyor_value",
    "linear_field_doc",
    "linear_field",
    "MODELS",
    "write_model_files",
]


def constant_cost_doc(lam: float = 1.0) -> dict:
    """Unit running cost, no motion, no jumps: V = 1/lambda."""
    return {
        "name": "constant_cost",
        "charts": [{"dim": 1, "domain": {"type": "box", "lo": [0.0], "hi": [1.0]}}],
        "dynamics": [["0"]],
        "costs": {"K": "1", "h": "0"},
        "constants": {"lambda": lam, "F": 1.0, "L": 1.0, "G": 0.0, "beta": 1.0, "xi0": 0.25,
                      "R": 1.0, "k": 0.0, "C_prime": 1.0},
        "controls": {"U": [[0.0]], "V": [[0.0]]},
        "oracle": f"1 / {lam!r} + 0 * x1",
    }


def constant_cost(lam: float = 1.0) -> HybridModel:
    return model_from_dict(constant_cost_doc(lam))


def conveyor_doc(lam: float = 1.0) -> dict:
    """Unit-speed motion on [0, 3]; reaching x = 2 costs 1 and resets to 0.5.

    Starting at x < 2 the first jump happens after 2 - x time units and
    every later one 1.5 time units after its predecessor, so
    V(x) = exp(-lam (2 - x)) / (1 - exp(-1.5 lam)).
    """
    q = f"(1 - exp(-1.5 * {lam!r}))"
    return {
        "name": "conveyor",
        "charts": [{
            "dim": 1,
            "domain": {"type": "box", "lo": [0.0], "hi": [3.0]},
            "A": {"type": "halfspace", "normal": [-1.0], "offset": -2.0},
            "D": {"type": "ball", "center": [0.5], "radius": 0.25},
        }],
        "dynamics": [["1"]],
        "jump_map": [{"chart": 0, "coords": ["0.5"]}],
        "costs": {"K": "0", "C_a": "1", "h": "0"},
        "constants": {"lambda": lam, "F": 1.0, "L": 1.0, "G": 0.0, "beta": 1.0, "xi0": 0.25,
                      "R": 1.0, "k": 0.0, "C_prime": 1.0},
        "controls": {"U": [[0.0]], "V": [[0.0]]},
        "oracle": f"piecewise(x1 < 2, exp(-{lam!r} * (2 - x1)) / {q}, 1 / {q})",
    }


def conveyor(lam: float = 1.0) -> HybridModel:
    return model_from_dict(conveyor_doc(lam))


def conveyor_value(x, lam: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    q = 1.0 - np.exp(-1.5 * lam)
    return np.where(x < 2.0, np.exp(-lam * (2.0 - x)) / q, 1.0 / q)


def switching_doc() -> dict:
    """Bistable 1-D flow with a controlled jump set around the stable origin.

    Near the origin the controller may pay to be moved to D near 1.5, from
    where the flow drives the state into the autonomous set at |x| >= 2.5;
    the autonomous jump returns it to D with a choice of landing point.
    """
    return {
        "name": "switching",
        "charts": [{
            "dim": 1,
            "domain": {"type": "box", "lo": [-3.0], "hi": [3.0]},
            "A": {"type": "union", "parts": [
                {"type": "halfspace", "normal": [-1.0], "offset": -2.5},
                {"type": "halfspace", "normal": [1.0], "offset": -2.5},
            ]},
            "C": {"type": "ball", "center": [0.0], "radius": 0.5},
            "D": {"type": "ball", "center": [1.5], "radius": 0.25},
        }],
        "dynamics": [["(1 + 0.5 * u1) * x1 * (abs(x1) - 1)"]],
        "jump_map": [{"chart": 0, "coords": ["1.3 + 0.4 * v1"]}],
        "costs": {"K": "0.2 + 0.1 * u1 * u1", "C_a": "0.5 + 0.3 * v1", "C_c": "0.5 + 0.1 * abs(x1 - y1)", "h": "0"},
        "constants": {"lambda": 1.0, "F": 9.0, "L": 7.5, "G": 0.0, "beta": 0.75, "xi0": 0.05,
                      "R": 2.0, "k": 0.0, "C_prime": 0.5},
        "controls": {"U": [[-1.0], [0.0], [1.0]], "V": [[0.0], [1.0]]},
    }


def switching() -> HybridModel:
    return model_from_dict(switching_doc())


def two_chart_doc() -> dict:
    """A conveyor chart feeding a planar chart that steers back to the conveyor."""
    return {
        "name": "two_chart",
        "charts": [
            {
                "dim": 1,
                "domain": {"type": "box", "lo": [0.0], "hi": [3.0]},
                "A": {"type": "halfspace", "normal": [-1.0], "offset": -2.0},
                "D": {"type": "ball", "center": [0.5], "radius": 0.25},
            },
            {
                "dim": 2,
                "domain": {"type": "box", "lo": [-2.0, -2.0], "hi": [2.0, 2.0]},
                "A": {"type": "halfspace", "normal": [-1.0, 0.0], "offset": -1.5},
                "D": {"type": "ball", "center": [-1.0, 0.0], "radius": 0.3},
            },
        ],
        "dynamics": [["1"], ["1", "0.3 * u1 * (1 - x2 * x2 / 4)"]],
        "jump_map": [
            {"chart": 1, "coords": ["-1", "0"]},
            {"chart": 0, "coords": ["0.5"]},
        ],
        "costs": {"K": ["0.2", "0.1 + 0.1 * min(x2 * x2, 1)"], "C_a": "1", "h": "0"},
        "constants": {"lambda": 1.0, "F": 1.1, "L": 1.0, "G": 0.0, "beta": 1.0, "xi0": 0.25,
                      "R": 1.5, "k": 0.0, "C_prime": 1.0},
        "controls": {"U": [[-1.0], [0.0], [1.0]], "V": [[0.0]]},
    }


def two_chart() -> HybridModel:
    return model_from_dict(two_chart_doc())


def transport_doc() -> dict:
    """Unit drift, no running cost, terminal cost |x|: V(s, x) = |x + T - s|."""
    return {
        "name": "transport",
        "charts": [{"dim": 1, "domain": {"type": "box", "lo": [-3.0], "hi": [None]}}],
        "dynamics": [["1"]],
        "costs": {"K": "0", "h": "abs(x1)"},
        "constants": {"lambda": 1.0, "F": 1.0, "L": 1.0, "G": 0.0, "beta": 1.0, "xi0": 0.25,
                      "R": 1.0, "k": 0.5, "C_prime": 1.0},
        "controls": {"U": [[0.0]], "V": [[0.0]]},
        "trunc_radius": 4.0,
    }


def transport() -> HybridModel:
    return model_from_dict(transport_doc())


def transport_value(s, x, T: float) -> np.ndarray:
    return np.abs(np.asarray(x, dtype=float) + (T - s))


def finite_conveyor_doc() -> dict:
    """Conveyor geometry with terminal cost h(x) = min((2x + 0.5) / 3, 1.5) and no discounting.

    h equals 1 + h(0.5) on all of A, so the constructed terminal data is h
    itself; at most one jump occurs when T <= 1.5.
    """
    doc = conveyor_doc()
    doc["name"] = "finite_conveyor"
    doc["costs"] = {"K": "0", "C_a": "1", "h": "min((2 * x1 + 0.5) / 3, 1.5)"}
    doc["constants"]["k"] = 0.5
    doc.pop("oracle")
    return doc


def finite_conveyor() -> HybridModel:
    return model_from_dict(finite_conveyor_doc())


def finite_conveyor_value(s, x, T: float) -> np.ndarray:
    """Enumerate the single control-free path: V(s, x) for T - s <= 1.5."""
    x = np.asarray(x, dtype=float)
    tau = T - s
    if tau > 1.5:
        raise ValueError("oracle valid only for T - s <= 1.5 (at most one jump)")
    h = lambda y: np.minimum((2.0 * y + 0.5) / 3.0, 1.5)  # noqa: E731
    no_jump = h(x + tau)
    before = 1.0 + h(0.5 + tau - (2.0 - x))
    on_A = 1.0 + h(0.5 + tau)
    return np.where(x >= 2.0, on_A, np.where(x + tau < 2.0, no_jump, before))


def linear_field_doc(L: float = 0.5) -> dict:
    """f(x) = L x on a line: the extremal case of the flow-separation estimate."""
    return {
        "name": "linear_field",
        "charts": [{"dim": 1, "domain": {"type": "box", "lo": [None], "hi": [None]}}],
        "dynamics": [[f"{L!r} * x1"]],
        "dynamics_growth": "linear",
        "costs": {"K": "0", "h": "0"},
        "constants": {"lambda": 1.0, "F": abs(L) or 1.0, "L": abs(L) or 1.0, "G": 0.0, "beta": 1.0,
                      "xi0": 0.25, "R": 1.0, "k": 0.0, "C_prime": 1.0},
        "controls": {"U": [[0.0]], "V": [[0.0]]},
        "trunc_radius": 2.0,
    }


def linear_field(L: float = 0.5) -> HybridModel:
    return model_from_dict(linear_field_doc(L))


MODELS = {
    "constant_cost": constant_cost_doc,
    "conveyor": conveyor_doc,
    "switching": switching_doc,
    "two_chart": two_chart_doc,
    "transport": transport_doc,
    "finite_conveyor": finite_conveyor_doc,
    "linear_field": linear_field_doc,
}


def write_model_files(directory) -> list[Path]:
    """Write every reference model as ``<name>.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, fn in MODELS.items():
        p = d / f"{name}.json"
        p.write_text(json.dumps(fn(), indent=2) + "\n", encoding="utf-8")
        out.append(p)
    return out
