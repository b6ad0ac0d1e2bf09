"""Trajectory simulation: RK4 arcs, hitting-time localization and jumps.

Arcs are integrated with fixed-step classical RK4 on the state augmented by
the running-cost integrals. A sign change of the signed distance to A (or
to C, on a fresh contact) inside a step is refined by bisection on the
partial step length, so hitting times are accurate to ``event_tol``.

Controls are piecewise constant over integration steps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np

from .model import HybridModel, HybridState, ModelError
from .regions import BOUNDARY_TOL
from .validation import sample_chart, sample_region

__all__ = [
    "ModelConsistencyError",
    "ZenoGuardError",
    "Controller",
    "ExplicitControl",
    "JumpEvent",
    "Arc",
    "Hit",
    "TrajectoryRecord",
    "integrate_arc",
    "apply_autonomous_jump",
    "simulate",
    "flow",
    "default_step",
    "cost_bounds",
]

EVENT_TOL = 1e-10


class ModelConsistencyError(RuntimeError):
    """The model contradicts its own assumptions along a trajectory."""


class ZenoGuardError(RuntimeError):
    """Too many jumps in one simulation."""


class Controller(Protocol):
    def control(self, t: float, state: HybridState) -> np.ndarray: ...

    def autonomous_choice(self, t: float, state: HybridState) -> int: ...

    def controlled_jump(self, t: float, state: HybridState) -> Optional[HybridState]: ...


class ExplicitControl:
    """Open- or closed-loop control given explicitly.

    ``u``: constant control vector or ``u(t, state)``; ``v``: index into the
    discrete control samples or ``v(t, state)``; ``jumps``: a schedule of
    ``(time, destination)`` pairs, each taken at the first moment at or after
    its time when the state lies in C, or a callable ``jumps(t, state)``
    returning a destination or ``None``. A schedule makes the controller
    single-use.
    """

    def __init__(self, model: HybridModel, u=None, v: Union[int, Callable] = 0,
                 jumps: Union[None, Sequence, Callable] = None):
        self.model = model
        self._u = model.controls.U[0] if u is None else u
        self._v = v
        self._jumps = list(jumps) if isinstance(jumps, (list, tuple)) else jumps

    def control(self, t, state):
        u = self._u(t, state) if callable(self._u) else self._u
        return np.atleast_1d(np.asarray(u, dtype=float))

    def autonomous_choice(self, t, state):
        return int(self._v(t, state)) if callable(self._v) else int(self._v)

    def controlled_jump(self, t, state):
        if self._jumps is None:
            return None
        if callable(self._jumps):
            return self._jumps(t, state)
        if self._jumps and self._jumps[0][0] <= t + EVENT_TOL:
            return self._jumps.pop(0)[1]
        return None

    def next_decision(self, t):
        """Next time a declined controlled jump may be reconsidered; None means every step."""
        if self._jumps is None:
            return np.inf
        if callable(self._jumps):
            return None
        return self._jumps[0][0] if self._jumps else np.inf


@dataclass
class JumpEvent:
    time: float
    kind: str  # "autonomous" | "controlled"
    pre: HybridState
    post: HybridState
    choice: Union[int, list]
    cost: float
    discounted_cost: float


@dataclass
class Arc:
    t0: float
    t1: float
    chart: int
    times: np.ndarray
    path: np.ndarray
    running_cost: float  # undiscounted integral of K
    discounted_running_cost: float
    cost_samples: np.ndarray  # cumulative (plain, discounted) at each sample


@dataclass
class Hit:
    kind: str  # "A" | "C"
    state: HybridState
    time: float


@dataclass
class TrajectoryRecord:
    mode: str  # "stationary" | "finite"
    arcs: list[Arc] = field(default_factory=list)
    events: list[JumpEvent] = field(default_factory=list)
    running_cost_integral: float = 0.0
    terminal_cost: float = 0.0
    total_cost: float = 0.0
    horizon: float = 0.0
    truncation_bound: float = 0.0
    destination_tol: float = BOUNDARY_TOL

    def ledger_total(self) -> float:
        """Total cost recomputed from arcs, events and terminal cost."""
        if self.mode == "stationary":
            run = sum(a.discounted_running_cost for a in self.arcs)
            jumps = sum(e.discounted_cost for e in self.events)
        else:
            run = sum(a.running_cost for a in self.arcs)
            jumps = sum(e.cost for e in self.events)
        return run + jumps + self.terminal_cost

    @property
    def event_times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])

    def final_state(self) -> HybridState:
        a = self.arcs[-1]
        return HybridState(a.chart, a.path[-1])

    def to_csv(self, path) -> None:
        dmax = max([a.path.shape[1] for a in self.arcs] + [1])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "chart"] + [f"x{k + 1}" for k in range(dmax)] + ["event_kind", "cost_increment", "discounted_increment"])
            for t, ch, x, kind, inc, dinc in self._rows_ordered():
                coords = [f"{c:.17g}" for c in x] + [""] * (dmax - len(x))
                w.writerow([f"{t:.17g}", ch] + coords + [kind, f"{inc:.17g}", f"{dinc:.17g}"])

    def _rows_ordered(self):
        # events are emitted right after the arc that ends at them
        rows = []
        ev = list(self.events)
        for a in self.arcs:
            prev = np.zeros(2)
            for t, x, c in zip(a.times, a.path, a.cost_samples):
                rows.append((float(t), a.chart, x, "", float(c[0] - prev[0]), float(c[1] - prev[1])))
                prev = c
            while ev and ev[0].time <= a.t1 + EVENT_TOL and _ends_at(a, ev[0]):
                e = ev.pop(0)
                rows.append((e.time, e.post.chart, e.post.coords, e.kind, e.cost,
                             e.discounted_cost if self.mode == "stationary" else e.cost))
        if self.mode == "finite":
            fs = self.final_state()
            rows.append((self.horizon, fs.chart, fs.coords, "terminal", self.terminal_cost, self.terminal_cost))
        return rows

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k, a in enumerate(self.arcs):
                for t, x, c in zip(a.times, a.path, a.cost_samples):
                    fh.write(json.dumps({"type": "sample", "arc": k, "t": float(t), "chart": a.chart,
                                         "x": x.tolist(), "running_cost": float(c[0]),
                                         "discounted_running_cost": float(c[1])}) + "\n")
            for e in self.events:
                fh.write(json.dumps({
                    "type": "event", "t": e.time, "kind": e.kind,
                    "pre": {"chart": e.pre.chart, "x": e.pre.coords.tolist()},
                    "post": {"chart": e.post.chart, "x": e.post.coords.tolist()},
                    "choice": e.choice, "cost": e.cost, "discounted_cost": e.discounted_cost,
                }) + "\n")
            fh.write(json.dumps({
                "type": "summary", "mode": self.mode, "horizon": self.horizon,
                "running_cost_integral": self.running_cost_integral, "terminal_cost": self.terminal_cost,
                "total_cost": self.total_cost, "ledger_total": self.ledger_total(),
                "truncation_bound": self.truncation_bound, "n_events": len(self.events),
            }) + "\n")


def _ends_at(arc: Arc, e: JumpEvent) -> bool:
    return e.pre.chart == arc.chart and abs(e.time - arc.t1) <= 1e-9


# ---------------------------------------------------------------------------
# integration


def default_step(model: HybridModel) -> float:
    """min(0.01, beta / (10 F̂)): no event can be stepped over."""
    return min(0.01, model.constants.beta / (10.0 * model.dynamics_bound_local))


def _rhs(model, i, u, lam):
    def rhs(t, y):
        x = y[:-2]
        fx = model.f(i, x, u, t)[0]
        k = model.K(i, x, u, t)[0]
        return np.concatenate([fx, [k, k * np.exp(-lam * t)]])

    return rhs


def _rk4(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + h / 2 * k1)
    k3 = rhs(t + h / 2, y + h / 2 * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _bisect(fn, lo, hi, tol):
    """Smallest tau in (lo, hi] with fn(tau) <= 0, given fn(lo) > 0 >= fn(hi)."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def _as_control_fn(u) -> Callable:
    if callable(u):
        return u
    if hasattr(u, "control"):
        return u.control
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    return lambda t, s: arr


def integrate_arc(
    model: HybridModel,
    x0: HybridState,
    t0: float,
    u,
    t_max: float,
    *,
    dt: Optional[float] = None,
    discount: Optional[float] = None,
    watch_C: bool = True,
    event_tol: float = EVENT_TOL,
) -> tuple[Arc, Optional[Hit]]:
    """Integrate one continuous arc from ``x0`` until A or C is hit, or until ``t_max``.

    ``u`` is a control vector, a callable ``u(t, state)`` or a controller.
    ``discount`` defaults to the model's lambda (use 0 for finite-horizon
    costs). With ``watch_C`` false, C contacts are ignored until the path
    has left C once (used after declining a controlled jump).
    Raises :class:`ModelConsistencyError` if the path leaves the chart
    domain anywhere other than through A.
    """
    if not t0 < t_max:
        raise ValueError("need t0 < t_max")
    i = x0.chart
    ch = model.check_chart(i)
    lam = model.constants.lam if discount is None else discount
    h = default_step(model) if dt is None else float(dt)
    ctrl = _as_control_fn(u)
    y = np.concatenate([x0.coords, [0.0, 0.0]])
    t = float(t0)
    times, path, costs = [t], [y[:-2].copy()], [y[-2:].copy()]
    sdA = lambda x: model.sd(i, "A", x)[0]  # noqa: E731
    sdC = lambda x: model.sd(i, "C", x)[0]  # noqa: E731
    inside_C = sdC(y[:-2]) <= 0.0
    armed = watch_C and not inside_C
    hit = None
    while t < t_max - 1e-14:
        step = min(h, t_max - t)
        u_now = np.atleast_1d(np.asarray(ctrl(t, HybridState(i, y[:-2])), dtype=float))
        rhs = _rhs(model, i, u_now, lam)
        y_new = _rk4(rhs, t, y, step)
        x_new = y_new[:-2]
        part = lambda tau: _rk4(rhs, t, y, tau)  # noqa: E731
        cands = []
        if sdA(x_new) <= 0.0:
            cands.append(("A", _bisect(lambda tau: sdA(part(tau)[:-2]), 0.0, step, event_tol)))
        if armed and sdC(x_new) <= 0.0:
            cands.append(("C", _bisect(lambda tau: sdC(part(tau)[:-2]), 0.0, step, event_tol)))
        exit_d = ch.domain.signed_distance(x_new)
        if exit_d > BOUNDARY_TOL:
            tau_exit = _bisect(lambda tau: -(ch.domain.signed_distance(part(tau)[:-2]) - BOUNDARY_TOL), 0.0, step, event_tol)
            if not any(tau <= tau_exit for _, tau in cands):
                raise ModelConsistencyError(
                    f"trajectory leaves the domain of chart {i} at t = {t + tau_exit:.10g} outside A "
                    f"(x = {part(tau_exit)[:-2].tolist()})")
        if cands:
            kind, tau = min(cands, key=lambda c: (c[1], c[0] != "A"))
            y = part(tau)
            t = t + tau
            times.append(t)
            path.append(y[:-2].copy())
            costs.append(y[-2:].copy())
            hit = Hit(kind, HybridState(i, y[:-2]), t)
            break
        y = y_new
        t = t + step
        times.append(t)
        path.append(x_new.copy())
        costs.append(y[-2:].copy())
        now_inside = sdC(x_new) <= 0.0
        if not now_inside and watch_C:
            armed = True
    costs = np.array(costs)
    arc = Arc(float(t0), float(t), i, np.array(times), np.array(path), float(costs[-1, 0]), float(costs[-1, 1]), costs)
    return arc, hit


def apply_autonomous_jump(model: HybridModel, x: HybridState, v, tol: float = BOUNDARY_TOL) -> HybridState:
    """g(x, v) for a state on A; ``v`` is an index into the discrete samples or a control vector."""
    if not model.state_in(x, "A", tol):
        raise ModelConsistencyError(f"{x} is not on A (signed distance {model.sd(x.chart, 'A', x.coords)[0]:.3g})")
    vv = model.controls.V[v] if np.ndim(v) == 0 and isinstance(v, (int, np.integer)) else np.asarray(v, dtype=float)
    j, y = model.g(x.chart, x.coords[None, :], vv)
    post = HybridState(j, y[0])
    if model.sd(j, "D", post.coords)[0] > tol:
        raise ModelConsistencyError(f"jump map sends {x} to {post}, outside D")
    if model.sd(j, "A", post.coords)[0] < model.constants.beta - 1e-6:
        raise ModelConsistencyError(f"jump lands within beta of A: {post}")
    return post


def cost_bounds(model: HybridModel, density: int = 9, seed: int = 0) -> tuple[float, float]:
    """Sampled sup of K and of the jump costs over the truncated domain."""
    rng = np.random.default_rng(seed)
    Kmax, Cmax = 0.0, 0.0
    D = [(j, sample_region(model, j, "D", density, rng)) for j in range(model.n_charts)]
    for i, ch in enumerate(model.charts):
        pts = sample_chart(model, i, density, rng)
        for u in model.controls.U:
            Kmax = max(Kmax, float(model.K(i, pts, u).max()))
        if ch.A is not None:
            a = sample_region(model, i, "A", density, rng)
            if len(a):
                for v in model.controls.V:
                    Cmax = max(Cmax, float(model.C_a(i, a, v).max()))
        if ch.C is not None:
            c = sample_region(model, i, "C", density, rng)
            for j, d in D:
                if len(c) and len(d):
                    Cmax = max(Cmax, float(model.C_c(i, j, np.repeat(c, len(d), 0), np.tile(d, (len(c), 1))).max()))
    return Kmax, Cmax


def simulate(
    model: HybridModel,
    x0: HybridState,
    controller,
    *,
    horizon: str = "stationary",
    tail_tol: float = 1e-8,
    s: float = 0.0,
    T: Optional[float] = None,
    dt: Optional[float] = None,
    max_jumps: int = 10_000,
    destination_tol: Optional[float] = None,
    bounds: Optional[tuple[float, float]] = None,
) -> TrajectoryRecord:
    """Simulate a hybrid trajectory and its cost.

    ``controller`` is a :class:`~hybridqvi.stationary.Policy` (or any object
    with ``control``, ``autonomous_choice`` and ``controlled_jump``) or an
    :class:`ExplicitControl`. In ``"stationary"`` mode the discounted cost is
    accumulated until the discounted tail bound drops below ``tail_tol``; in
    ``"finite"`` mode the undiscounted cost over ``[s, T]`` plus ``h(X(T))``.
    """
    if horizon not in ("stationary", "finite"):
        raise ValueError("horizon must be 'stationary' or 'finite'")
    c = model.constants
    lam = c.lam if horizon == "stationary" else 0.0
    dest_tol = destination_tol
    if dest_tol is None:
        dest_tol = 0.5 * controller.grid.h + BOUNDARY_TOL if hasattr(controller, "grid") else BOUNDARY_TOL
    rec = TrajectoryRecord(mode=horizon, destination_tol=dest_tol)
    if horizon == "stationary":
        Kbar, Cbar = cost_bounds(model) if bounds is None else bounds
        sep = c.beta / model.dynamics_bound_local
        tail_const = Kbar / c.lam + (Cbar / (1.0 - np.exp(-c.lam * sep)) if model.has_jumps else 0.0)
        t_end = s + (np.log(tail_const / tail_tol) / c.lam if tail_const > tail_tol else 0.0) + 1e-9
        t_end = max(t_end, s + 1e-9)
        rec.truncation_bound = float(np.exp(-c.lam * (t_end - s)) * tail_const)
    else:
        if T is None or not T > s:
            raise ValueError("finite horizon needs T > s")
        t_end = float(T)
    rec.horizon = t_end
    step = default_step(model) if dt is None else float(dt)
    t = float(s)
    state = x0
    while True:
        # decisions at the current point: initial state, landing points, hitting points
        declined = False
        while t < t_end:
            if model.state_in(state, "A", 0.0):
                v = controller.autonomous_choice(t, state)
                post = apply_autonomous_jump(model, state, v)
                cost = float(model.C_a(state.chart, state.coords[None, :], model.controls.V[v])[0])
                rec.events.append(JumpEvent(t, "autonomous", state, post, int(v), cost, cost * np.exp(-lam * (t - s))))
                state = post
            elif not declined and model.state_in(state, "C", 0.0):
                dest = controller.controlled_jump(t, state)
                if dest is None:
                    declined = True
                    continue
                if model.sd(dest.chart, "D", dest.coords)[0] > dest_tol:
                    raise ModelConsistencyError(f"controlled jump destination {dest} is not in D")
                cost = float(model.C_c(state.chart, dest.chart, state.coords[None, :], dest.coords[None, :])[0])
                rec.events.append(JumpEvent(t, "controlled", state, dest, dest.coords.tolist(), cost,
                                            cost * np.exp(-lam * (t - s))))
                state = dest
            else:
                break
            if len(rec.events) > max_jumps:
                raise ZenoGuardError(f"more than {max_jumps} jumps before t = {t:.6g}")
        if t >= t_end:
            break
        t_stop = t_end
        if declined:
            # sitting in C: the controller may still jump later, so return at its next decision time
            nxt = getattr(controller, "next_decision", lambda _t: None)(t)
            t_stop = min(t_end, t + step if nxt is None else max(nxt, t + EVENT_TOL))
        arc, hit = integrate_arc(model, state, t, controller, t_stop, dt=dt, discount=lam)
        # integrate_arc discounts from time zero; re-reference to s
        scale = np.exp(lam * s)
        arc.discounted_running_cost *= scale
        arc.cost_samples = arc.cost_samples * np.array([1.0, scale])
        rec.arcs.append(arc)
        t = arc.t1
        state = HybridState(arc.chart, arc.path[-1]) if hit is None else hit.state
        if hit is None and t >= t_end:
            break
    rec.running_cost_integral = float(sum(a.discounted_running_cost if horizon == "stationary" else a.running_cost
                                          for a in rec.arcs))
    if horizon == "finite":
        fs = rec.final_state() if rec.arcs else state
        rec.terminal_cost = float(model.h(fs.chart, fs.coords[None, :])[0])
    rec.total_cost = rec.ledger_total()
    return rec


def flow(model: HybridModel, x0: HybridState, u, t1: float, *, t0: float = 0.0, dt: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Event-free RK4 flow of one chart over ``[t0, t1]``; returns (times, path)."""
    h = default_step(model) if dt is None else float(dt)
    ctrl = _as_control_fn(u)
    n = max(1, int(np.ceil((t1 - t0) / h - 1e-12)))
    ts = np.linspace(t0, t1, n + 1)
    y = np.concatenate([x0.coords, [0.0, 0.0]])
    path = [x0.coords.copy()]
    for a, b in zip(ts[:-1], ts[1:]):
        u_now = np.atleast_1d(np.asarray(ctrl(a, HybridState(x0.chart, y[:-2])), dtype=float))
        y = _rk4(_rhs(model, x0.chart, u_now, 0.0), a, y, b - a)
        path.append(y[:-2].copy())
    return ts, np.array(path)
