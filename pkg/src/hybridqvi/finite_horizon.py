"""Finite-horizon value function by backward marching from corrected terminal data.

The terminal data ``h̃`` is built in three passes: free nodes keep ``h``,
nodes of C take ``min(h, N h)``, nodes of A take ``M h̃`` (which reads only
D, already final). Time slices are then filled from ``T`` down to ``0``:
continuation from the later slice first, then controlled jumps, then
autonomous jumps, each reading the slice being built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import HybridGrid, ValueField
from .model import HybridModel, HybridState
from .operators import ATAG, CTAG, FREE, Discretization
from .stationary import Policy
from .validation import sample_region

__all__ = [
    "TimeGrid",
    "TerminalData",
    "TerminalDataError",
    "SubIterationError",
    "MarchResult",
    "SlicedPolicy",
    "check_triangle",
    "triangle_margin",
    "build_terminal_data",
    "terminal_residual",
    "backward_march",
    "slice_residual",
    "terminal_consistency_check",
]


class TerminalDataError(RuntimeError):
    pass


class SubIterationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > 0 or self.steps < 1:
            raise ValueError("need T > 0 and at least one step")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def max_dt(self, model: HybridModel, grid: HybridGrid) -> float:
        """h / (2 F̂): every foot point stays within one cell of its node."""
        return grid.h / (2.0 * model.dynamics_bound_local)

    def check(self, model: HybridModel, grid: HybridGrid) -> None:
        bound = self.max_dt(model, grid)
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(f"time step {self.dt:.4g} exceeds h / (2 F̂) = {bound:.4g}; use at least "
                             f"{int(np.ceil(self.T / bound))} steps")

    @classmethod
    def for_grid(cls, model: HybridModel, grid: HybridGrid, T: float) -> "TimeGrid":
        bound = grid.h / (2.0 * model.dynamics_bound_local)
        return cls(T, int(np.ceil(T / bound - 1e-9)))


# ---------------------------------------------------------------------------
# triangle condition


def triangle_margin(model: HybridModel, sample_density: int = 9, seed: int = 0) -> tuple[float, Optional[dict]]:
    """Smallest sampled C_c(x,z) + C_c(z,y) - C_c(x,y) over x in C, y in D, z in C ∩ D.

    Returns ``(inf, None)`` when C ∩ D is empty.
    """
    rng = np.random.default_rng(seed)
    C = [sample_region(model, i, "C", sample_density, rng) for i in range(model.n_charts)]
    D = [sample_region(model, i, "D", sample_density, rng) for i in range(model.n_charts)]
    Z = []
    for k, pts in enumerate(C):
        if len(pts):
            pts = pts[model.sd(k, "D", pts) <= 0.0]
        Z.append(pts)
    worst, wit = np.inf, None
    for i, xs in enumerate(C):
        for j, ys in enumerate(D):
            for k, zs in enumerate(Z):
                if not (len(xs) and len(ys) and len(zs)):
                    continue
                xs_, ys_, zs_ = xs[:64], ys[:64], zs[:64]
                X = np.repeat(xs_, len(ys_) * len(zs_), axis=0)
                Y = np.tile(np.repeat(ys_, len(zs_), axis=0), (len(xs_), 1))
                Zz = np.tile(zs_, (len(xs_) * len(ys_), 1))
                gap = model.C_c(i, k, X, Zz) + model.C_c(k, j, Zz, Y) - model.C_c(i, j, X, Y)
                m = int(np.argmin(gap))
                if gap[m] < worst:
                    worst = float(gap[m])
                    wit = {"x": (i, X[m].tolist()), "y": (j, Y[m].tolist()), "z": (k, Zz[m].tolist())}
    return worst, wit


def check_triangle(model: HybridModel, sample_density: int = 9, seed: int = 0) -> bool:
    """One controlled jump is never worse than two through C ∩ D (vacuous if that set is empty)."""
    worst, _ = triangle_margin(model, sample_density, seed)
    return worst >= -1e-12


# ---------------------------------------------------------------------------
# terminal data


@dataclass
class TerminalData:
    field: ValueField
    construction: np.ndarray  # 1, 2 or 3: the pass that set each node
    triangle_checked: bool
    residual: dict

    def to_dict(self) -> dict:
        return {
            "triangle_checked": self.triangle_checked,
            "residual": self.residual,
            "nodes_per_pass": {str(k): int(np.sum(self.construction == k)) for k in (1, 2, 3)},
        }


def terminal_residual(model: HybridModel, field_: ValueField, disc: Discretization) -> dict:
    """Residuals of the terminal-data conditions on A, C and free nodes."""
    vals = np.asarray(field_.values)
    grid = field_.grid
    h = np.concatenate([model.h(i, grid.nodes(i)) for i in range(model.n_charts)])
    out = {"A": 0.0, "C": 0.0, "free": 0.0}
    if disc.free_idx.size:
        out["free"] = float(np.max(np.abs(vals[disc.free_idx] - h[disc.free_idx])))
    if disc.C_idx.size:
        nv, _ = disc.N(vals)
        r = np.maximum(vals[disc.C_idx] - nv, vals[disc.C_idx] - h[disc.C_idx])
        out["C"] = float(np.max(np.abs(r)))
    if disc.A_idx.size:
        mv, _ = disc.M(vals)
        out["A"] = float(np.max(np.abs(vals[disc.A_idx] - mv)))
    return out


def build_terminal_data(model: HybridModel, grid: HybridGrid, *, allow_unchecked: bool = False,
                        sample_density: int = 9, seed: int = 0) -> TerminalData:
    """Construct ``h̃`` from ``h``.

    Refuses with :class:`TerminalDataError` when C meets D and the sampled
    triangle condition fails, since no construction is available then.
    ``allow_unchecked`` skips the triangle check (for experiments only).
    """
    if any(ch.h is None for ch in model.charts):
        raise TerminalDataError("terminal cost h is missing on some chart")
    checked = False
    if model.c_meets_d and not allow_unchecked:
        worst, wit = triangle_margin(model, sample_density, seed)
        if worst < -1e-12:
            raise TerminalDataError(f"C meets D and the jump-cost triangle condition fails by {-worst:.3g} at {wit}")
        checked = True
    elif not model.c_meets_d:
        checked = True
    disc = Discretization(model, grid, 1.0, t=0.0)
    h = np.concatenate([model.h(i, grid.nodes(i)) for i in range(model.n_charts)]).astype(float)
    ht = h.copy()
    how = np.ones(grid.size, dtype=np.int8)
    if disc.C_idx.size:
        nv, _ = disc.N(h)
        ht[disc.C_idx] = np.minimum(h[disc.C_idx], nv)
        how[disc.C_idx] = 2
    if disc.A_idx.size:
        mv, _ = disc.M(ht)
        ht[disc.A_idx] = mv
        how[disc.A_idx] = 3
    fld = ValueField(grid, ht, time=None)
    return TerminalData(fld, how, checked, terminal_residual(model, fld, disc))


# ---------------------------------------------------------------------------
# backward march


class SlicedPolicy:
    """Time-indexed policy: the decisions of the slice containing ``t``."""

    def __init__(self, policies: list[Policy], time_grid: TimeGrid):
        self.policies = policies
        self.time_grid = time_grid
        self.grid = policies[0].grid

    def _at(self, t: float) -> Policy:
        n = int(np.floor(t / self.time_grid.dt + 1e-9))
        return self.policies[min(max(n, 0), len(self.policies) - 1)]

    def control(self, t, state):
        return self._at(t).control(t, state)

    def autonomous_choice(self, t, state):
        return self._at(t).autonomous_choice(t, state)

    def controlled_jump(self, t, state):
        return self._at(t).controlled_jump(t, state)


@dataclass
class MarchResult:
    time_grid: TimeGrid
    fields: list[ValueField]  # index n holds V(n dt, ·); the last is h̃
    policies: list[Policy]  # index n: decisions used on [n dt, (n+1) dt)
    sub_iterations: list[int]
    residuals: list[dict]
    terminal: TerminalData = None
    extra: dict = field(default_factory=dict)

    @property
    def policy(self) -> SlicedPolicy:
        return SlicedPolicy(self.policies, self.time_grid)

    def value(self, s: float, state: HybridState) -> float:
        """Value at a grid time ``s`` (nearest slice)."""
        n = int(round(s / self.time_grid.dt))
        return self.fields[n].at(state)

    def index(self) -> dict:
        return {
            "T": self.time_grid.T,
            "steps": self.time_grid.steps,
            "dt": self.time_grid.dt,
            "slices": [
                {"n": n, "t": float(n * self.time_grid.dt),
                 "sub_iterations": self.sub_iterations[n] if n < len(self.sub_iterations) else 0,
                 "residual": self.residuals[n] if n < len(self.residuals) else {"A": 0.0, "C": 0.0, "free": 0.0}}
                for n in range(self.time_grid.steps + 1)
            ],
            "terminal": self.terminal.to_dict() if self.terminal is not None else None,
        }

    def index_json(self) -> str:
        return json.dumps(self.index(), indent=2)


def _slice_update(disc: Discretization, V_next: np.ndarray, sub_tol: float, max_sub_iter: int):
    cont, u_arg = disc.continuation(V_next)
    new = cont.copy()
    jump = np.full(new.size, -1, dtype=np.int64)
    v_arg = np.full(new.size, -1, dtype=np.int64)
    subs = 0
    if disc.C_idx.size:
        cc = cont[disc.C_idx]
        D_in_C = np.isin(disc.D_idx, disc.C_idx)
        while True:
            nv, dest = disc.N(new)
            take = nv < cc
            upd = np.where(take, nv, cc)
            change = float(np.max(np.abs(upd - new[disc.C_idx])))
            new[disc.C_idx] = upd
            jump[disc.C_idx] = np.where(take, dest, -1)
            subs += 1
            if not D_in_C.any() or change <= sub_tol:
                break
            if subs >= max_sub_iter:
                worst = int(disc.C_idx[np.argmax(np.abs(upd - disc.N(new)[0]))])
                raise SubIterationError(f"within-slice iteration did not settle after {subs} passes "
                                        f"(change {change:.3g}, worst node {worst})")
    if disc.A_idx.size:
        mv, va = disc.M(new)
        new[disc.A_idx] = mv
        v_arg[disc.A_idx] = va
    return new, u_arg, v_arg, jump, subs


def slice_residual(disc: Discretization, V_now: np.ndarray, V_next: np.ndarray) -> dict:
    """One-step consistency of a slice with the next one, per region."""
    cont, _ = disc.continuation(V_next)
    out = {"A": 0.0, "C": 0.0, "free": 0.0}
    if disc.free_idx.size:
        out["free"] = float(np.max(np.abs(V_now[disc.free_idx] - cont[disc.free_idx])))
    if disc.C_idx.size:
        nv, _ = disc.N(V_now)
        out["C"] = float(np.max(np.abs(V_now[disc.C_idx] - np.minimum(nv, cont[disc.C_idx]))))
    if disc.A_idx.size:
        mv, _ = disc.M(V_now)
        out["A"] = float(np.max(np.abs(V_now[disc.A_idx] - mv)))
    return out


def backward_march(
    model: HybridModel,
    grid: HybridGrid,
    time_grid: TimeGrid,
    terminal: Optional[TerminalData] = None,
    *,
    sub_tol: float = 1e-12,
    max_sub_iter: int = 10_000,
    check_dt: bool = True,
) -> MarchResult:
    """March the discrete finite-horizon QVI from ``T`` down to ``0``.

    Time-dependent dynamics and running cost are evaluated at the slice
    midpoint ``t_n + dt/2``.
    """
    if check_dt:
        time_grid.check(model, grid)
    if terminal is None:
        terminal = build_terminal_data(model, grid)
    dt = time_grid.dt
    steps = time_grid.steps
    fields: list[Optional[ValueField]] = [None] * (steps + 1)
    policies: list[Optional[Policy]] = [None] * steps
    subs = [0] * steps
    res: list[dict] = [None] * steps
    fields[steps] = terminal.field.copy(time=time_grid.T)
    V = np.asarray(terminal.field.values, dtype=float)
    shared = None if model.time_dependent else Discretization(model, grid, dt, t=0.0)
    for n in range(steps - 1, -1, -1):
        t_n = n * dt
        disc = shared if shared is not None else Discretization(model, grid, dt, t=t_n + 0.5 * dt, tags=None)
        new, u_arg, v_arg, jump, k = _slice_update(disc, V, sub_tol, max_sub_iter)
        res[n] = slice_residual(disc, new, V)
        fields[n] = ValueField(grid, new, time=t_n)
        policies[n] = Policy(grid, model.controls, disc.tags, u_arg, v_arg, jump, time=t_n)
        subs[n] = k
        V = new
    return MarchResult(time_grid, fields, policies, subs, res, terminal)


def terminal_consistency_check(model: HybridModel, result: MarchResult, r: float, last: int = 5) -> np.ndarray:
    """max over nodes with |x| <= r of |V(t, x) - h̃(x)| for the final ``last`` slices and t = T.

    Ordered by increasing time, so the last entry (t = T) is zero.
    """
    grid = result.fields[-1].grid
    mask = np.concatenate([np.linalg.norm(grid.nodes(i), axis=-1) <= r for i in range(model.n_charts)])
    if not mask.any():
        raise ValueError(f"no grid nodes with |x| <= {r}")
    ht = np.asarray(result.terminal.field.values)
    k0 = max(0, len(result.fields) - 1 - last)
    return np.array([float(np.max(np.abs(np.asarray(f.values)[mask] - ht[mask]))) for f in result.fields[k0:]])
