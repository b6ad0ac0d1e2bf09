"""Infinite-horizon discounted value function as the fixed point of the discrete QVI.

Each node is updated Jacobi-style from the previous iterate: A nodes take
the best autonomous jump, C nodes the better of the best controlled jump and
the continuation, every other node the continuation. Starting from zero the
iterates increase monotonically to the fixed point.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .grid import ChartGrid, GridSpec, HybridGrid, ValueField, build_grid
from .model import ControlGrid, HybridModel, HybridState
from .operators import ATAG, CTAG, FREE, Discretization
from .validation import ValidationError, validate_model

__all__ = [
    "Policy",
    "SolveConfig",
    "SolveDiagnostics",
    "ConvergenceError",
    "default_dt",
    "bellman_sweep",
    "sweep_with_policy",
    "solve_stationary",
    "qvi_residual",
    "read_policy_csv",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class Policy:
    """Per-node decisions: control index, autonomous jump choice and controlled jump target.

    ``v_index`` is ``-1`` off A; ``jump_to`` holds a global destination node
    on C nodes that jump and ``-1`` everywhere else (including C nodes that
    decline).
    """

    grid: HybridGrid
    controls: ControlGrid
    tags: np.ndarray
    u_index: np.ndarray
    v_index: np.ndarray
    jump_to: np.ndarray
    time: Optional[float] = None

    def _nearest_tagged(self, state: HybridState, tag: int) -> int:
        sl = self.grid.local_slice(state.chart)
        cand = np.flatnonzero(self.tags[sl] == tag)
        if cand.size == 0:
            return -1
        nodes = self.grid.charts[state.chart].nodes[cand]
        k = int(np.argmin(np.linalg.norm(nodes - state.coords, axis=-1)))
        return int(cand[k] + self.grid.offsets[state.chart])

    def control(self, t: float, state: HybridState) -> np.ndarray:
        g = int(self.grid.nearest(state.chart, state.coords[None, :])[0])
        return self.controls.U[self.u_index[g]]

    def autonomous_choice(self, t: float, state: HybridState) -> int:
        g = self._nearest_tagged(state, ATAG)
        return 0 if g < 0 else int(self.v_index[g])

    def controlled_jump(self, t: float, state: HybridState) -> Optional[HybridState]:
        g = self._nearest_tagged(state, CTAG)
        if g < 0 or self.jump_to[g] < 0:
            return None
        return self.grid.node_state(int(self.jump_to[g]))

    def to_csv(self, path) -> None:
        dmax = max(c.dim for c in self.grid.charts)
        names = {FREE: "free", CTAG: "C", ATAG: "A"}
        m = self.controls.U.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "chart"] + [f"x{k + 1}" for k in range(dmax)] + ["tag"]
                       + [f"u{k + 1}" for k in range(m)] + ["action"])
            for g in range(self.grid.size):
                st = self.grid.node_state(g)
                tag = int(self.tags[g])
                if tag == ATAG:
                    action = f"v={int(self.v_index[g])}"
                elif tag == CTAG:
                    action = "decline" if self.jump_to[g] < 0 else f"jump={int(self.jump_to[g])}"
                else:
                    action = "continue"
                coords = [f"{c:.17g}" for c in st.coords] + [""] * (dmax - st.coords.size)
                u = self.controls.U[self.u_index[g]]
                w.writerow([g, st.chart] + coords + [names[tag]] + [f"{c:.17g}" for c in u] + [action])


@dataclass
class SolveConfig:
    dt: Optional[float] = None
    tol: float = 1e-6
    max_iter: int = 200_000
    dtype: type = np.longdouble
    check_model: bool = True
    sample_density: int = 9
    seed: int = 0


@dataclass
class SolveDiagnostics:
    iterations: int
    residual_history: list[float]
    contraction_ratios: list[float]
    clamp_error_bound: float
    converged: bool
    dt: float
    h: float
    tol: float
    discount_per_step: float
    min_increment: float
    residual: dict = field(default_factory=dict)

    @property
    def nondecreasing(self) -> bool:
        return self.min_increment >= 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nondecreasing"] = self.nondecreasing
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def default_dt(model: HybridModel, grid: HybridGrid) -> float:
    """h / (2 F̂): foot points stay within one cell."""
    return grid.h / (2.0 * model.dynamics_bound_local)


def sweep_with_policy(disc: Discretization, V: np.ndarray):
    """One Jacobi sweep; returns the new vector and the argmin choices."""
    cont, u_arg = disc.continuation(V)
    new = cont.copy()
    v_arg = np.full(V.size, -1, dtype=np.int64)
    jump = np.full(V.size, -1, dtype=np.int64)
    if disc.C_idx.size:
        nv, dest = disc.N(V)
        cc = cont[disc.C_idx]
        take = nv < cc
        new[disc.C_idx] = np.where(take, nv, cc)
        jump[disc.C_idx] = np.where(take, dest, -1)
    if disc.A_idx.size:
        mv, va = disc.M(V)
        new[disc.A_idx] = mv
        v_arg[disc.A_idx] = va
    return new, u_arg, v_arg, jump


def bellman_sweep(V: ValueField, model: HybridModel, dt: float, disc: Optional[Discretization] = None) -> ValueField:
    """Apply the discrete QVI map once to ``V``; a fresh field is returned."""
    disc = Discretization(model, V.grid, dt) if disc is None else disc
    new, *_ = sweep_with_policy(disc, np.asarray(V.values))
    return V.copy(values=new)


def qvi_residual(V: ValueField, model: HybridModel, dt: float, disc: Optional[Discretization] = None) -> dict:
    """Max QVI residual on A, C and free nodes."""
    disc = Discretization(model, V.grid, dt) if disc is None else disc
    vals = np.asarray(V.values)
    cont, _ = disc.continuation(vals)
    out = {"A": 0.0, "C": 0.0, "free": 0.0}
    if disc.free_idx.size:
        out["free"] = float(np.max(np.abs(vals[disc.free_idx] - cont[disc.free_idx])))
    if disc.C_idx.size:
        nv, _ = disc.N(vals)
        out["C"] = float(np.max(np.abs(vals[disc.C_idx] - np.minimum(nv, cont[disc.C_idx]))))
    if disc.A_idx.size:
        mv, _ = disc.M(vals)
        out["A"] = float(np.max(np.abs(vals[disc.A_idx] - mv)))
    return out


def solve_stationary(
    model: HybridModel,
    grid: Union[HybridGrid, GridSpec, float],
    config: Optional[SolveConfig] = None,
    *,
    initial: Optional[np.ndarray] = None,
) -> tuple[ValueField, Policy, SolveDiagnostics]:
    """Value iteration from V = 0 until the sup-norm step is at most tol (1 - exp(-lambda dt)).

    Raises :class:`ValidationError` if the model fails its assumption audit
    (unless ``config.check_model`` is off) and :class:`ConvergenceError` if
    ``max_iter`` is reached.
    """
    cfg = config or SolveConfig()
    if cfg.check_model:
        rep = validate_model(model, cfg.sample_density, cfg.seed)
        if not rep.passed:
            raise ValidationError(rep)
    if not isinstance(grid, HybridGrid):
        grid = build_grid(model, grid)
    dt = default_dt(model, grid) if cfg.dt is None else float(cfg.dt)
    if not model.constants.lam * dt > 0:
        raise ValueError("lambda * dt must be positive")
    disc = Discretization(model, grid, dt)
    q = disc.disc
    stop = cfg.tol * (1.0 - q)
    V = np.zeros(grid.size, dtype=cfg.dtype) if initial is None else np.asarray(initial, dtype=cfg.dtype).copy()
    history: list[float] = []
    min_inc = np.inf
    converged = False
    it = 0
    while it < cfg.max_iter:
        new, u_arg, v_arg, jump = sweep_with_policy(disc, V)
        step = new - V
        diff = float(np.max(np.abs(step)))
        min_inc = min(min_inc, float(np.min(step)))
        history.append(diff)
        V = new
        it += 1
        if diff <= stop:
            converged = True
            break
    ratios = [history[n + 1] / history[n] for n in range(len(history) - 1) if history[n] > 0]
    field_ = ValueField(grid, np.asarray(V, dtype=float))
    clamp = disc.max_clamp()
    clamp_bound = clamp * grid.charts[0].gradient_bound(field_.chart_values(0)) if clamp > 0 else 0.0
    for i in range(1, len(grid.charts)):
        if clamp > 0:
            clamp_bound = max(clamp_bound, clamp * grid.charts[i].gradient_bound(field_.chart_values(i)))
    diag = SolveDiagnostics(
        iterations=it, residual_history=history, contraction_ratios=ratios, clamp_error_bound=q * clamp_bound,
        converged=converged, dt=dt, h=grid.h, tol=cfg.tol, discount_per_step=q,
        min_increment=min_inc if history else 0.0,
    )
    if not converged:
        raise ConvergenceError(f"no convergence after {it} sweeps (last step {history[-1]:.3e}, target {stop:.3e})", diag)
    diag.residual = qvi_residual(field_, model, dt, disc)
    policy = Policy(grid, model.controls, disc.tags, u_arg, v_arg, jump)
    return field_, policy, diag


def read_policy_csv(path, model: HybridModel) -> Policy:
    """Read a policy written by :meth:`Policy.to_csv`; the grid is rebuilt from the node coordinates."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty policy file")
    rows.sort(key=lambda r: int(r["node"]))
    by_chart: dict[int, list] = {}
    for r in rows:
        by_chart.setdefault(int(r["chart"]), []).append(r)
    if sorted(by_chart) != list(range(model.n_charts)):
        raise ValueError(f"{path}: charts {sorted(by_chart)} do not match the model")
    charts = []
    for i in range(model.n_charts):
        d = model.charts[i].dim
        pts = np.array([[float(r[f"x{k + 1}"]) for k in range(d)] for r in by_chart[i]])
        axes = [np.unique(pts[:, k]) for k in range(d)]
        charts.append(ChartGrid([a[0] for a in axes], [a[-1] for a in axes], [a.size for a in axes]))
    grid = HybridGrid(charts)
    if grid.size != len(rows):
        raise ValueError(f"{path}: node coordinates do not form a rectilinear grid")
    names = {"free": FREE, "C": CTAG, "A": ATAG}
    m = model.controls.U.shape[1]
    tags = np.array([names[r["tag"]] for r in rows], dtype=np.int8)
    u = np.array([[float(r[f"u{k + 1}"]) for k in range(m)] for r in rows])
    dist = np.linalg.norm(u[:, None, :] - model.controls.U[None, :, :], axis=-1)
    u_index = np.argmin(dist, axis=1)
    if np.any(dist[np.arange(len(rows)), u_index] > 1e-9):
        raise ValueError(f"{path}: controls do not match the model's control samples")
    v_index = np.full(len(rows), -1, dtype=np.int64)
    jump_to = np.full(len(rows), -1, dtype=np.int64)
    for g, r in enumerate(rows):
        a = r["action"]
        if a.startswith("v="):
            v_index[g] = int(a[2:])
        elif a.startswith("jump="):
            jump_to[g] = int(a[5:])
    return Policy(grid, model.controls, tags, u_index, v_index, jump_to)
