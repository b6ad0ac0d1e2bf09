"""Nonlocal jump operators, Hamiltonians and the semi-Lagrangian update.

Pointwise forms (:func:`M_op`, :func:`N_op`, :func:`continuation_update`,
the Hamiltonians) evaluate at a single hybrid state and are the reference
definitions. :class:`Discretization` precomputes the same operators for
every grid node so a Bellman sweep is a handful of array operations; the
test-suite checks both routes agree node by node.

All minima break ties towards the lowest index (``np.argmin`` semantics).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import HybridGrid, ValueField
from .model import HybridModel, HybridState
from .regions import BOUNDARY_TOL

__all__ = [
    "FREE",
    "CTAG",
    "ATAG",
    "OperatorError",
    "tag_nodes",
    "destination_nodes",
    "M_op",
    "N_op",
    "hamiltonian_stationary",
    "hamiltonian_time",
    "continuation_update",
    "Discretization",
    "GrowthTransform",
    "to_bounded",
    "from_bounded",
    "in_growth_class",
]

FREE, CTAG, ATAG = 0, 1, 2


class OperatorError(ValueError):
    pass


def tag_nodes(model: HybridModel, grid: HybridGrid, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Region tag per node: A wins over C (they are disjoint under the separation assumption)."""
    tags = np.full(grid.size, FREE, dtype=np.int8)
    for i in range(model.n_charts):
        sl = grid.local_slice(i)
        nodes = grid.nodes(i)
        t = tags[sl]
        t[model.sd(i, "C", nodes) <= tol] = CTAG
        t[model.sd(i, "A", nodes) <= tol] = ATAG
    return tags


def destination_nodes(model: HybridModel, grid: HybridGrid) -> np.ndarray:
    """Global indices of nodes within half a cell of D (the discrete destination set)."""
    out = []
    for i in range(model.n_charts):
        nodes = grid.nodes(i)
        half = 0.5 * grid.charts[i].h
        out.append(grid.global_index(i, np.flatnonzero(model.sd(i, "D", nodes) <= half)))
    return np.concatenate(out).astype(np.int64) if out else np.empty(0, np.int64)


# ---------------------------------------------------------------------------
# pointwise operators


def M_op(V: ValueField, x: HybridState, model: HybridModel, tol: float = BOUNDARY_TOL) -> tuple[float, int]:
    """Best autonomous jump: min over v of V(g(x, v)) + C_a(x, v). Returns (value, v index)."""
    V_samples = model.controls.V
    if len(V_samples) == 0:
        raise OperatorError("empty discrete control set")
    if not model.state_in(x, "A", tol):
        raise OperatorError(f"{x} is not in A")
    best, arg = np.inf, -1
    for k, v in enumerate(V_samples):
        j, y = model.g(x.chart, x.coords[None, :], v)
        val = V.interpolate(j, y)[0] + model.C_a(x.chart, x.coords[None, :], v)[0]
        if val < best:
            best, arg = val, k
    return float(best), arg


def N_op(V: ValueField, x: HybridState, model: HybridModel, destinations: Optional[Sequence[int]] = None,
         tol: float = BOUNDARY_TOL) -> tuple[float, int]:
    """Best controlled jump over destination grid nodes: min V(x') + C_c(x, x').

    ``destinations`` are global node indices of ``V.grid`` (default: all D
    nodes). Returns (value, global node index of the minimizer).
    """
    if not model.state_in(x, "C", tol):
        raise OperatorError(f"{x} is not in C")
    grid = V.grid
    dest = destination_nodes(model, grid) if destinations is None else np.asarray(destinations, dtype=np.int64)
    if dest.size == 0:
        raise OperatorError("empty destination set")
    best, arg = np.inf, -1
    for g in dest:
        j = int(grid.chart_of[g])
        y = grid.charts[j].nodes[g - grid.offsets[j]]
        val = V.values[g] + model.C_c(x.chart, j, x.coords[None, :], y[None, :])[0]
        if val < best:
            best, arg = val, int(g)
    return float(best), arg


def _check_p(x: HybridState, p, model) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (model.check_chart(x.chart).dim,):
        raise OperatorError(f"gradient has shape {p.shape}, chart dimension is {model.charts[x.chart].dim}")
    return p


def hamiltonian_stationary(x: HybridState, p, model: HybridModel) -> float:
    """sup_u (-K(x,u) - f(x,u).p) / lambda over the control samples."""
    p = _check_p(x, p, model)
    lam = model.constants.lam
    vals = [(-model.K(x.chart, x.coords, u)[0] - model.f(x.chart, x.coords, u)[0] @ p) / lam for u in model.controls.U]
    return float(max(vals))


def hamiltonian_time(t: float, x: HybridState, p, model: HybridModel) -> float:
    """sup_u (-K(t,x,u) - f(t,x,u).p) over the control samples (no discount factor)."""
    p = _check_p(x, p, model)
    vals = [-model.K(x.chart, x.coords, u, t)[0] - model.f(x.chart, x.coords, u, t)[0] @ p for u in model.controls.U]
    return float(max(vals))


def continuation_update(V: ValueField, x: HybridState, model: HybridModel, dt: float,
                        t: Optional[float] = None) -> tuple[float, int]:
    """One semi-Lagrangian step along the flow.

    Stationary (``t is None``): min_u dt K(x,u) + exp(-lambda dt) V(x + dt f(x,u)).
    Time form: min_u dt K(t,x,u) + V(x + dt f(t,x,u)), with ``V`` the next time slice.
    Foot points outside the grid are clamped to its boundary.
    """
    disc = np.exp(-model.constants.lam * dt) if t is None else 1.0
    te = 0.0 if t is None else t
    best, arg = np.inf, -1
    for k, u in enumerate(model.controls.U):
        foot = x.coords + dt * model.f(x.chart, x.coords, u, te)[0]
        val = dt * model.K(x.chart, x.coords, u, te)[0] + disc * V.interpolate(x.chart, foot[None, :])[0]
        if val < best:
            best, arg = val, k
    return float(best), arg


# ---------------------------------------------------------------------------
# precomputed node operators


class Discretization:
    """Node-level operators of the discrete QVI on a fixed grid.

    ``t=None`` builds the stationary (discounted) continuation; otherwise
    dynamics and running cost are evaluated at time ``t`` and no discount
    is applied.
    """

    def __init__(self, model: HybridModel, grid: HybridGrid, dt: float, t: Optional[float] = None,
                 tags: Optional[np.ndarray] = None, dest: Optional[np.ndarray] = None):
        if not dt > 0:
            raise OperatorError("time step must be positive")
        self.model = model
        self.grid = grid
        self.dt = float(dt)
        self.t = t
        self.disc = float(np.exp(-model.constants.lam * dt)) if t is None else 1.0
        te = 0.0 if t is None else float(t)
        self.tags = tag_nodes(model, grid) if tags is None else tags
        self.A_idx = np.flatnonzero(self.tags == ATAG)
        self.C_idx = np.flatnonzero(self.tags == CTAG)
        self.free_idx = np.flatnonzero(self.tags == FREE)
        self.D_idx = destination_nodes(model, grid) if dest is None else dest
        ncorner = max(2 ** c.dim for c in grid.charts)
        U = model.controls.U
        N = grid.size
        self.foot_idx = np.zeros((len(U), N, ncorner), dtype=np.int64)
        self.foot_w = np.zeros((len(U), N, ncorner))
        self.clamp = np.zeros((len(U), N))
        self.dtK = np.zeros((len(U), N))
        for i, cg in enumerate(grid.charts):
            sl = grid.local_slice(i)
            nodes = cg.nodes
            nc = 2 ** cg.dim
            for k, u in enumerate(U):
                foot = nodes + self.dt * model.f(i, nodes, u, te)
                idx, w, cd = grid.stencil(i, foot)
                self.foot_idx[k, sl, :nc] = idx
                self.foot_w[k, sl, :nc] = w
                self.clamp[k, sl] = cd
                self.dtK[k, sl] = self.dt * model.K(i, nodes, u, te)

        # autonomous jumps: interpolation of V at g(x, v) for every A node and v
        Vs = model.controls.V
        nA = self.A_idx.size
        self.A_idx_t = np.zeros((len(Vs), nA, ncorner), dtype=np.int64)
        self.A_w = np.zeros((len(Vs), nA, ncorner))
        self.A_cost = np.zeros((len(Vs), nA))
        self.A_clamp = np.zeros((len(Vs), nA))
        if nA:
            a_chart = grid.chart_of[self.A_idx]
            for i in np.unique(a_chart):
                rows = np.flatnonzero(a_chart == i)
                nodes = grid.charts[i].nodes[self.A_idx[rows] - grid.offsets[i]]
                for k, v in enumerate(Vs):
                    j, y = model.g(int(i), nodes, v)
                    idx, w, cd = grid.stencil(j, y)
                    nc = idx.shape[1]
                    self.A_idx_t[k, rows, :nc] = idx
                    self.A_w[k, rows, :nc] = w
                    self.A_cost[k, rows] = model.C_a(int(i), nodes, v)
                    self.A_clamp[k, rows] = cd

        # controlled jumps: cost matrix from every C node to every D node
        nC, nD = self.C_idx.size, self.D_idx.size
        self.C_cost = np.full((nC, nD), np.inf)
        if nC and nD:
            c_chart = grid.chart_of[self.C_idx]
            d_chart = grid.chart_of[self.D_idx]
            for i in np.unique(c_chart):
                rows = np.flatnonzero(c_chart == i)
                xs = grid.charts[i].nodes[self.C_idx[rows] - grid.offsets[i]]
                for j in np.unique(d_chart):
                    cols = np.flatnonzero(d_chart == j)
                    ys = grid.charts[j].nodes[self.D_idx[cols] - grid.offsets[j]]
                    cc = model.C_c(int(i), int(j), np.repeat(xs, len(ys), axis=0), np.tile(ys, (len(xs), 1)))
                    self.C_cost[np.ix_(rows, cols)] = cc.reshape(len(xs), len(ys))
        elif nC:
            raise OperatorError("controlled jump nodes exist but no destination nodes")

    # -- operators on a full value vector ---------------------------------
    def continuation(self, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cand = self.dtK + self.disc * np.sum(self.foot_w * V[self.foot_idx], axis=-1)
        arg = np.argmin(cand, axis=0)
        return np.take_along_axis(cand, arg[None, :], axis=0)[0], arg

    def M(self, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.A_idx.size:
            return np.empty(0, dtype=V.dtype), np.empty(0, dtype=np.int64)
        cand = np.sum(self.A_w * V[self.A_idx_t], axis=-1) + self.A_cost
        arg = np.argmin(cand, axis=0)
        return np.take_along_axis(cand, arg[None, :], axis=0)[0], arg

    def N(self, V: np.ndarray, rows: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
        """Values and minimizing global D node for C nodes (all, or the positions ``rows``)."""
        cost = self.C_cost if rows is None else self.C_cost[rows]
        if not cost.size:
            return np.empty(cost.shape[0], dtype=V.dtype), np.empty(cost.shape[0], dtype=np.int64)
        cand = V[self.D_idx][None, :] + cost
        arg = np.argmin(cand, axis=1)
        return cand[np.arange(cand.shape[0]), arg], self.D_idx[arg]

    def max_clamp(self, nodes: Optional[np.ndarray] = None) -> float:
        """Largest foot-point clamp distance among the given nodes (default: free and C nodes)."""
        if nodes is None:
            nodes = np.concatenate([self.free_idx, self.C_idx])
        if not nodes.size:
            return 0.0
        return float(self.clamp[:, nodes].max())


# ---------------------------------------------------------------------------
# growth conditioning


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def _smootherstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6 * s - 15) + 10)


@dataclass(frozen=True)
class GrowthTransform:
    """Cutoff ``xi`` and weight ``exp(-eta xi)`` mapping polynomially growing fields to bounded ones.

    ``xi`` vanishes for ``|x| <= R``, has slope ``< 1`` everywhere and equals
    ``sqrt(1+|x|^2) - offset`` for ``|x| >= 2R``. A slope bound of one makes
    the exact profile ``sqrt(1+|x|^2)`` unreachable from zero at ``R``, hence
    the constant ``offset``; only the behaviour at infinity matters.
    """

    eta: float
    R: float
    lam: Optional[float] = None
    F: Optional[float] = None

    def __post_init__(self):
        if not self.eta > 0 or not self.R > 0:
            raise ValueError("eta and R must be positive")
        if self.lam is not None and self.F is not None and not self.eta < self.lam / self.F:
            raise ValueError(f"eta = {self.eta} must be below lambda/F = {self.lam / self.F}")

    @classmethod
    def for_model(cls, model: HybridModel, eta: Optional[float] = None) -> "GrowthTransform":
        c = model.constants
        return cls(0.5 * c.lam / c.F if eta is None else eta, c.R, c.lam, c.F)

    def _slope(self, r):
        return _smootherstep((r - self.R) / self.R) * r / np.sqrt(1.0 + r * r)

    def _ramp(self, r):
        r = np.asarray(r, dtype=float)
        a = self.R
        b = np.clip(r, a, 2 * a)
        half = 0.5 * (b - a)
        nodes = a + half[..., None] * (_GL_X + 1.0)
        return np.sum(half[..., None] * _GL_W * self._slope(nodes), axis=-1)

    @property
    def offset(self) -> float:
        R2 = 2 * self.R
        return float(np.sqrt(1 + R2 * R2) - self._ramp(R2))

    def xi_radial(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.where(r >= 2 * self.R, np.sqrt(1 + r * r) - self.offset, self._ramp(r))

    def xi(self, x) -> np.ndarray:
        return self.xi_radial(np.linalg.norm(np.atleast_2d(x), axis=-1))

    def grad_xi(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        unit = np.divide(x, r, out=np.zeros_like(x), where=r > 0)
        return self._slope(r) * unit

    def weight(self, grid: HybridGrid) -> np.ndarray:
        return np.concatenate([np.exp(-self.eta * self.xi(cg.nodes)) for cg in grid.charts])


def to_bounded(V: ValueField, tr: GrowthTransform) -> ValueField:
    """w = V exp(-eta xi(x)) nodewise."""
    return V.copy(values=V.values * tr.weight(V.grid))


def from_bounded(W: ValueField, tr: GrowthTransform) -> ValueField:
    return W.copy(values=W.values / tr.weight(W.grid))


def in_growth_class(V: ValueField, eta: float, tol: float = 1e-3, band: float = 0.1) -> bool:
    """Grid proxy for membership in the growth class: |V| exp(-eta |x|) must be at most ``tol``
    on the outer radial ``band`` of every chart grid."""
    for i, cg in enumerate(V.grid.charts):
        r = np.linalg.norm(cg.nodes, axis=-1)
        outer = r >= (1.0 - band) * r.max()
        weighted = np.abs(V.chart_values(i)[outer]) * np.exp(-eta * r[outer])
        if weighted.size and weighted.max() > tol:
            return False
    return True
