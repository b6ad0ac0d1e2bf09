"""Executable checks grouped into suites.

Every suite returns a :class:`PropertyReport` (named checks with pass/fail,
margin and worst-case witness) except :func:`run_convergence`, which
returns a :class:`ConvergenceStudy`. Randomized suites take a seed and
record it, so a failing witness can be replayed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .finite_horizon import TimeGrid, backward_march, build_terminal_data, terminal_consistency_check
from .grid import GridSpec, HybridGrid, ValueField, build_grid
from .model import HybridModel, HybridState, model_from_dict
from .operators import (
    Discretization,
    GrowthTransform,
    M_op,
    N_op,
    continuation_update,
    from_bounded,
    hamiltonian_stationary,
    to_bounded,
)
from .regions import BOUNDARY_TOL
from .stationary import SolveConfig, default_dt, solve_stationary, sweep_with_policy
from .trajectory import TrajectoryRecord, default_step, flow, simulate
from .validation import _json_default, sample_chart, validate_model

__all__ = [
    "Check",
    "PropertyReport",
    "ConvergenceStudy",
    "run_assumption_audit",
    "run_operator_properties",
    "run_ode_estimates",
    "random_lipschitz_models",
    "run_convergence",
    "run_comparison_shadow",
    "run_solver_properties",
    "run_finite_horizon_properties",
    "run_trajectory_properties",
    "run_all",
    "default_grid_h",
]


@dataclass
class Check:
    name: str
    passed: bool
    margin: float
    witness: Optional[dict] = None
    detail: str = ""


@dataclass
class PropertyReport:
    suite: str
    seed: Optional[int] = None
    checks: list[Check] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, name, passed, margin=0.0, witness=None, detail="") -> Check:
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check {name!r} in suite {self.suite}")
        c = Check(name, bool(passed), float(margin), witness, detail)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "passed": self.passed,
                "checks": [c.__dict__ for c in self.checks], "extra": self.extra}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def table(self) -> str:
        w = max([len(c.name) for c in self.checks] + [5])
        lines = [f"{'suite':<22} {'check':<{w}} {'result':<6} {'margin':>12}  detail"]
        for c in self.checks:
            lines.append(f"{self.suite:<22} {c.name:<{w}} {'pass' if c.passed else 'FAIL':<6} {c.margin:>12.4g}  {c.detail}")
        return "\n".join(lines)


@dataclass
class ConvergenceStudy:
    levels: list[tuple[float, float]]
    errors: list[float]
    kind: str = "stationary"

    def __post_init__(self):
        hs = [h for h, _ in self.levels]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("levels must be strictly refining")

    @property
    def empirical_order(self) -> float:
        """Least-squares slope of log(error) against log(h)."""
        h = np.log([lv[0] for lv in self.levels])
        e = np.log(np.maximum(self.errors, 1e-300))
        return float(np.polyfit(h, e, 1)[0])

    def meets(self, threshold: float) -> bool:
        return all(e > 0 for e in self.errors) and self.empirical_order >= threshold

    def to_dict(self) -> dict:
        return {"kind": self.kind, "levels": [{"h": h, "dt": dt, "error": e} for (h, dt), e in zip(self.levels, self.errors)],
                "empirical_order": self.empirical_order}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def default_grid_h(model: HybridModel, cells: int = 40) -> float:
    """Spacing giving about ``cells`` cells along the widest truncated chart axis."""
    ext = max(float(np.max(hi - lo)) for lo, hi in (model.sampling_box(i) for i in range(model.n_charts)))
    return ext / cells


# ---------------------------------------------------------------------------
# assumptions


def run_assumption_audit(model: HybridModel, sample_density: int = 9, seed: int = 0) -> PropertyReport:
    rep = validate_model(model, sample_density, seed)
    out = PropertyReport("assumptions", seed)
    for e in rep.entries:
        out.add(e.name, e.passed, e.margin if np.isfinite(e.margin) else 0.0, e.witness, e.detail)
    out.extra["c_meets_d"] = rep.c_meets_d
    return out


# ---------------------------------------------------------------------------
# operators


def _random_fields(rng, n, size, scale=1.0):
    base = rng.uniform(0.0, 2.0 * scale, size=(n, size))
    bump = np.abs(rng.normal(0.0, scale, size=(n, size))) * (rng.uniform(size=(n, size)) < 0.5)
    return base, base + bump


def run_operator_properties(model: HybridModel, trials: int = 100, seed: int = 0, grid_h: Optional[float] = None,
                            inject_violation: bool = False) -> PropertyReport:
    """Monotonicity, constant-shift laws, Hamiltonian convexity and agreement of the
    pointwise and precomputed operators on random fields.

    ``inject_violation`` replaces the sweep by a deliberately non-monotone map
    (negative control: the monotonicity check must then fail).
    """
    rng = np.random.default_rng(seed)
    rep = PropertyReport("operators", seed)
    grid = build_grid(model, grid_h or default_grid_h(model))
    dt = default_dt(model, grid)
    disc = Discretization(model, grid, dt)
    q = disc.disc

    def sweep(V):
        new = sweep_with_policy(disc, V)[0]
        return new - 2.0 * V if inject_violation else new

    lo_f, hi_f = _random_fields(rng, trials, grid.size)
    worst, wit = np.inf, None
    for k in range(trials):
        gap = sweep(hi_f[k]) - sweep(lo_f[k])
        m = int(np.argmin(gap))
        if gap[m] < worst:
            worst, wit = float(gap[m]), {"trial": k, "node": m}
    rep.add("sweep_monotone", worst >= -1e-12, worst, wit, f"min S(V2)-S(V1) over {trials} ordered pairs")

    c = float(rng.uniform(0.5, 2.0))
    V = lo_f[0]
    errs = {}
    cont0, _ = disc.continuation(V)
    cont1, _ = disc.continuation(V + c)
    errs["continuation"] = float(np.max(np.abs(cont1 - cont0 - q * c)))
    if disc.A_idx.size:
        errs["M"] = float(np.max(np.abs(disc.M(V + c)[0] - disc.M(V)[0] - c)))
    if disc.C_idx.size:
        errs["N"] = float(np.max(np.abs(disc.N(V + c)[0] - disc.N(V)[0] - c)))
    worst = max(errs.values())
    rep.add("constant_shift", worst <= 1e-12 * (1 + c), -worst, errs, f"shift c = {c:.4g}: M, N move by c, continuation by q c")

    # convexity of H in p
    worst, wit = np.inf, None
    for i, ch in enumerate(model.charts):
        pts = sample_chart(model, i, 4, rng)[:trials]
        for x in pts:
            p1, p2 = rng.normal(size=ch.dim) * 3, rng.normal(size=ch.dim) * 3
            st = HybridState(i, x)
            gap = 0.5 * (hamiltonian_stationary(st, p1, model) + hamiltonian_stationary(st, p2, model)) \
                - hamiltonian_stationary(st, 0.5 * (p1 + p2), model)
            if gap < worst:
                worst, wit = gap, {"chart": i, "x": x, "p1": p1, "p2": p2}
    rep.add("hamiltonian_convex", worst >= -1e-12, worst, wit, "midpoint convexity in p")

    # pointwise definitions agree with the precomputed ones
    field_ = ValueField(grid, lo_f[1])
    cont, _ = disc.continuation(field_.values)
    nodes = rng.choice(grid.size, size=min(trials, grid.size), replace=False)
    worst = 0.0
    for g in nodes:
        val, _ = continuation_update(field_, grid.node_state(int(g)), model, dt)
        worst = max(worst, abs(val - cont[g]))
    if disc.A_idx.size:
        mv, _ = disc.M(field_.values)
        for r in rng.choice(disc.A_idx.size, size=min(20, disc.A_idx.size), replace=False):
            worst = max(worst, abs(M_op(field_, grid.node_state(int(disc.A_idx[r])), model)[0] - mv[r]))
    if disc.C_idx.size:
        nv, _ = disc.N(field_.values)
        for r in rng.choice(disc.C_idx.size, size=min(10, disc.C_idx.size), replace=False):
            worst = max(worst, abs(N_op(field_, grid.node_state(int(disc.C_idx[r])), model, disc.D_idx)[0] - nv[r]))
    rep.add("pointwise_agreement", worst <= 1e-12, -worst, None, "pointwise operators vs node tables")

    tr = GrowthTransform.for_model(model)
    back = from_bounded(to_bounded(field_, tr), tr)
    err = float(np.max(np.abs(back.values - field_.values)))
    rep.add("growth_roundtrip", err <= 1e-12 * (1 + np.max(np.abs(field_.values))), -err, None,
            f"eta = {tr.eta:.4g}")
    return rep


# ---------------------------------------------------------------------------
# ODE estimates


def random_lipschitz_models(n: int, seed: int = 0) -> list[tuple[HybridModel, float]]:
    """Seeded smooth fields with known Lipschitz constants, in one and two dimensions."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        a, b = rng.uniform(0.2, 1.5, 2).tolist(), rng.uniform(0.3, 2.0, 2).tolist()
        c, e = rng.uniform(-np.pi, np.pi, 2).tolist(), rng.uniform(-0.5, 0.5, 2).tolist()
        if k % 2 == 0:
            dyn = [f"{a[0]!r} * sin({b[0]!r} * x1 + {c[0]!r}) + {e[0]!r}"]
            L, F, dim = a[0] * b[0], a[0] + abs(e[0]), 1
        else:
            dyn = [f"{a[0]!r} * sin({b[0]!r} * x2 + {c[0]!r}) + {e[0]!r}",
                   f"{a[1]!r} * cos({b[1]!r} * x1 + {c[1]!r}) + {e[1]!r}"]
            L, F, dim = max(a[0] * b[0], a[1] * b[1]), float(np.hypot(a[0] + abs(e[0]), a[1] + abs(e[1]))), 2
        doc = {
            "name": f"random_field_{k}",
            "charts": [{"dim": dim, "domain": {"type": "box", "lo": [None] * dim, "hi": [None] * dim}}],
            "dynamics": [dyn],
            "costs": {"K": "0"},
            "constants": {"lambda": 1.0, "F": F, "L": L, "G": 0.0, "beta": 1.0, "xi0": 0.1, "R": 1.0,
                          "k": 0.0, "C_prime": 1.0},
            "trunc_radius": 3.0,
        }
        out.append((model_from_dict(doc), float(L)))
    return out


def run_ode_estimates(model: HybridModel, trials: int = 100, seed: int = 0, t_final: float = 1.0,
                      dt: Optional[float] = None) -> PropertyReport:
    """Flow separation |X_x(t) - X_z(t)| <= e^{Lt}|x - z| and speed |X(t) - X(s)| <= F̂|t - s|."""
    rng = np.random.default_rng(seed)
    rep = PropertyReport("ode_estimates", seed)
    L = model.constants.L
    Fh = model.dynamics_bound_local
    step = dt or min(default_step(model), 0.01)
    worst_ratio, wit = 0.0, None
    worst_speed, wit_s = 0.0, None
    for k in range(trials):
        i = int(rng.integers(model.n_charts))
        lo, hi = model.sampling_box(i)
        lo, hi = 0.5 * lo, 0.5 * hi
        x = rng.uniform(lo, hi)
        z = np.clip(x + rng.normal(size=x.size) * rng.choice([1e-3, 1e-1, 1.0]), lo, hi)
        u = model.controls.U[int(rng.integers(len(model.controls.U)))]
        with np.errstate(over="ignore", invalid="ignore"):  # escaping paths are cut below
            ts, px = flow(model, HybridState(i, x), u, t_final, dt=step)
            _, pz = flow(model, HybridState(i, z), u, t_final, dt=step)
        # the constants only hold on the truncated domain: stop at the first exit of either path
        box_lo, box_hi = model.sampling_box(i)
        inside = np.all((px >= box_lo) & (px <= box_hi) & (pz >= box_lo) & (pz <= box_hi), axis=-1)
        n_in = int(np.argmin(inside)) if not inside.all() else inside.size
        if n_in < 2:
            continue
        ts, px, pz = ts[:n_in], px[:n_in], pz[:n_in]
        d0 = np.linalg.norm(x - z)
        if d0 > 0:
            ratio = np.linalg.norm(px - pz, axis=-1) / (np.exp(L * ts) * d0)
            j = int(np.argmax(ratio[1:])) + 1
            if ratio[j] > worst_ratio:
                worst_ratio, wit = float(ratio[j]), {"chart": i, "x": x, "z": z, "u": u, "t": float(ts[j])}
        sp = np.linalg.norm(np.diff(px, axis=0), axis=-1) / np.diff(ts)
        a, b = sorted(rng.integers(0, len(ts), 2))
        if b > a:
            sp = np.append(sp, np.linalg.norm(px[b] - px[a]) / (ts[b] - ts[a]))
        if sp.max() > worst_speed:
            worst_speed, wit_s = float(sp.max()), {"chart": i, "x": x, "u": u}
    rep.add("flow_separation", worst_ratio <= 1 + 1e-6, 1 - worst_ratio, wit,
            f"max |X_x-X_z| / (e^(Lt)|x-z|) = {worst_ratio:.12g}")
    rep.add("flow_speed", worst_speed <= Fh * (1 + 1e-9), Fh - worst_speed, wit_s,
            f"max |X(t)-X(s)|/|t-s| = {worst_speed:.6g} vs F̂ = {Fh:.6g}")
    rep.extra["max_separation_ratio"] = worst_ratio
    return rep


# ---------------------------------------------------------------------------
# convergence


def _oracle_of(model: HybridModel, oracle):
    if oracle is not None:
        return oracle
    if not model.has_oracle:
        raise ValueError(f"model {model.name!r} has no oracle")
    return model.oracle


def run_convergence(
    model: HybridModel,
    oracle: Optional[Callable] = None,
    levels: int = 4,
    h0: Optional[float] = None,
    *,
    kind: str = "stationary",
    T: float = 1.0,
    tol: float = 1e-9,
    mask: Optional[Callable] = None,
) -> ConvergenceStudy:
    """Sup-norm error against an oracle while h and dt are halved together.

    Stationary oracles are called as ``oracle(chart, x)``; finite-horizon
    oracles as ``oracle(chart, x)`` for the value at time 0. ``mask(chart, x)``
    restricts the error to a subset of nodes.
    """
    orc = _oracle_of(model, oracle)
    h0 = h0 or default_grid_h(model, 20)
    lv, errs = [], []
    for k in range(levels):
        h = h0 / 2 ** k
        grid = build_grid(model, h)
        if kind == "stationary":
            V, _, diag = solve_stationary(model, grid, SolveConfig(tol=tol, check_model=False))
            dt, vals = diag.dt, V.values
        elif kind == "finite":
            tg = TimeGrid.for_grid(model, grid, T)
            res = backward_march(model, grid, tg)
            dt, vals = tg.dt, res.fields[0].values
        else:
            raise ValueError("kind must be 'stationary' or 'finite'")
        err = 0.0
        for i in range(model.n_charts):
            x = grid.nodes(i)
            e = np.abs(vals[grid.local_slice(i)] - orc(i, x))
            if mask is not None:
                e = e[mask(i, x)]
            if e.size:
                err = max(err, float(e.max()))
        lv.append((grid.h, dt))
        errs.append(err)
    return ConvergenceStudy(lv, errs, kind)


# ---------------------------------------------------------------------------
# comparison shadow


def run_comparison_shadow(model: HybridModel, margin: float = 0.1, sweeps: int = 100, grid_h: Optional[float] = None,
                          tol: float = 1e-10, adversarial: bool = False) -> PropertyReport:
    """Discrete comparison: a sub- and a supersolution built from the solution stay ordered under sweeps.

    ``V_super = V + margin/(1-q)`` and ``V_sub = V - margin/(1-q)`` with
    ``q = exp(-lambda dt)``. With ``adversarial`` the two are swapped, so the
    ordering check must fail.
    """
    rep = PropertyReport("comparison_shadow")
    grid = build_grid(model, grid_h or default_grid_h(model))
    V, _, diag = solve_stationary(model, grid, SolveConfig(tol=tol, check_model=False))
    disc = Discretization(model, grid, diag.dt)
    shift = margin / (1.0 - disc.disc)
    base = np.asarray(V.values, dtype=np.longdouble)
    sup, sub = base + shift, base - shift
    if adversarial:
        sup, sub = sub, sup
    S = lambda W: sweep_with_policy(disc, W)[0]  # noqa: E731
    slack = 10 * tol
    sup_def = float(np.max(S(sup) - sup))
    sub_def = float(np.max(sub - S(sub)))
    rep.add("supersolution", sup_def <= slack, slack - sup_def, None, f"max S(V+)-V+ = {sup_def:.3g}")
    rep.add("subsolution", sub_def <= slack, slack - sub_def, None, f"max V- - S(V-) = {sub_def:.3g}")
    worst, wit = np.inf, None
    a, b = sub, sup
    for k in range(sweeps + 1):
        gap = b - a
        m = int(np.argmin(gap))
        if gap[m] < worst:
            worst, wit = float(gap[m]), {"sweep": k, "node": m}
        a, b = S(a), S(b)
    rep.add("order_preserved", worst >= 0.0, worst, wit, f"min (V+ - V-) over {sweeps} sweeps")
    rep.extra.update({"margin": margin, "shift": shift, "sweeps": sweeps, "adversarial": adversarial})
    return rep


# ---------------------------------------------------------------------------
# solver, finite horizon, trajectories


def run_solver_properties(model: HybridModel, grid_h: Optional[float] = None, tol: float = 1e-6) -> PropertyReport:
    rep = PropertyReport("stationary_solver")
    grid = build_grid(model, grid_h or default_grid_h(model))
    V, policy, diag = solve_stationary(model, grid, SolveConfig(tol=tol, check_model=False))
    rep.add("converged", diag.converged, 0.0, None, f"{diag.iterations} sweeps")
    worst = max(diag.residual.values())
    rep.add("qvi_residual", worst <= tol, tol - worst, diag.residual, "max residual on A, C and free nodes")
    rep.add("nondecreasing_iterates", diag.min_increment >= 0.0, diag.min_increment, None, "from V = 0")
    if not model.has_jumps:
        r = max(diag.contraction_ratios) if diag.contraction_ratios else 0.0
        bound = diag.discount_per_step * (1 + 1e-9)
        rep.add("contraction_ratio", r <= bound, bound - r, None, f"max ratio {r:.12g} vs exp(-lambda dt)")
    vmin = float(np.min(V.values))
    rep.add("nonnegative_finite", vmin >= 0.0 and np.all(np.isfinite(V.values)), vmin, None, "")
    rep.extra["diagnostics"] = diag.to_dict()
    return rep


def run_finite_horizon_properties(model: HybridModel, T: float = 1.0, grid_h: Optional[float] = None,
                                  r: Optional[float] = None) -> PropertyReport:
    rep = PropertyReport("finite_horizon")
    grid = build_grid(model, grid_h or default_grid_h(model))
    td = build_terminal_data(model, grid)
    worst = max(td.residual.values())
    rep.add("terminal_data_residual", worst <= 1e-9, 1e-9 - worst, td.residual, "")
    tg = TimeGrid.for_grid(model, grid, T)
    res = backward_march(model, grid, tg, td)
    allv = np.stack([f.values for f in res.fields])
    rep.add("slices_nonnegative_finite", bool(np.all(np.isfinite(allv)) and allv.min() >= -1e-12), float(allv.min()))
    if not model.time_dependent:
        dec = float(np.min(allv[:-1] - allv[1:]))
        rep.add("monotone_in_horizon", dec >= -1e-12, dec, None, "V(s) >= V(s + dt) nodewise")
    dpp = max(max(x.values()) for x in res.residuals)
    rep.add("one_step_consistency", dpp <= 1e-9, -dpp, None, "slice vs one step from the next slice")
    Kmax = max(float(model.K(i, grid.nodes(i), u).max()) for i in range(model.n_charts) for u in model.controls.U)
    worst_gap, wit = -np.inf, None
    for n in range(tg.steps):
        nxt = res.fields[n + 1]
        lip = max(cg.gradient_bound(nxt.chart_values(i)) for i, cg in enumerate(grid.charts))
        bound = tg.dt * (Kmax + model.dynamics_bound_local * lip) + 1e-12
        chg = float(np.max(np.abs(allv[n] - allv[n + 1])))
        if chg - bound > worst_gap:
            worst_gap, wit = chg - bound, {"slice": n, "change": chg, "bound": bound}
    rep.add("slice_change_bound", worst_gap <= 0.0, -worst_gap, wit, "dt (sup K + F̂ Lip V)")
    rr = r if r is not None else model.constants.R
    tc = terminal_consistency_check(model, res, rr)
    ok = tc[-1] == 0.0 and bool(np.all(np.diff(tc) <= 1e-12))
    rep.add("terminal_consistency", ok, -float(tc[0]), {"values": tc.tolist()}, f"|x| <= {rr:.3g}, last {len(tc) - 1} slices")
    return rep


def run_trajectory_properties(model: HybridModel, records: Sequence[TrajectoryRecord]) -> PropertyReport:
    rep = PropertyReport("trajectories")
    sep = model.constants.beta / model.dynamics_bound_local
    worst_sep, worst_ledger, worst_cost = np.inf, 0.0, np.inf
    bad_post, bad_pre = None, None
    for k, rec in enumerate(records):
        t = rec.event_times
        if t.size > 1:
            worst_sep = min(worst_sep, float(np.min(np.diff(t))))
        worst_ledger = max(worst_ledger, abs(rec.ledger_total() - rec.total_cost))
        for e in rec.events:
            worst_cost = min(worst_cost, e.cost)
            if bad_post is None and model.sd(e.post.chart, "D", e.post.coords)[0] > rec.destination_tol:
                bad_post = {"record": k, "time": e.time}
            if e.kind == "autonomous" and bad_pre is None and model.sd(e.pre.chart, "A", e.pre.coords)[0] > BOUNDARY_TOL:
                bad_pre = {"record": k, "time": e.time}
        times = [a.t0 for a in rec.arcs]
        if any(b < a for a, b in zip(times, times[1:])):
            bad_pre = bad_pre or {"record": k, "detail": "arcs out of order"}
    rep.add("jump_separation", worst_sep >= sep - 1e-9, worst_sep - sep if np.isfinite(worst_sep) else 0.0, None,
            f"min gap between jumps vs beta/F̂ = {sep:.4g}")
    rep.add("ledger_additivity", worst_ledger <= 1e-10, -worst_ledger, None, "")
    c_min = model.constants.C_prime
    rep.add("jump_cost_floor", worst_cost >= c_min - 1e-12, (worst_cost - c_min) if np.isfinite(worst_cost) else 0.0)
    rep.add("post_state_in_D", bad_post is None, 0.0, bad_post)
    rep.add("events_consistent", bad_pre is None, 0.0, bad_pre, "autonomous jumps start on A; arcs ordered")
    return rep


def run_all(model: HybridModel, seed: int = 0, trials: int = 100, grid_h: Optional[float] = None,
            inject_violation: bool = False, n_starts: int = 5) -> list[PropertyReport]:
    """Every suite applicable to ``model``; the finite-horizon suite runs when ``h`` is given."""
    gh = grid_h or default_grid_h(model)
    reports = [
        run_assumption_audit(model, seed=seed),
        run_operator_properties(model, trials, seed, gh, inject_violation=inject_violation),
        run_ode_estimates(model, min(trials, 50), seed),
    ]
    solver = run_solver_properties(model, gh)
    reports.append(solver)
    reports.append(run_comparison_shadow(model, 0.1, 100, gh))
    if all(ch.h is not None for ch in model.charts):
        reports.append(run_finite_horizon_properties(model, 1.0, gh))
    grid = build_grid(model, gh)
    V, policy, _ = solve_stationary(model, grid, SolveConfig(check_model=False))
    rng = np.random.default_rng(seed)
    recs = []
    for _ in range(n_starts):
        i = int(rng.integers(model.n_charts))
        lo, hi = model.sampling_box(i)
        recs.append(simulate(model, HybridState(i, rng.uniform(lo, hi)), policy))
    reports.append(run_trajectory_properties(model, recs))
    return reports
