"""Sample-based audit of the standing assumptions on a :class:`HybridModel`.

The declared constants (F, L, G, k, C', beta, xi0, R) are never inferred:
sampling can refute a declaration but cannot certify it. Each assumption
becomes one :class:`CheckEntry`; failures are report entries, not faults.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import HybridModel
from .regions import BOUNDARY_TOL

__all__ = ["CheckEntry", "ValidationReport", "validate_model", "sample_region", "sample_chart", "ValidationError"]


class ValidationError(RuntimeError):
    """Raised by solvers when a model fails its assumption audit."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        names = ", ".join(e.name for e in report.failures)
        super().__init__(f"model {report.model_name!r} fails assumption checks: {names}")


@dataclass
class CheckEntry:
    name: str
    assumption: str
    passed: bool
    margin: float
    witness: Optional[dict] = None
    detail: str = ""


@dataclass
class ValidationReport:
    model_name: str
    seed: int
    sample_density: int
    entries: list[CheckEntry] = field(default_factory=list)
    c_meets_d: bool = False

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[CheckEntry]:
        return [e for e in self.entries if not e.passed]

    def __getitem__(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def summary(self) -> str:
        lines = [f"validation of {self.model_name!r} (seed {self.seed}, density {self.sample_density})"]
        for e in self.entries:
            lines.append(f"  [{'PASS' if e.passed else 'FAIL'}] {e.name:<26} {e.assumption:<10} margin={e.margin:.4g}  {e.detail}")
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------------------
# sampling


def sample_chart(model: HybridModel, i: int, density: int, rng: np.random.Generator) -> np.ndarray:
    """Lattice plus uniform random points in the truncated domain of chart ``i``."""
    lo, hi = model.sampling_box(i)
    dim = lo.size
    per_axis = max(2, density)
    if per_axis**dim <= 20000:
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        lattice = np.array(list(itertools.product(*axes)))
    else:
        lattice = np.empty((0, dim))
    rand = rng.uniform(lo, hi, size=(20 * per_axis, dim))
    return np.concatenate([lattice, rand])


def sample_region(model: HybridModel, i: int, which: str, density: int, rng: np.random.Generator,
                  boundary_only: bool = False) -> np.ndarray:
    """Points of region ``which`` ('A', 'C', 'D') of chart ``i`` inside the truncated domain."""
    ch = model.check_chart(i)
    region = getattr(ch, which)
    lo, hi = model.sampling_box(i)
    if region is None:
        return np.empty((0, ch.dim))
    bnd = region.sample_boundary(40 * max(2, density), rng, lo, hi)
    rlo, rhi = region.bounding_box()
    blo, bhi = np.maximum(lo, rlo), np.minimum(hi, rhi)
    if np.all(blo < bhi):
        bnd = np.concatenate([bnd, region.sample_boundary(40 * max(2, density), rng, blo, bhi)])
    in_box = np.all((bnd >= lo - BOUNDARY_TOL) & (bnd <= hi + BOUNDARY_TOL), axis=-1)
    bnd = bnd[in_box]
    if boundary_only:
        return bnd
    pts = sample_chart(model, i, density, rng)
    if np.all(blo < bhi):
        pts = np.concatenate([pts, rng.uniform(blo, bhi, size=(20 * max(2, density), ch.dim))])
    inside = pts[region.signed_distance(pts) <= 0.0]
    return np.concatenate([inside, bnd])


def _pairs_ratio(fx, fz, x, z):
    num = np.linalg.norm(np.atleast_2d(fx - fz), axis=-1)
    den = np.linalg.norm(x - z, axis=-1)
    ok = den > 1e-12
    if not np.any(ok):
        return 0.0, None
    r = num[ok] / den[ok]
    k = int(np.argmax(r))
    return float(r[k]), int(np.flatnonzero(ok)[k])


def _near_pairs(pts, lo, hi, rng, scales=(1e-4, 1e-2, 1e-1)):
    xs, zs = [], []
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    for s in scales:
        z = pts + rng.normal(size=pts.shape) * s * span
        z = np.clip(z, lo, hi)
        xs.append(pts)
        zs.append(z)
    far = rng.permutation(len(pts))
    xs.append(pts)
    zs.append(pts[far])
    return np.concatenate(xs), np.concatenate(zs)


# ---------------------------------------------------------------------------
# the audit


def validate_model(model: HybridModel, sample_density: int = 9, seed: int = 0,
                   times: Optional[Sequence[float]] = None) -> ValidationReport:
    """Audit the standing assumptions on geometry, dynamics, jump map and costs by seeded sampling.

    ``times`` lists the time samples used for time-dependent dynamics
    (default ``[0.0]``).
    """
    rng = np.random.default_rng(seed)
    c = model.constants
    times = [0.0] if times is None else list(times)
    U = model.controls.U
    V = model.controls.V
    rep = ValidationReport(model.name, seed, sample_density)
    add = rep.entries.append
    tol = BOUNDARY_TOL

    chart_pts = [sample_chart(model, i, sample_density, rng) for i in range(model.n_charts)]
    A_pts = [sample_region(model, i, "A", sample_density, rng) for i in range(model.n_charts)]
    C_pts = [sample_region(model, i, "C", sample_density, rng) for i in range(model.n_charts)]
    D_pts = [sample_region(model, i, "D", sample_density, rng) for i in range(model.n_charts)]

    # structure: regions closed primitives, domain a box with nonempty interior
    add(CheckEntry("structure", "geometry", True, 0.0, detail="charts are boxes; regions are closed smooth primitives"))

    # separation of A from C and D
    worst, wit = np.inf, None
    for i, ch in enumerate(model.charts):
        if ch.A is None:
            continue
        for other, pts_other in (("C", C_pts[i]), ("D", D_pts[i])):
            reg = getattr(ch, other)
            if reg is None:
                continue
            for pts, measure in ((A_pts[i], reg), (pts_other, ch.A)):
                if not len(pts):
                    continue
                d = np.maximum(measure.signed_distance(pts), 0.0)
                k = int(np.argmin(d))
                if d[k] < worst:
                    worst, wit = float(d[k]), {"chart": i, "pair": f"A-{other}", "point": pts[k]}
    if np.isinf(worst):
        add(CheckEntry("separation", "geometry", True, np.inf, detail="no A/C or A/D pairs"))
    else:
        add(CheckEntry("separation", "geometry", worst >= c.beta - tol, worst - c.beta, wit,
                       f"sampled inf distance {worst:.4g} vs beta {c.beta:.4g}"))

    # destinations are bounded by R
    rmax, wit = 0.0, None
    for i, pts in enumerate(D_pts):
        if len(pts):
            nr = np.linalg.norm(pts, axis=-1)
            k = int(np.argmax(nr))
            if nr[k] >= rmax:
                rmax, wit = float(nr[k]), {"chart": i, "point": pts[k]}
    add(CheckEntry("destination_radius", "geometry", rmax < c.R, c.R - rmax, wit, f"max |x| on D = {rmax:.4g} vs R {c.R:.4g}"))

    # transversality on the boundaries of A and C inside the domain
    worst, wit = -np.inf, None
    for i, ch in enumerate(model.charts):
        for which in ("A", "C"):
            reg = getattr(ch, which)
            if reg is None:
                continue
            bnd = sample_region(model, i, which, sample_density, rng, boundary_only=True)
            bnd = bnd[ch.domain.signed_distance(bnd) < -tol] if len(bnd) else bnd
            if not len(bnd):
                continue
            zeta = reg.outward_normal(bnd, tol=1e-7)
            for t in times:
                for u in U:
                    dot = np.sum(model.f(i, bnd, u, t) * zeta, axis=-1)
                    k = int(np.argmax(dot))
                    if dot[k] > worst:
                        worst, wit = float(dot[k]), {"chart": i, "region": which, "point": bnd[k], "u": u, "t": t}
    if np.isinf(worst):
        add(CheckEntry("transversality", "geometry", True, np.inf, detail="no jump-set boundaries"))
    else:
        add(CheckEntry("transversality", "geometry", worst <= -2 * c.xi0 + tol, -2 * c.xi0 - worst, wit,
                       f"max f.zeta = {worst:.4g} vs -2 xi0 = {-2 * c.xi0:.4g}"))

    # the flow can leave the domain only through A
    worst, wit = -np.inf, None
    for i, ch in enumerate(model.charts):
        lo, hi = ch.domain.lo, ch.domain.hi
        slo, shi = model.sampling_box(i)
        for ax in range(ch.dim):
            for side, bound in ((-1.0, lo[ax]), (1.0, hi[ax])):
                if not np.isfinite(bound):
                    continue
                face = rng.uniform(slo, shi, size=(10 * max(2, sample_density), ch.dim))
                face[:, ax] = bound
                if ch.A is not None:
                    face = face[ch.A.signed_distance(face) > tol]
                if not len(face):
                    continue
                for t in times:
                    for u in U:
                        out = side * model.f(i, face, u, t)[:, ax]
                        k = int(np.argmax(out))
                        if out[k] > worst:
                            worst, wit = float(out[k]), {"chart": i, "point": face[k], "u": u, "t": t}
    if np.isinf(worst):
        add(CheckEntry("domain_exit", "geometry", True, np.inf, detail="domain boundary covered by A"))
    else:
        add(CheckEntry("domain_exit", "geometry", worst <= tol, -worst, wit, f"max outward speed off A = {worst:.4g}"))

    # bound and Lipschitz constant of f
    worst_b, wit_b, worst_l, wit_l = -np.inf, None, 0.0, None
    for i, pts in enumerate(chart_pts):
        lo, hi = model.sampling_box(i)
        x, z = _near_pairs(pts, lo, hi, rng)
        for t in times:
            for u in U:
                fx = model.f(i, x, u, t)
                bound = c.F * (1 + np.linalg.norm(x, axis=-1)) if model.linear_growth else c.F
                excess = np.linalg.norm(fx, axis=-1) - bound
                k = int(np.argmax(excess))
                if excess[k] > worst_b:
                    worst_b, wit_b = float(excess[k]), {"chart": i, "point": x[k], "u": u, "t": t}
                ratio, k = _pairs_ratio(fx, model.f(i, z, u, t), x, z)
                if k is not None and ratio > worst_l:
                    worst_l, wit_l = ratio, {"chart": i, "x": x[k], "z": z[k], "u": u, "t": t}
    add(CheckEntry("dynamics_bound", "dynamics", worst_b <= tol, -worst_b, wit_b,
                   "|f| <= F(1+|x|)" if model.linear_growth else "|f| <= F"))
    add(CheckEntry("dynamics_lipschitz", "dynamics", worst_l <= c.L * (1 + 1e-9), c.L - worst_l, wit_l,
                   f"empirical ratio {worst_l:.4g} vs L {c.L:.4g}"))

    # jump map lands in D, Lipschitz with constant G
    worst_d, wit_d, worst_g, wit_g = -np.inf, None, 0.0, None
    for i, ch in enumerate(model.charts):
        pts = A_pts[i]
        if ch.A is None or not len(pts):
            continue
        lo, hi = model.sampling_box(i)
        x, z = _near_pairs(pts, lo, hi, rng, scales=(1e-4, 1e-2))
        keep = ch.A.signed_distance(z) <= tol
        x, z = x[keep], z[keep]
        for v in V:
            j, y = model.g(i, pts, v)
            dD = model.sd(j, "D", y)
            k = int(np.argmax(dD))
            if dD[k] > worst_d:
                worst_d, wit_d = float(dD[k]), {"chart": i, "point": pts[k], "v": v, "image": y[k], "target": j}
            if len(x):
                ratio, k = _pairs_ratio(model.g(i, x, v)[1], model.g(i, z, v)[1], x, z)
                if k is not None and ratio > worst_g:
                    worst_g, wit_g = ratio, {"chart": i, "x": x[k], "z": z[k], "v": v}
    if np.isinf(worst_d):
        add(CheckEntry("jump_map_into_D", "jump_map", True, np.inf, detail="no autonomous jumps"))
    else:
        add(CheckEntry("jump_map_into_D", "jump_map", worst_d <= tol, -worst_d, wit_d, f"max signed distance of g to D = {worst_d:.3g}"))
    add(CheckEntry("jump_map_lipschitz", "jump_map", worst_g <= c.G * (1 + 1e-9) + 1e-12, c.G - worst_g, wit_g,
                   f"empirical ratio {worst_g:.4g} vs G {c.G:.4g}"))

    # K nonnegative
    worst, wit = np.inf, None
    for i, pts in enumerate(chart_pts):
        for t in times:
            for u in U:
                Kx = model.K(i, pts, u, t)
                k = int(np.argmin(Kx))
                if Kx[k] < worst:
                    worst, wit = float(Kx[k]), {"chart": i, "point": pts[k], "u": u, "t": t}
    add(CheckEntry("running_cost_nonnegative", "costs", worst >= 0.0, worst, wit, f"min K = {worst:.4g}"))

    # jump costs bounded below by C' > 0
    worst, wit = np.inf, None
    all_D = [(j, p) for j, p in enumerate(D_pts) if len(p)]
    for i, ch in enumerate(model.charts):
        if ch.A is not None and len(A_pts[i]):
            for v in V:
                ca = model.C_a(i, A_pts[i], v)
                k = int(np.argmin(ca))
                if ca[k] < worst:
                    worst, wit = float(ca[k]), {"cost": "C_a", "chart": i, "point": A_pts[i][k], "v": v}
        if ch.C is not None and len(C_pts[i]):
            for j, dp in all_D:
                xs = np.repeat(C_pts[i], len(dp), axis=0)
                ys = np.tile(dp, (len(C_pts[i]), 1))
                cc = model.C_c(i, j, xs, ys)
                k = int(np.argmin(cc))
                if cc[k] < worst:
                    worst, wit = float(cc[k]), {"cost": "C_c", "chart": i, "target": j, "x": xs[k], "y": ys[k]}
    if np.isinf(worst):
        add(CheckEntry("jump_cost_lower_bound", "costs", True, np.inf, detail="no jump costs"))
    else:
        add(CheckEntry("jump_cost_lower_bound", "costs", worst >= c.C_prime - 1e-12, worst - c.C_prime, wit,
                       f"min jump cost {worst:.4g} vs C' {c.C_prime:.4g}"))

    # polynomial growth of degree k
    rep.entries.append(_growth_entry(model, chart_pts, A_pts, C_pts, all_D, times))

    # discounting dominates growth: lambda > k L
    add(CheckEntry("discount_vs_growth", "discount", c.lam > c.k * c.L, c.lam - c.k * c.L, None,
                   f"lambda {c.lam:.4g} vs k L {c.k * c.L:.4g}"))

    rep.c_meets_d = model.c_meets_d
    return rep


def _growth_entry(model, chart_pts, A_pts, C_pts, all_D, times) -> CheckEntry:
    """Costs over (1+|x|)^k must not grow between inner and outer radii of the samples."""
    k = model.constants.k
    U, V = model.controls.U, model.controls.V
    xs, vals = [], []
    for i, pts in enumerate(chart_pts):
        vals.append(np.max([model.K(i, pts, u, t) for u in U for t in times], axis=0))
        xs.append(pts)
        ch = model.charts[i]
        if ch.A is not None and len(A_pts[i]):
            vals.append(np.max([model.C_a(i, A_pts[i], v) for v in V], axis=0))
            xs.append(A_pts[i])
        if ch.C is not None and len(C_pts[i]) and all_D:
            per_target = []
            for j, dp in all_D:
                cc = model.C_c(i, j, np.repeat(C_pts[i], len(dp), axis=0), np.tile(dp, (len(C_pts[i]), 1)))
                per_target.append(cc.reshape(len(C_pts[i]), len(dp)).max(axis=1))
            vals.append(np.max(per_target, axis=0))
            xs.append(C_pts[i])
    x = np.concatenate([np.linalg.norm(p, axis=-1) for p in xs])
    ratio = np.concatenate(vals) / (1.0 + x) ** k
    if not np.all(np.isfinite(ratio)):
        return CheckEntry("cost_growth", "costs", False, -np.inf, None, "non-finite cost sample")
    cut = np.quantile(x, 0.75)
    inner = ratio[x <= cut]
    outer = ratio[x > cut]
    if not len(outer) or not len(inner):
        return CheckEntry("cost_growth", "costs", True, np.inf, None, "samples do not span radii")
    ref = max(float(inner.max()), 1e-12)
    worst = float(outer.max())
    return CheckEntry("cost_growth", "costs", worst <= 2.0 * ref, 2.0 * ref - worst, {"radius_cut": float(cut)},
                      f"outer cost/(1+|x|)^k {worst:.4g} vs 2 x inner {2 * ref:.4g}")
