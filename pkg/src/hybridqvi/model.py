"""Problem data for hybrid control problems with autonomous and controlled jumps.

A :class:`HybridModel` is a list of charts (one Euclidean component each)
with their jump regions, vectorized dynamics and costs, the finite control
samples and the declared structural constants. Models are usually loaded
from JSON (see :func:`model_from_dict`), where dynamics and costs are
strings in the small language of :mod:`hybridqvi.expr`.

Vectorization conventions used by every evaluable:

* ``f(i, x, u, t)``: ``x`` of shape ``(n, d_i)``, one control ``u`` of shape
  ``(m,)`` -> ``(n, d_i)``
* ``K(i, x, u, t)`` -> ``(n,)``
* ``C_a(i, x, v)`` and ``g(i, x, v)`` for one discrete control ``v``;
  ``g`` returns ``(target_chart, y)`` with ``y`` of shape ``(n, d_j)``
* ``C_c(i, j, x, y)`` pairs rows of ``x`` and ``y`` -> ``(n,)``
* ``h(i, x)`` -> ``(n,)``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .expr import Expression, ExpressionError
from .regions import BOUNDARY_TOL, Box, Region, RegionError, region_from_dict

__all__ = [
    "ModelError",
    "HybridState",
    "Constants",
    "ControlGrid",
    "JumpBranch",
    "Chart",
    "HybridModel",
    "model_from_dict",
    "load_model",
]


class ModelError(ValueError):
    """Structural problem with a model description."""


@dataclass(frozen=True, eq=False)
class HybridState:
    chart: int
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.atleast_1d(np.asarray(self.coords, dtype=float)).copy())

    def __repr__(self) -> str:
        return f"HybridState(chart={self.chart}, coords={self.coords.tolist()})"


@dataclass(frozen=True)
class Constants:
    lam: float
    F: float
    L: float
    G: float
    beta: float
    xi0: float
    R: float
    k: float
    C_prime: float

    def __post_init__(self):
        for name in ("lam", "F", "L", "beta", "xi0", "C_prime", "R"):
            if not getattr(self, name) > 0:
                raise ModelError(f"constant {name} must be positive")
        if self.G < 0 or self.k < 0:
            raise ModelError("constants G and k must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "Constants":
        aliases = {"lambda": "lam", "xi_0": "xi0", "Cprime": "C_prime", "C'": "C_prime"}
        vals = {aliases.get(k, k): float(v) for k, v in d.items() if aliases.get(k, k) in cls.__dataclass_fields__}
        missing = set(cls.__dataclass_fields__) - set(vals)
        if missing:
            raise ModelError(f"missing constants: {sorted(missing)}")
        return cls(**vals)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam, "F": self.F, "L": self.L, "G": self.G, "beta": self.beta,
            "xi0": self.xi0, "R": self.R, "k": self.k, "C_prime": self.C_prime,
        }


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Finite samples of the continuous control set U and the discrete set 𝒱."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        U = U.reshape(len(U), -1) if U.size else U.reshape(0, 1)
        V = V.reshape(len(V), -1) if V.size else V.reshape(0, 1)
        if len(U) == 0 or len(V) == 0:
            raise ModelError("control sample lists must be nonempty")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)


@dataclass(frozen=True, eq=False)
class JumpBranch:
    """One branch of the jump map: applies to the discrete controls where ``when(v)`` holds."""

    target: int
    coords: Callable[[np.ndarray, np.ndarray], np.ndarray]
    when: Optional[Callable[[np.ndarray], bool]] = None


@dataclass(frozen=True, eq=False)
class Chart:
    dim: int
    domain: Box
    A: Optional[Region]
    C: Optional[Region]
    D: Optional[Region]
    f: Callable
    K: Callable
    C_a: Optional[Callable] = None
    g: tuple[JumpBranch, ...] = ()
    h: Optional[Callable] = None

    def __post_init__(self):
        if not isinstance(self.domain, Box):
            raise ModelError("chart domains must be axis boxes (bounds may be infinite)")
        for name in ("domain", "A", "C", "D"):
            r = getattr(self, name)
            if r is not None and r.dim != self.dim:
                raise ModelError(f"region {name} has dimension {r.dim}, chart has {self.dim}")
        if self.A is not None and (self.C_a is None or not self.g):
            raise ModelError("a chart with an A region needs C_a and a jump map")


class HybridModel:
    """Immutable problem description. Evaluation helpers broadcast and shape-check."""

    def __init__(
        self,
        charts: list[Chart],
        controls: ControlGrid,
        constants: Constants,
        C_c: Optional[Callable] = None,
        *,
        name: str = "model",
        time_dependent: bool = False,
        linear_growth: bool = False,
        oracle: Optional[Callable] = None,
        trunc_radius: Optional[float] = None,
        source: Optional[dict] = None,
    ):
        if not charts:
            raise ModelError("model needs at least one chart")
        self.charts = tuple(charts)
        self.controls = controls
        self.constants = constants
        self._C_c = C_c
        self.name = name
        self.time_dependent = time_dependent
        self.linear_growth = linear_growth
        self._oracle = oracle
        self.source = source
        c = constants
        self.trunc_radius = float(trunc_radius) if trunc_radius is not None else 4 * c.R + c.F / c.lam
        if any(ch.C is not None for ch in self.charts) and C_c is None:
            raise ModelError("controlled jump set present but no C_c given")
        if self.has_jumps and not self.has_destinations:
            raise ModelError("jumps are possible but no chart has a destination set D")

    # -- structure -------------------------------------------------------
    @property
    def n_charts(self) -> int:
        return len(self.charts)

    @property
    def has_destinations(self) -> bool:
        return any(ch.D is not None for ch in self.charts)

    @property
    def has_jumps(self) -> bool:
        return any(ch.A is not None or ch.C is not None for ch in self.charts)

    def check_chart(self, i: int) -> Chart:
        if not 0 <= i < self.n_charts:
            raise ModelError(f"chart index {i} out of range (model has {self.n_charts})")
        return self.charts[i]

    def sampling_box(self, i: int, radius: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
        """Chart domain truncated to the box of half-width ``radius`` (default: trunc radius)."""
        r = self.trunc_radius if radius is None else radius
        dom = self.check_chart(i).domain
        return np.maximum(dom.lo, -r), np.minimum(dom.hi, r)

    @cached_property
    def dynamics_bound_local(self) -> float:
        """F̂: the dynamics bound on the truncated domain (F, or F(1+R_trunc) with linear growth)."""
        c = self.constants
        if not self.linear_growth:
            return c.F
        rmax = 0.0
        for i in range(self.n_charts):
            lo, hi = self.sampling_box(i)
            rmax = max(rmax, float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi)))))
        return c.F * (1.0 + rmax)

    # -- evaluation ----------------------------------------------------
    @staticmethod
    def _pts(x, dim):
        x = np.asarray(x, dtype=float)
        x = np.atleast_2d(x) if x.ndim <= 1 else x
        if x.shape[-1] != dim:
            raise ModelError(f"expected coordinates of dimension {dim}, got {x.shape[-1]}")
        return x

    def f(self, i, x, u, t=0.0) -> np.ndarray:
        ch = self.check_chart(i)
        x = self._pts(x, ch.dim)
        out = np.asarray(ch.f(t, x, np.asarray(u, dtype=float)), dtype=float)
        return np.broadcast_to(out, x.shape).copy()

    def K(self, i, x, u, t=0.0) -> np.ndarray:
        ch = self.check_chart(i)
        x = self._pts(x, ch.dim)
        out = np.asarray(ch.K(t, x, np.asarray(u, dtype=float)), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]).copy()

    def C_a(self, i, x, v) -> np.ndarray:
        ch = self.check_chart(i)
        if ch.C_a is None:
            raise ModelError(f"chart {i} has no autonomous jump cost")
        x = self._pts(x, ch.dim)
        out = np.asarray(ch.C_a(x, np.asarray(v, dtype=float)), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]).copy()

    def jump_branch(self, i, v) -> JumpBranch:
        ch = self.check_chart(i)
        v = np.asarray(v, dtype=float)
        for br in ch.g:
            if br.when is None or bool(br.when(v)):
                return br
        raise ModelError(f"jump map of chart {i} has no branch for v = {v.tolist()}")

    def g(self, i, x, v) -> tuple[int, np.ndarray]:
        ch = self.check_chart(i)
        x = self._pts(x, ch.dim)
        br = self.jump_branch(i, v)
        dim_j = self.check_chart(br.target).dim
        y = np.asarray(br.coords(x, np.asarray(v, dtype=float)), dtype=float)
        return br.target, np.broadcast_to(y, x.shape[:-1] + (dim_j,)).copy()

    def C_c(self, i, j, x, y) -> np.ndarray:
        if self._C_c is None:
            raise ModelError("model has no controlled jump cost")
        x = self._pts(x, self.check_chart(i).dim)
        y = self._pts(y, self.check_chart(j).dim)
        out = np.asarray(self._C_c(i, j, x, y), dtype=float)
        return np.broadcast_to(out, np.broadcast_shapes(x.shape[:-1], y.shape[:-1])).copy()

    def h(self, i, x) -> np.ndarray:
        ch = self.check_chart(i)
        x = self._pts(x, ch.dim)
        if ch.h is None:
            return np.zeros(x.shape[:-1])
        out = np.asarray(ch.h(x), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]).copy()

    @property
    def has_oracle(self) -> bool:
        return self._oracle is not None

    def oracle(self, i, x) -> np.ndarray:
        if self._oracle is None:
            raise ModelError("model declares no oracle value function")
        x = self._pts(x, self.check_chart(i).dim)
        return np.broadcast_to(np.asarray(self._oracle(i, x), dtype=float), x.shape[:-1]).copy()

    # -- region helpers --------------------------------------------------
    def sd(self, i: int, which: str, x) -> np.ndarray:
        """Signed distance to region ``which`` of chart ``i``; +inf when the region is absent."""
        ch = self.check_chart(i)
        region = getattr(ch, which)
        x = self._pts(x, ch.dim)
        if region is None:
            return np.full(x.shape[:-1], np.inf)
        return region.signed_distance(x)

    def state_in(self, state: HybridState, which: str, tol: float = BOUNDARY_TOL) -> bool:
        return bool(self.sd(state.chart, which, state.coords)[0] <= tol)

    @cached_property
    def c_meets_d(self) -> bool:
        """Whether C ∩ D is nonempty, decided by seeded sampling of both sets."""
        from .validation import sample_region

        rng = np.random.default_rng(12345)
        for i, ch in enumerate(self.charts):
            if ch.C is None or ch.D is None:
                continue
            d_pts = sample_region(self, i, "D", 25, rng)
            if d_pts.size and np.any(ch.C.signed_distance(d_pts) <= BOUNDARY_TOL):
                return True
            c_pts = sample_region(self, i, "C", 25, rng)
            if c_pts.size and np.any(ch.D.signed_distance(c_pts) <= BOUNDARY_TOL):
                return True
        return False

    def with_changes(self, **changes) -> "HybridModel":
        """Copy with some constructor arguments replaced (the model itself is never mutated)."""
        kw = dict(
            charts=list(self.charts), controls=self.controls, constants=self.constants, C_c=self._C_c,
            name=self.name, time_dependent=self.time_dependent, linear_growth=self.linear_growth,
            oracle=self._oracle, trunc_radius=self.trunc_radius, source=self.source,
        )
        kw.update(changes)
        return HybridModel(**kw)

    def __repr__(self) -> str:
        dims = [ch.dim for ch in self.charts]
        return f"HybridModel(name={self.name!r}, charts={dims}, nU={len(self.controls.U)}, nV={len(self.controls.V)})"


# ---------------------------------------------------------------------------
# JSON loading


def _per_chart(value, n, what):
    if value is None:
        return [None] * n
    if isinstance(value, (str, int, float)):
        return [value] * n
    if isinstance(value, list) and len(value) == n:
        return value
    raise ModelError(f"{what} must be a single expression or a list with one entry per chart ({n})")


def _vector_fn(exprs: list[Expression], *, time=False, control=None):
    def fn(*args):
        if time:
            t, x, u = args
            cols = [e(x=x, u=u, t=t, shape=x.shape[:-1]) for e in exprs]
        else:
            x, v = args
            cols = [e(x=x, v=v, shape=x.shape[:-1]) for e in exprs]
        return np.stack(cols, axis=-1)

    return fn


def _compile(src, what):
    try:
        return Expression(src)
    except ExpressionError as exc:
        raise ModelError(f"{what}: {exc}") from None


def model_from_dict(doc: dict) -> HybridModel:
    """Build a model from the JSON document layout (keys ``charts``, ``dynamics``,
    ``jump_map``, ``costs``, ``constants``, ``controls``)."""
    try:
        charts_doc = doc["charts"]
        dyn_doc = doc["dynamics"]
        costs = doc["costs"]
        consts = Constants.from_dict(doc["constants"])
    except KeyError as exc:
        raise ModelError(f"model document is missing key {exc}") from None
    except TypeError:
        raise ModelError("model document must be a JSON object") from None
    n = len(charts_doc)
    ctrl = doc.get("controls", {})
    controls = ControlGrid(ctrl.get("U", [[0.0]]), ctrl.get("V", [[0.0]]))
    if len(dyn_doc) != n:
        raise ModelError("dynamics needs one entry (list of component expressions) per chart")
    K_src = _per_chart(costs.get("K"), n, "costs.K")
    Ca_src = _per_chart(costs.get("C_a"), n, "costs.C_a")
    h_src = _per_chart(costs.get("h"), n, "costs.h")
    jm_doc = doc.get("jump_map") or [None] * n
    if len(jm_doc) != n:
        raise ModelError("jump_map needs one entry per chart (null for charts without A)")
    uses_t = False
    charts = []
    for i, cd in enumerate(charts_doc):
        try:
            dim = int(cd["dim"])
            domain = region_from_dict(cd["domain"])
            A, C, D = (region_from_dict(cd.get(k)) for k in ("A", "C", "D"))
        except (KeyError, RegionError) as exc:
            raise ModelError(f"chart {i}: {exc}") from None
        f_exprs = [_compile(s, f"dynamics[{i}]") for s in dyn_doc[i]]
        if len(f_exprs) != dim:
            raise ModelError(f"dynamics[{i}] has {len(f_exprs)} components, chart dimension is {dim}")
        if K_src[i] is None:
            raise ModelError(f"costs.K missing for chart {i}")
        K_expr = _compile(K_src[i], f"costs.K[{i}]")
        uses_t |= K_expr.uses_time or any(e.uses_time for e in f_exprs)
        f_fn = _vector_fn(f_exprs, time=True)
        K_fn = (lambda e: (lambda t, x, u: e(x=x, u=u, t=t, shape=x.shape[:-1])))(K_expr)
        Ca_fn = None
        if Ca_src[i] is not None:
            Ca_fn = (lambda e: (lambda x, v: e(x=x, v=v, shape=x.shape[:-1])))(_compile(Ca_src[i], f"costs.C_a[{i}]"))
        h_fn = None
        if h_src[i] is not None:
            h_fn = (lambda e: (lambda x: e(x=x, shape=x.shape[:-1])))(_compile(h_src[i], f"costs.h[{i}]"))
        branches = []
        jm = jm_doc[i]
        if jm is not None:
            for b in jm if isinstance(jm, list) else [jm]:
                try:
                    target = int(b["chart"])
                    coords = [_compile(s, f"jump_map[{i}]") for s in b["coords"]]
                except KeyError as exc:
                    raise ModelError(f"jump_map[{i}] branch missing {exc}") from None
                when = None
                if b.get("when") is not None:
                    when = (lambda e: (lambda v: bool(np.all(e(v=v)))))(_compile(b["when"], f"jump_map[{i}].when"))
                branches.append(JumpBranch(target, _vector_fn(coords), when))
        try:
            charts.append(Chart(dim, domain, A, C, D, f_fn, K_fn, Ca_fn, tuple(branches), h_fn))
        except ModelError as exc:
            raise ModelError(f"chart {i}: {exc}") from None
    for i, ch in enumerate(charts):
        for br in ch.g:
            if not 0 <= br.target < n:
                raise ModelError(f"jump_map[{i}] targets missing chart {br.target}")
    C_c_fn = None
    if costs.get("C_c") is not None:
        src = costs["C_c"]
        if isinstance(src, list):
            table = [[_compile(s, f"costs.C_c[{a}][{b}]") for b, s in enumerate(row)] for a, row in enumerate(src)]
            if len(table) != n or any(len(r) != n for r in table):
                raise ModelError("costs.C_c as a table must be n_charts x n_charts")
        else:
            e = _compile(src, "costs.C_c")
            table = [[e] * n for _ in range(n)]
        C_c_fn = lambda i, j, x, y: table[i][j](x=x, y=y, shape=np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))  # noqa: E731
    oracle = None
    if doc.get("oracle") is not None:
        osrc = _per_chart(doc["oracle"], n, "oracle")
        oexprs = [_compile(s, f"oracle[{i}]") for i, s in enumerate(osrc)]
        oracle = lambda i, x: oexprs[i](x=x, shape=x.shape[:-1])  # noqa: E731
    return HybridModel(
        charts,
        controls,
        consts,
        C_c_fn,
        name=str(doc.get("name", "model")),
        time_dependent=bool(doc.get("time_dependent", uses_t)),
        linear_growth=doc.get("dynamics_growth", "bounded") == "linear",
        oracle=oracle,
        trunc_radius=doc.get("trunc_radius"),
        source=doc,
    )


def load_model(path) -> HybridModel:
    """Load a model JSON file. Raises :class:`ModelError` on malformed input."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise ModelError(f"{p}: {exc.strerror}") from None
    return model_from_dict(doc)
