"""Closed regions built from smooth primitives.

Every region exposes an exact signed distance (negative inside), an outward
normal on its boundary and a projection onto the boundary used to sample
boundary points. Unions combine their parts by taking the minimum distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

__all__ = [
    "BOUNDARY_TOL",
    "RegionError",
    "Region",
    "Ball",
    "Box",
    "HalfSpace",
    "Union",
    "region_from_dict",
    "signed_distance",
    "outward_normal",
]

#: default tolerance (state units) for "x lies on the boundary"
BOUNDARY_TOL = 1e-9


class RegionError(ValueError):
    pass


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != dim:
        raise RegionError(f"expected points of dimension {dim}, got {arr.shape[-1]}")
    return arr, single


class Region:
    """Base class. Subclasses implement ``_sd``, ``_normal`` and ``_project``."""

    dim: int

    def signed_distance(self, x) -> np.ndarray | float:
        pts, single = _as_points(x, self.dim)
        out = self._sd(pts)
        return float(out[0]) if single else out

    def contains(self, x, tol: float = BOUNDARY_TOL):
        d = self.signed_distance(x)
        return d <= tol

    def outward_normal(self, x, tol: float = BOUNDARY_TOL) -> np.ndarray:
        pts, single = _as_points(x, self.dim)
        d = self._sd(pts)
        bad = np.abs(d) > tol
        if np.any(bad):
            raise RegionError(f"point not on the boundary (|signed distance| = {np.max(np.abs(d[bad])):.3g} > {tol})")
        n = self._normal(pts)
        return n[0] if single else n

    def project(self, x) -> np.ndarray:
        """Closest boundary point (exact for primitives)."""
        pts, single = _as_points(x, self.dim)
        p = self._project(pts)
        return p[0] if single else p

    def primitives(self) -> list["Region"]:
        return [self]

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample_boundary(self, n: int, rng: np.random.Generator, lo, hi) -> np.ndarray:
        """Seeded boundary points, projected from uniform draws in the box ``[lo, hi]``."""
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        pts = rng.uniform(lo, hi, size=(n, self.dim))
        return self.project(pts)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Ball(Region):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise RegionError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    def _sd(self, x):
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def _normal(self, x):
        d = x - self.center
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(nrm > 0, nrm, 1.0)

    def _project(self, x):
        d = x - self.center
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        e0 = np.zeros(self.dim)
        e0[0] = 1.0
        d = np.where(nrm > 0, d / np.where(nrm > 0, nrm, 1.0), e0)
        return self.center + self.radius * d

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box(Region):
    """Axis-aligned box; infinite bounds are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise RegionError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def _sd(self, x):
        q = np.maximum(self.lo - x, x - self.hi)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def _normal(self, x):
        # face normal of the active axis; at corners the normalized sum of active faces
        q = np.maximum(self.lo - x, x - self.hi)
        qmax = np.max(q, axis=-1, keepdims=True)
        active = q >= qmax - BOUNDARY_TOL
        sgn = np.where(x - self.hi >= self.lo - x, 1.0, -1.0)
        n = np.where(active, sgn, 0.0)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def _project(self, x):
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=-1)
        out = np.clip(x, self.lo, self.hi)
        if np.any(inside):
            xi = x[inside]
            gap_lo = xi - self.lo
            gap_hi = self.hi - xi
            gaps = np.concatenate([gap_lo, gap_hi], axis=-1)
            k = np.argmin(gaps, axis=-1)
            rows = np.arange(xi.shape[0])
            proj = xi.copy()
            ax = k % self.dim
            use_lo = k < self.dim
            proj[rows, ax] = np.where(use_lo, self.lo[ax], self.hi[ax])
            out[inside] = proj
        return out

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def to_dict(self):
        enc = lambda a: [None if not np.isfinite(v) else float(v) for v in a]  # noqa: E731
        return {"type": "box", "lo": enc(self.lo), "hi": enc(self.hi)}


@dataclass(frozen=True, eq=False)
class HalfSpace(Region):
    """The set ``{x : normal . x <= offset}`` (``normal`` is normalized on construction)."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.atleast_1d(np.asarray(self.normal, dtype=float))
        nrm = np.linalg.norm(n)
        if nrm == 0:
            raise RegionError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", n / nrm)
        object.__setattr__(self, "offset", float(self.offset) / nrm)

    @property
    def dim(self) -> int:
        return self.normal.size

    def _sd(self, x):
        return x @ self.normal - self.offset

    def _normal(self, x):
        return np.broadcast_to(self.normal, x.shape).copy()

    def _project(self, x):
        return x - np.outer(self._sd(x), self.normal)

    def bounding_box(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for k in range(self.dim):
            if np.allclose(np.abs(self.normal[k]), 1.0):
                if self.normal[k] > 0:
                    hi[k] = self.offset
                else:
                    lo[k] = -self.offset
        return lo, hi

    def to_dict(self):
        return {"type": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Union(Region):
    parts: tuple[Region, ...] = field(default_factory=tuple)

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise RegionError("union needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise RegionError("union parts must share a dimension")
        flat: list[Region] = []
        for p in parts:
            flat.extend(p.primitives())
        object.__setattr__(self, "parts", tuple(flat))

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def primitives(self):
        return list(self.parts)

    def _all_sd(self, x):
        return np.stack([p._sd(x) for p in self.parts], axis=0)

    def _sd(self, x):
        return np.min(self._all_sd(x), axis=0)

    def _normal(self, x):
        k = np.argmin(self._all_sd(x), axis=0)
        normals = np.stack([p._normal(x) for p in self.parts], axis=0)
        return normals[k, np.arange(x.shape[0])]

    def _project(self, x):
        # nearest primitive boundary point that is also on the union boundary;
        # if every candidate is buried in another part, the nearest one
        projs = np.stack([p._project(x) for p in self.parts], axis=0)
        dist = np.linalg.norm(projs - x[None], axis=-1)
        on = np.stack([np.abs(self._sd(pr)) <= BOUNDARY_TOL for pr in projs], axis=0)
        k = np.argmin(np.where(on, dist, np.inf), axis=0)
        k = np.where(on.any(axis=0), k, np.argmin(dist, axis=0))
        return projs[k, np.arange(x.shape[0])]

    def sample_boundary(self, n, rng, lo, hi):
        per = max(1, n // len(self.parts))
        pts = np.concatenate([p.sample_boundary(per, rng, lo, hi) for p in self.parts])
        keep = np.abs(self._sd(pts)) <= BOUNDARY_TOL
        return pts[keep]

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def to_dict(self):
        return {"type": "union", "parts": [p.to_dict() for p in self.parts]}


def region_from_dict(d: dict | None) -> Region | None:
    if d is None:
        return None
    kind = d.get("type")
    try:
        if kind == "ball":
            return Ball(d["center"], float(d["radius"]))
        if kind == "box":
            lo = [(-np.inf if a is None else a) for a in d["lo"]]
            hi = [(np.inf if a is None else a) for a in d["hi"]]
            return Box(lo, hi)
        if kind == "halfspace":
            return HalfSpace(d["normal"], float(d["offset"]))
        if kind == "union":
            return Union(tuple(region_from_dict(p) for p in d["parts"]))
    except KeyError as exc:
        raise RegionError(f"region of type {kind!r} is missing key {exc}") from None
    raise RegionError(f"unknown region type {kind!r}")


def signed_distance(region: Region, x):
    return region.signed_distance(x)


def outward_normal(region: Region, x, tol: float = BOUNDARY_TOL):
    return region.outward_normal(x, tol)
