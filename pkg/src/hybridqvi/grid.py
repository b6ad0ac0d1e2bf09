"""Rectilinear per-chart grids and gridded value fields.

Nodes of a chart are stored row-major (last axis fastest). A
:class:`HybridGrid` concatenates the charts, so a field over the whole
hybrid state space is one flat vector indexed by global node number.
"""

from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import HybridModel, HybridState
from .regions import BOUNDARY_TOL

__all__ = ["GridSpec", "ChartGrid", "HybridGrid", "ValueField", "build_grid", "read_value_csv", "read_value_binary"]

_MAGIC = b"HQVI"
_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Target spacing ``h`` and truncation radius (``None``: the model default)."""

    h: float
    trunc_radius: Optional[float] = None


class ChartGrid:
    def __init__(self, lo, hi, counts):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.counts = np.asarray(counts, dtype=int)
        if np.any(self.counts < 2):
            raise ValueError("each axis needs at least two nodes")
        if not np.all(np.isfinite(self.lo) & np.isfinite(self.hi)):
            raise ValueError("grid bounds must be finite (truncate the domain)")
        self.spacing = (self.hi - self.lo) / (self.counts - 1)
        self.dim = self.lo.size
        self.size = int(np.prod(self.counts))
        self.strides = np.array([int(np.prod(self.counts[k + 1:])) for k in range(self.dim)], dtype=np.int64)
        axes = [np.linspace(a, b, n) for a, b, n in zip(self.lo, self.hi, self.counts)]
        self.axes = axes
        mesh = np.meshgrid(*axes, indexing="ij")
        self.nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        self._corners = np.array(list(itertools.product((0, 1), repeat=self.dim)), dtype=np.int64)

    @property
    def h(self) -> float:
        return float(np.max(self.spacing))

    def stencil(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Multilinear interpolation stencil of ``pts``.

        Returns local node indices and weights, both ``(m, 2**d)``, and the
        distance each point was moved when clamped into the grid box.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        clamped = np.clip(pts, self.lo, self.hi)
        clamp_dist = np.linalg.norm(pts - clamped, axis=-1)
        s = (clamped - self.lo) / self.spacing
        snap = np.abs(s - np.round(s)) < 1e-9
        s = np.where(snap, np.round(s), s)
        i0 = np.clip(np.floor(s).astype(np.int64), 0, self.counts - 2)
        frac = s - i0
        idx = np.zeros((pts.shape[0], len(self._corners)), dtype=np.int64)
        w = np.ones((pts.shape[0], len(self._corners)))
        for c, bits in enumerate(self._corners):
            idx[:, c] = ((i0 + bits) * self.strides).sum(axis=-1)
            w[:, c] = np.prod(np.where(bits == 1, frac, 1.0 - frac), axis=-1)
        return idx, w, clamp_dist

    def nearest(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = np.round((np.clip(pts, self.lo, self.hi) - self.lo) / self.spacing).astype(np.int64)
        s = np.clip(s, 0, self.counts - 1)
        return (s * self.strides).sum(axis=-1)

    def gradient_bound(self, values) -> float:
        """Largest one-sided difference quotient of ``values`` along any axis."""
        arr = np.asarray(values, dtype=float).reshape(tuple(self.counts))
        g = 0.0
        for k in range(self.dim):
            d = np.abs(np.diff(arr, axis=k)) / self.spacing[k]
            if d.size:
                g = max(g, float(d.max()))
        return g


class HybridGrid:
    """All chart grids of a model, with global node numbering."""

    def __init__(self, charts: list[ChartGrid]):
        self.charts = list(charts)
        self.offsets = np.cumsum([0] + [c.size for c in self.charts])
        self.size = int(self.offsets[-1])
        self.chart_of = np.concatenate([np.full(c.size, i) for i, c in enumerate(self.charts)])

    def nodes(self, i: int) -> np.ndarray:
        return self.charts[i].nodes

    def global_index(self, i: int, local) -> np.ndarray:
        return np.asarray(local) + self.offsets[i]

    def local_slice(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def node_state(self, g: int) -> HybridState:
        i = int(self.chart_of[g])
        return HybridState(i, self.charts[i].nodes[g - self.offsets[i]])

    def stencil(self, i: int, pts):
        idx, w, cd = self.charts[i].stencil(pts)
        return idx + self.offsets[i], w, cd

    def nearest(self, i: int, pts) -> np.ndarray:
        return self.charts[i].nearest(pts) + self.offsets[i]

    @property
    def h(self) -> float:
        return max(c.h for c in self.charts)

    def same_layout(self, other: "HybridGrid") -> bool:
        return len(self.charts) == len(other.charts) and all(
            np.array_equal(a.counts, b.counts) and np.allclose(a.lo, b.lo) and np.allclose(a.hi, b.hi)
            for a, b in zip(self.charts, other.charts)
        )

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "charts": [
                {"lo": c.lo.tolist(), "hi": c.hi.tolist(), "counts": c.counts.tolist(), "spacing": c.spacing.tolist()}
                for c in self.charts
            ]
        }


def build_grid(model: HybridModel, spec: GridSpec | float) -> HybridGrid:
    """Grid over every chart domain truncated to the box of half-width ``trunc_radius``."""
    if not isinstance(spec, GridSpec):
        spec = GridSpec(float(spec))
    if not spec.h > 0:
        raise ValueError("grid spacing must be positive")
    charts = []
    for i in range(model.n_charts):
        lo, hi = model.sampling_box(i, spec.trunc_radius)
        extent = hi - lo
        if np.any(extent <= 0):
            raise ValueError(f"chart {i}: truncated domain is empty")
        counts = np.maximum(2, np.ceil(extent / spec.h - 1e-9).astype(int) + 1)
        charts.append(ChartGrid(lo, hi, counts))
    return HybridGrid(charts)


class ValueField:
    """Per-chart gridded scalar field. ``time`` is ``None`` for stationary fields."""

    def __init__(self, grid: HybridGrid, values, time: Optional[float] = None):
        vals = np.asarray(values)
        if vals.shape != (grid.size,):
            raise ValueError(f"expected {grid.size} values, got shape {vals.shape}")
        self.grid = grid
        self.values = vals
        self.time = time

    def copy(self, values=None, time=...) -> "ValueField":
        return ValueField(self.grid, self.values.copy() if values is None else values,
                          self.time if time is ... else time)

    def chart_values(self, i: int) -> np.ndarray:
        return self.values[self.grid.local_slice(i)]

    def interpolate(self, i: int, pts) -> np.ndarray:
        idx, w, _ = self.grid.stencil(i, pts)
        return np.sum(w * self.values[idx], axis=-1)

    def at(self, state: HybridState) -> float:
        return float(self.interpolate(state.chart, state.coords[None, :])[0])

    def __call__(self, state: HybridState) -> float:
        return self.at(state)

    # -- serialization -------------------------------------------------
    def to_csv(self, path) -> None:
        """Columns ``node, chart, x1..xD, value``; coordinates of lower-dimensional charts are blank-padded."""
        dmax = max(c.dim for c in self.grid.charts)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "chart"] + [f"x{k + 1}" for k in range(dmax)] + ["value"])
            vals = np.asarray(self.values, dtype=float)
            for i, cg in enumerate(self.grid.charts):
                off = int(self.grid.offsets[i])
                for n, x in enumerate(cg.nodes):
                    coords = [f"{c:.17g}" for c in x] + [""] * (dmax - cg.dim)
                    w.writerow([off + n, i] + coords + [f"{vals[off + n]:.17g}"])

    def to_binary(self, path) -> None:
        parts = [_MAGIC, struct.pack("<II", _VERSION, len(self.grid.charts))]
        for cg in self.grid.charts:
            parts.append(struct.pack("<I", cg.dim))
            parts.append(np.asarray(cg.counts, dtype="<u4").tobytes())
            parts.append(np.asarray(cg.lo, dtype="<f8").tobytes())
            parts.append(np.asarray(cg.spacing, dtype="<f8").tobytes())
        parts.append(struct.pack("<d", np.nan if self.time is None else float(self.time)))
        parts.append(np.asarray(self.values, dtype="<f8").tobytes())
        Path(path).write_bytes(b"".join(parts))


def read_value_binary(path) -> ValueField:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{path}: not a value-field file")
    version, nch = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    pos = 12
    charts = []
    for _ in range(nch):
        (dim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        counts = np.frombuffer(buf, "<u4", dim, pos).astype(int)
        pos += 4 * dim
        lo = np.frombuffer(buf, "<f8", dim, pos).copy()
        pos += 8 * dim
        sp = np.frombuffer(buf, "<f8", dim, pos).copy()
        pos += 8 * dim
        charts.append(ChartGrid(lo, lo + sp * (counts - 1), counts))
    (t,) = struct.unpack_from("<d", buf, pos)
    pos += 8
    grid = HybridGrid(charts)
    vals = np.frombuffer(buf, "<f8", grid.size, pos).copy()
    return ValueField(grid, vals, None if np.isnan(t) else t)


def read_value_csv(path, grid: HybridGrid) -> ValueField:
    """Read values written by :meth:`ValueField.to_csv` back onto ``grid``."""
    vals = np.full(grid.size, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vals[int(row["node"])] = float(row["value"])
    if np.any(np.isnan(vals)):
        raise ValueError(f"{path}: missing nodes for this grid")
    return ValueField(grid, vals)
