"""Rectangular windows, point configurations and cell-list neighbour queries."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K

MAX_CELLS_PER_AXIS = 512


class EmptyWindow(ValueError):
    """Raised when an erosion leaves nothing of a window."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lower, upper]`` in one or two dimensions."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper) or len(lower) not in (1, 2):
            raise ValueError("window must be 1- or 2-dimensional")
        if any(not a < b for a, b in zip(lower, upper)):
            raise ValueError(f"degenerate window {lower} - {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def centered(cls, n: float, dim: int = 2) -> Window:
        """The window ``[-n, n]^dim``."""
        return cls((-n,) * dim, (n,) * dim)

    @classmethod
    def from_bounds(cls, *bounds: float) -> Window:
        """Build from ``xmin xmax [ymin ymax]``."""
        if len(bounds) not in (2, 4):
            raise ValueError("expected 2 or 4 bounds")
        return cls(tuple(bounds[0::2]), tuple(bounds[1::2]))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    def volume(self) -> float:
        return float(np.prod(self.sides))

    def bounds(self) -> tuple[float, ...]:
        """``xmin xmax [ymin ymax]``."""
        return tuple(v for pair in zip(self.lower, self.upper) for v in pair)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def dilate(self, r: float) -> Window:
        return Window(tuple(a - r for a in self.lower), tuple(b + r for b in self.upper))

    def distance_to(self, points) -> np.ndarray:
        """Euclidean distance from each point to the box (0 inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        gap = np.maximum(np.maximum(np.subtract(self.lower, pts), pts - self.upper), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=1))

    def grid(self, per_side: int, shift=None) -> tuple[np.ndarray, float]:
        """Cell-centre quadrature nodes and the common cell volume.

        ``shift`` (values in [0, 1) per axis) moves every node by the same
        fraction of a cell, keeping each node inside its own cell.
        """
        if shift is None:
            shift = np.full(self.dim, 0.5)
        axes = [
            lo + (np.arange(per_side) + s) * (side / per_side)
            for lo, side, s in zip(self.lower, self.sides, shift)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        return nodes, self.volume() / per_side**self.dim


def window_volume(w: Window) -> float:
    return w.volume()


def shrink(w: Window, r: float) -> Window:
    """Erode the box by ``r`` on every side."""
    if r < 0:
        raise ValueError("erosion radius must be nonnegative")
    if np.any(2 * r >= w.sides):
        raise EmptyWindow(f"eroding {w} by {r} leaves an empty window")
    return Window(tuple(a + r for a in w.lower), tuple(b - r for b in w.upper))


@dataclass(frozen=True)
class CellPartition:
    """Unit cells ``k + [0, 1]^d`` tiling an integer-aligned window."""

    window: Window

    def __post_init__(self):
        for v in self.window.lower + self.window.upper:
            if v != math.floor(v):
                raise ValueError(f"window {self.window} is not integer aligned")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.window.sides)

    def indices(self) -> list[tuple[int, ...]]:
        ranges = [range(int(lo), int(hi)) for lo, hi in zip(self.window.lower, self.window.upper)]
        return list(itertools.product(*ranges))

    @property
    def cells(self) -> list[tuple[tuple[int, ...], Window]]:
        return [(k, self.cell(k)) for k in self.indices()]

    def cell(self, k) -> Window:
        k = tuple(int(v) for v in k)
        return Window(tuple(float(v) for v in k), tuple(float(v + 1) for v in k))

    def assign(self, points) -> np.ndarray:
        """Cell index tuple per point as an (N, d) int array; -1 rows outside.

        Cells are half-open except along the window's upper faces, so each
        point of the window belongs to exactly one cell.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, self.window.dim)
        k = np.floor(pts).astype(np.int64)
        upper = np.asarray(self.window.upper, dtype=np.int64)
        k = np.where(pts == upper, upper - 1, k)
        inside = self.window.contains(pts) if len(pts) else np.zeros(0, bool)
        k[~inside] = -(10**9)
        return k


class _Grid:
    """Dense cell grid over a set of points (see ``_kernels``)."""

    __slots__ = ("cell_pts", "cell_cnt", "lo", "ncx", "ncy", "csx", "csy")

    def __init__(self, pts2: np.ndarray, lower, upper, cell: float):
        lo = np.array([lower[0], lower[1] if len(lower) > 1 else 0.0])
        hi = np.array([upper[0], upper[1] if len(upper) > 1 else 1.0])
        side = hi - lo
        nc = [1, 1]
        for a in range(len(lower)):
            want = side[a] / cell if cell > 0 else np.inf
            nc[a] = int(max(1, min(MAX_CELLS_PER_AXIS, math.floor(want))))
        self.lo = lo
        self.ncx, self.ncy = nc
        self.csx, self.csy = side[0] / nc[0], side[1] / nc[1]
        n = len(pts2)
        ncell = self.ncx * self.ncy
        cap = 8
        while True:
            cell_pts = np.empty((ncell, cap), dtype=np.int64)
            cell_cnt = np.zeros(ncell, dtype=np.int64)
            scratch = np.empty(n, dtype=np.int64)
            if K.fill_grid(pts2, n, lo, self.ncx, self.ncy, self.csx, self.csy,
                           cell_pts, cell_cnt, scratch, scratch.copy()):
                break
            cap *= 2
        self.cell_pts, self.cell_cnt = cell_pts, cell_cnt

    def args(self):
        return (self.cell_pts, self.cell_cnt, self.lo, self.ncx, self.ncy, self.csx, self.csy)


def as_xy(points, dim: int) -> np.ndarray:
    """Pad points to the (N, 2) layout used by the kernels."""
    pts = np.asarray(points, dtype=float).reshape(-1, dim)
    if dim == 2:
        return np.ascontiguousarray(pts)
    return np.column_stack([pts[:, 0], np.zeros(len(pts))])


class PointConfig:
    """An immutable finite point pattern inside a window.

    Neighbour queries go through cell grids built lazily per search radius.
    """

    __slots__ = ("points", "window", "_xy", "_grids", "_pairs")

    def __init__(self, points, window: Window, *, check: bool = True):
        pts = np.array(points, dtype=float).reshape(-1, window.dim)
        if check and len(pts) and not np.all(window.contains(pts)):
            raise ValueError("points must lie inside the window")
        pts.setflags(write=False)
        self.points = pts
        self.window = window
        self._xy = None
        self._grids = {}
        self._pairs = {}

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"PointConfig(n={len(self)}, window={self.window.bounds()})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PointConfig)
            and self.window == other.window
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def xy(self) -> np.ndarray:
        if self._xy is None:
            self._xy = as_xy(self.points, self.dim)
        return self._xy

    def grid(self, r: float) -> _Grid:
        # no finer than ~2 cells per point: sparse patterns need few cells
        sides = self.window.sides
        min_cell = max(float(np.max(sides)) / MAX_CELLS_PER_AXIS,
                       (float(np.prod(sides)) / (2.0 * len(self) + 1.0)) ** (1.0 / self.dim))
        cell = max(float(r), min_cell)
        g = self._grids.get(cell)
        if g is None:
            g = _Grid(self.xy, self.window.lower, self.window.upper, cell)
            self._grids[cell] = g
        return g

    def pairs(self, r: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index pairs (i < j) at distance <= r with their distances."""
        key = float(r)
        got = self._pairs.get(key)
        if got is None:
            if len(self) < 2 or r < 0:
                e = np.empty(0, dtype=np.int64)
                got = (e, e.copy(), np.empty(0))
            else:
                got = K.pairs_within(self.xy, *self.grid(r).args(), float(r))
            self._pairs[key] = got
        return got

    def cross(self, queries, r: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pairs (query index, point index) at distance <= r."""
        q = as_xy(queries, self.dim)
        if len(self) == 0 or len(q) == 0:
            e = np.empty(0, dtype=np.int64)
            return e, e.copy(), np.empty(0)
        return K.cross_within(q, self.xy, *self.grid(r).args(), float(r))

    def restrict(self, w: Window) -> PointConfig:
        return PointConfig(self.points[w.contains(self.points)], w) if len(self) else PointConfig([], w)

    def with_point(self, x) -> PointConfig:
        return PointConfig(np.vstack([self.points, np.reshape(x, (1, self.dim))]), self.window)

    def without(self, i: int) -> PointConfig:
        return PointConfig(np.delete(self.points, i, axis=0), self.window, check=False)


def pairwise_min_distance(config: PointConfig) -> float:
    """Smallest distance over unordered pairs; +inf with fewer than two points."""
    if len(config) < 2:
        return math.inf
    i, j = K.min_pair_distance(config.xy)
    # evaluate the winning pair with math.dist so the value matches a direct computation
    return math.dist(config.points[i], config.points[j])


def neighbors_within(config: PointConfig, x, r: float) -> np.ndarray:
    """Points y != x of the configuration with |x - y| <= r, in storage order."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    x = np.reshape(np.asarray(x, dtype=float), (1, config.dim))
    _, j, _ = config.cross(x, r)
    pts = config.points[j]
    return pts[np.any(pts != x, axis=1)]


# ---------------------------------------------------------------------------
# point pattern files


def write_pattern(path, config: PointConfig) -> None:
    """CSV with an ``x,y`` header and a ``# window:`` metadata line."""
    path = Path(path)
    header = "x" if config.dim == 1 else "x,y"
    lines = ["# window: " + " ".join(repr(v) for v in config.window.bounds()), header]
    lines += [",".join(repr(float(v)) for v in row) for row in config.points]
    path.write_text("\n".join(lines) + "\n")


def read_pattern(path, window: Window | None = None) -> PointConfig:
    rows, found = [], None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("window:"):
                found = Window.from_bounds(*map(float, body.split(":", 1)[1].split()))
            continue
        if line[0].isalpha():
            continue
        rows.append([float(v) for v in line.split(",")])
    w = window or found
    if w is None:
        raise ValueError(f"{path}: no window given and no '# window:' line")
    return PointConfig(np.array(rows, dtype=float).reshape(-1, w.dim), w)
