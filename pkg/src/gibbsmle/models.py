"""Parametric Gibbs interactions: energies, local energies and hardcore support.

All Hamiltonians are evaluated with free boundary conditions unless the
configuration carries points outside the evaluation window, in which case
those points act as the exterior configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .geometry import CellPartition, PointConfig, Window, as_xy, pairwise_min_distance

# Energies live in R u {+inf}; a plain float carries both.
ExtendedEnergy = float


class ModelError(ValueError):
    """Parameters outside the family's existence domain."""


class UnsupportedDimension(ValueError):
    pass


class Kind(str, Enum):
    POISSON = "poisson"
    STRAUSS = "strauss"
    HARDCORE_STRAUSS = "hardcore_strauss"
    PIECEWISE = "piecewise"
    LENNARD_JONES = "lennard_jones"
    AREA = "area_interaction"

    @property
    def pairwise(self) -> bool:
        return self is not Kind.AREA


@dataclass(frozen=True)
class ModelParams:
    """Hardcore distance plus the interaction parameters.

    ``beta`` and ``ranges`` are the interaction levels and breakpoints of the
    piecewise families (a single entry each for Strauss and area-interaction);
    ``lj`` holds (A, B, n, m) for Lennard-Jones.
    """

    z: float
    delta: float = 0.0
    beta: tuple[float, ...] = ()
    ranges: tuple[float, ...] = ()
    lj: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "ranges", tuple(float(r) for r in self.ranges))
        if self.lj is not None:
            object.__setattr__(self, "lj", tuple(float(v) for v in self.lj))


@dataclass(frozen=True)
class PairPotentialSpec:
    """Piecewise pair potential with breakpoints R_1 < ... < R_q.

    Pieces are constants or vectorised callables of the distance. At a
    breakpoint the smaller one-sided value is used; beyond R_q the potential
    vanishes and below ``delta`` it is infinite.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple
    delta: float = 0.0

    @property
    def range(self) -> float:
        return self.breakpoints[-1] if self.breakpoints else 0.0

    def _piece(self, k: int, d: np.ndarray) -> np.ndarray:
        if k >= len(self.pieces):
            return np.zeros_like(d)
        p = self.pieces[k]
        if callable(p):
            return np.asarray(p(d), dtype=float) * np.ones_like(d)
        return np.full_like(d, float(p))

    def __call__(self, dist):
        d = np.asarray(dist, dtype=float)
        flat = np.atleast_1d(d).ravel()
        out = np.zeros_like(flat)
        lower = 0.0
        for k, rk in enumerate(self.breakpoints):
            sel = (flat >= lower) & (flat < rk)
            if k > 0:
                sel &= flat > lower
            if sel.any():
                out[sel] = self._piece(k, flat[sel])
            at = flat == rk
            if at.any():
                out[at] = np.minimum(self._piece(k, flat[at]), self._piece(k + 1, flat[at]))
            lower = rk
        out[flat < self.delta] = np.inf
        return float(out[0]) if d.ndim == 0 else out.reshape(d.shape)


@dataclass(frozen=True)
class LennardJonesPotential:
    A: float
    B: float
    n: float
    m: float
    truncation: float = math.inf

    @property
    def range(self) -> float:
        return self.truncation

    def __call__(self, dist):
        d = np.asarray(dist, dtype=float)
        flat = np.atleast_1d(d).ravel()
        out = np.zeros_like(flat)
        live = (flat >= K.LJ_MIN_DIST) & (flat <= self.truncation)
        with np.errstate(over="ignore"):
            out[live] = self.A * flat[live] ** (-self.n) - self.B * flat[live] ** (-self.m)
        out[flat < K.LJ_MIN_DIST] = np.inf
        return float(out[0]) if d.ndim == 0 else out.reshape(d.shape)


def pair_potential_eval(spec, dist):
    """Pair potential value(s) at the given distance(s)."""
    return spec(dist)


@dataclass(frozen=True)
class GibbsModel:
    """A model family member: kind, parameters and evaluation options.

    ``truncation`` fixes the Lennard-Jones cutoff (default: derived from the
    potential's length scale, capped at half the window side). ``pieces``
    replaces the constant levels of a piecewise model by callables
    ``f(dist, beta, ranges)``.
    """

    kind: Kind
    params: ModelParams
    truncation: float | None = None
    pieces: tuple[Callable, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        self._validate()

    # constructors ---------------------------------------------------------

    @classmethod
    def poisson(cls, z: float) -> GibbsModel:
        return cls(Kind.POISSON, ModelParams(z=z))

    @classmethod
    def strauss(cls, z: float, beta: float, R: float, delta: float = 0.0) -> GibbsModel:
        return cls(Kind.STRAUSS, ModelParams(z=z, delta=delta, beta=(beta,), ranges=(R,)))

    @classmethod
    def hardcore_strauss(cls, z: float, beta: float, R: float, delta: float) -> GibbsModel:
        return cls(Kind.HARDCORE_STRAUSS,
                   ModelParams(z=z, delta=delta, beta=(beta,), ranges=(R,)))

    @classmethod
    def piecewise(cls, z: float, beta: Sequence[float], breakpoints: Sequence[float],
                  delta: float = 0.0, pieces=None) -> GibbsModel:
        return cls(Kind.PIECEWISE,
                   ModelParams(z=z, delta=delta, beta=tuple(beta), ranges=tuple(breakpoints)),
                   pieces=None if pieces is None else tuple(pieces))

    @classmethod
    def lennard_jones(cls, z: float, A: float = 1.0, B: float = 1.0, n: float = 12.0,
                      m: float = 6.0, truncation: float | None = None) -> GibbsModel:
        return cls(Kind.LENNARD_JONES, ModelParams(z=z, lj=(A, B, n, m)), truncation=truncation)

    @classmethod
    def area_interaction(cls, z: float, beta: float, R: float, delta: float = 0.0) -> GibbsModel:
        return cls(Kind.AREA, ModelParams(z=z, delta=delta, beta=(beta,), ranges=(R,)))

    # validation -----------------------------------------------------------

    def _validate(self):
        p, kind = self.params, self.kind
        if not math.isfinite(p.z):
            raise ModelError("z must be finite")
        if p.delta < 0:
            raise ModelError("hardcore distance must be nonnegative")
        if kind is Kind.POISSON:
            if p.beta or p.ranges or p.lj:
                raise ModelError("the Poisson model has only z")
            return
        if kind is Kind.LENNARD_JONES:
            if p.lj is None:
                raise ModelError("Lennard-Jones needs (A, B, n, m)")
            A, _, n, m = p.lj
            if A <= 0:
                raise ModelError("Lennard-Jones requires A > 0")
            if not 0 < m < n:
                raise ModelError("Lennard-Jones requires 0 < m < n (and d < m)")
            return
        if kind in (Kind.STRAUSS, Kind.HARDCORE_STRAUSS, Kind.AREA):
            if len(p.beta) != 1 or len(p.ranges) != 1:
                raise ModelError(f"{kind.value} takes one beta and one range")
            if p.ranges[0] < 0:
                raise ModelError("interaction range must be nonnegative")
        if kind is Kind.HARDCORE_STRAUSS and p.delta <= 0:
            raise ModelError("the hardcore Strauss model needs delta > 0")
        if kind is Kind.PIECEWISE:
            r = p.ranges
            if not r or r[0] <= 0 or any(b <= a for a, b in zip(r, r[1:])):
                raise ModelError("breakpoints must be positive and strictly increasing")
            if self.pieces is None and len(p.beta) != len(r):
                raise ModelError("one beta level per breakpoint interval")
            if self.pieces is not None and len(self.pieces) != len(r):
                raise ModelError("one piece per breakpoint interval")
        if kind.pairwise and p.delta == 0 and self.pieces is None and any(b < 0 for b in p.beta):
            raise ModelError(
                "negative interaction without a hardcore: no Gibbs measure exists "
                "(beta must be nonnegative when delta = 0)"
            )

    def check_window(self, w: Window) -> None:
        if self.kind is Kind.LENNARD_JONES and not w.dim < self.params.lj[3]:
            raise ModelError(f"Lennard-Jones requires d < m (d = {w.dim})")
        if self.kind is Kind.AREA and w.dim != 2:
            raise UnsupportedDimension("area-interaction is implemented for d = 2")

    # named parameters -----------------------------------------------------

    @property
    def param_names(self) -> tuple[str, ...]:
        k, p = self.kind, self.params
        if k is Kind.POISSON:
            return ("z",)
        if k is Kind.LENNARD_JONES:
            return ("z", "A", "B", "n", "m")
        if k is Kind.PIECEWISE:
            return (("z",) + tuple(f"beta{i + 1}" for i in range(len(p.beta)))
                    + tuple(f"R{i + 1}" for i in range(len(p.ranges))))
        return ("z", "beta", "R")

    @property
    def range_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.param_names if n.startswith("R"))

    @property
    def linear_names(self) -> tuple[str, ...]:
        """Parameters entering the energy linearly (empty if none is linear)."""
        if self.kind is Kind.LENNARD_JONES or self.pieces is not None:
            return ()
        return tuple(n for n in self.param_names if n == "z" or n.startswith("beta"))

    def get(self, name: str) -> float:
        p = self.params
        if name == "z":
            return p.z
        if name == "delta":
            return p.delta
        if name in ("beta", "R"):
            return (p.beta if name == "beta" else p.ranges)[0]
        if name in ("A", "B", "n", "m"):
            return p.lj["ABnm".index(name)]
        if name.startswith("beta"):
            return p.beta[int(name[4:]) - 1]
        if name.startswith("R"):
            return p.ranges[int(name[1:]) - 1]
        raise KeyError(name)

    def values(self) -> dict[str, float]:
        return {n: self.get(n) for n in self.param_names}

    def with_values(self, values=None, **kw) -> GibbsModel:
        """Copy with some named parameters replaced (``delta`` included)."""
        upd = dict(values or {}, **kw)
        p = self.params
        beta, ranges = list(p.beta), list(p.ranges)
        lj = list(p.lj) if p.lj else None
        z, delta = p.z, p.delta
        for name, v in upd.items():
            v = float(v)
            if name == "z":
                z = v
            elif name == "delta":
                delta = v
            elif name == "beta":
                beta[0] = v
            elif name == "R":
                ranges[0] = v
            elif name in ("A", "B", "n", "m"):
                lj["ABnm".index(name)] = v
            elif name.startswith("beta"):
                beta[int(name[4:]) - 1] = v
            elif name.startswith("R"):
                ranges[int(name[1:]) - 1] = v
            else:
                raise KeyError(name)
        params = ModelParams(z=z, delta=delta, beta=tuple(beta), ranges=tuple(ranges),
                             lj=None if lj is None else tuple(lj))
        return replace(self, params=params)

    def with_params(self, params: ModelParams) -> GibbsModel:
        return replace(self, params=params)

    # potentials -----------------------------------------------------------

    def truncation_for(self, w: Window | None) -> float:
        if self.kind is not Kind.LENNARD_JONES:
            return math.inf
        if self.truncation is not None:
            return float(self.truncation)
        A, B, n, m = self.params.lj
        t = 5.0 * (A / max(abs(B), 1e-12)) ** (1.0 / (n - m))
        if w is not None:
            t = min(t, 0.5 * float(np.min(w.sides)))
        return t

    def pair_potential(self, w: Window | None = None):
        p = self.params
        if self.kind is Kind.LENNARD_JONES:
            return LennardJonesPotential(*p.lj, truncation=self.truncation_for(w))
        if self.kind is Kind.POISSON:
            return PairPotentialSpec((), (), p.delta)
        if self.kind is Kind.AREA:
            raise TypeError("area-interaction is not a pair potential model")
        if self.pieces is not None:
            beta, ranges = p.beta, p.ranges
            bound = tuple((lambda d, f=f: f(d, beta, ranges)) for f in self.pieces)
            return PairPotentialSpec(p.ranges, bound, p.delta)
        return PairPotentialSpec(p.ranges, p.beta, p.delta)

    def interaction_range(self, w: Window | None = None) -> float:
        """Largest distance at which two points interact (hardcore included)."""
        p = self.params
        if self.kind is Kind.POISSON:
            r = 0.0
        elif self.kind is Kind.LENNARD_JONES:
            r = self.truncation_for(w)
        elif self.kind is Kind.AREA:
            r = 2.0 * p.ranges[0] if p.beta[0] != 0 else 0.0
        else:
            r = p.ranges[-1]
        return max(r, p.delta)

    def kernel_args(self, w: Window | None = None):
        """(kind code, scalar params, breakpoints, levels) for compiled paths.

        Returns None when the model carries Python callables.
        """
        if self.pieces is not None:
            return None
        p = self.params
        par = np.zeros(K.N_PAR)
        par[K.P_Z] = p.z
        par[K.P_DELTA] = p.delta
        par[K.P_RMAX] = self.interaction_range(w)
        brk = np.array(p.ranges if self.kind.pairwise else (), dtype=float)
        vals = np.array(p.beta if self.kind.pairwise else (), dtype=float)
        if self.kind is Kind.LENNARD_JONES:
            code = K.KIND_LJ
            par[K.P_A:K.P_M + 1] = p.lj
            par[K.P_TRUNC] = self.truncation_for(w)
            brk = np.zeros(0)
            vals = np.zeros(0)
        elif self.kind is Kind.AREA:
            code = K.KIND_AREA
            par[K.P_AREA_R] = p.ranges[0]
            par[K.P_AREA_BETA] = p.beta[0]
        else:
            code = K.KIND_PIECEWISE
        return code, par, brk, vals


# ---------------------------------------------------------------------------
# energies


def support_indicator(delta: float, config: PointConfig) -> bool:
    """True iff no two points are closer than ``delta``."""
    return delta <= 0 or pairwise_min_distance(config) >= delta


def disc_union_area(points, R: float, region: Window | None = None) -> float:
    """Area of the union of radius-R discs, optionally intersected with a box."""
    if isinstance(points, PointConfig):
        if points.dim != 2:
            raise UnsupportedDimension("disc union areas need d = 2")
        pts = points.xy
    else:
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return 0.0
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise UnsupportedDimension("disc union areas need d = 2")
        pts = np.ascontiguousarray(pts)
    if R < 0:
        raise ValueError("radius must be nonnegative")
    if region is None:
        return float(K.union_area_all(pts, float(R)))
    if region.dim != 2:
        raise UnsupportedDimension("clip region must be 2-dimensional")
    near = pts[region.distance_to(pts) < R] if len(pts) else pts
    return float(K.union_area_clipped(np.ascontiguousarray(near), float(R), *region.bounds()))


def _interacting_pairs(model: GibbsModel, config: PointConfig, w: Window | None):
    r = model.interaction_range(w)
    if r <= 0 or len(config) < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), np.empty(0)
    return config.pairs(r)


def _pair_energies(model: GibbsModel, w: Window | None, d: np.ndarray) -> np.ndarray:
    if len(d) == 0:
        return d
    vals = np.asarray(model.pair_potential(w)(d), dtype=float)
    if model.params.delta > 0:
        vals = np.where(d < model.params.delta, np.inf, vals)
    return vals


def hamiltonian(model: GibbsModel, config: PointConfig, w: Window | None = None) -> ExtendedEnergy:
    """Energy of the configuration in ``w`` (default: the config's window).

    Points outside ``w`` are treated as the exterior configuration; with all
    points inside this is the free-boundary energy.
    """
    w = config.window if w is None else w
    model.check_window(w)
    inside = w.contains(config.points) if len(config) else np.zeros(0, bool)
    n_in = int(inside.sum())
    p = model.params
    i, j, d = _interacting_pairs(model, config, w)
    keep = inside[i] | inside[j] if len(i) else np.zeros(0, bool)
    if p.delta > 0 and np.any(d[keep] < p.delta):
        return math.inf
    if model.kind is Kind.AREA:
        R, beta = p.ranges[0], p.beta[0]
        e = p.z * n_in
        if beta == 0 or R == 0 or n_in == 0:
            return float(e)
        near = ~inside & (w.distance_to(config.points) < 2 * R)
        both = config.xy[inside | near]
        ext = config.xy[near]
        return float(e + beta * (K.union_area_all(both, R) - K.union_area_all(ext, R)))
    energies = _pair_energies(model, w, d[keep])
    return float(p.z * n_in + energies.sum())


def local_energies(model: GibbsModel, U, config: PointConfig, skip=None) -> np.ndarray:
    """Insertion energies h(u | config) for each row of ``U``.

    ``skip`` optionally names one config index per query that is ignored,
    giving h(x_i | config minus x_i).
    """
    w = config.window
    model.check_window(w)
    Uxy = as_xy(U, config.dim)
    skips = np.full(len(Uxy), -1, dtype=np.int64) if skip is None else np.asarray(skip, np.int64)
    args = model.kernel_args(w)
    if args is not None:
        code, par, brk, vals = args
        g = config.grid(max(par[K.P_RMAX], 0.0))
        return K.local_energies(Uxy, skips, config.xy, *g.args(), code, par, brk, vals)
    # Python pieces: pairwise only
    out = np.full(len(Uxy), model.params.z)
    r = model.interaction_range(w)
    if r <= 0 or len(config) == 0:
        return out
    qi, pj, d = config.cross(Uxy, r)
    keep = pj != skips[qi]
    qi, d = qi[keep], d[keep]
    np.add.at(out, qi, _pair_energies(model, w, d))
    return out


def local_energy(model: GibbsModel, x, config: PointConfig) -> ExtendedEnergy:
    """h(x | config) = H(config + x) - H(config) for x not in config."""
    return float(local_energies(model, np.reshape(x, (1, -1)), config)[0])


# ---------------------------------------------------------------------------
# unit-cell decomposition of the energy


def mean_energy_cell(model: GibbsModel, config: PointConfig, cell_index,
                     window: Window | None = None) -> float:
    """Energy attributed to the unit cell ``k + [0, 1]^d``.

    Pairwise models: points in the cell, pairs inside the cell and half of the
    pairs leaving it. Area-interaction: points in the cell plus beta times the
    covered area of the cell.
    """
    part = CellPartition(window or config.window)
    k = tuple(int(v) for v in np.atleast_1d(cell_index))
    cells = part.assign(config.points) if len(config) else np.zeros((0, part.window.dim), int)
    in_cell = np.all(cells == np.array(k), axis=1)
    p = model.params
    e = p.z * float(in_cell.sum())
    if model.kind is Kind.AREA:
        R, beta = p.ranges[0], p.beta[0]
        if beta != 0 and R > 0 and len(config):
            box = part.cell(k)
            near = config.xy[box.distance_to(config.points) < R]
            e += beta * float(K.union_area_clipped(np.ascontiguousarray(near), R, *box.bounds()))
        return e
    i, j, d = _interacting_pairs(model, config, None)
    a, b = in_cell[i], in_cell[j]
    touch = a | b
    if not touch.any():
        return e
    phi = _pair_energies(model, config.window, d[touch])
    weight = np.where(a[touch] & b[touch], 1.0, 0.5)
    return float(e + np.sum(weight * phi))


def boundary_energy(model: GibbsModel, config: PointConfig, w: Window) -> float:
    """Remainder term of the unit-cell decomposition over ``w``."""
    p = model.params
    inside = w.contains(config.points) if len(config) else np.zeros(0, bool)
    if model.kind is Kind.AREA:
        R, beta = p.ranges[0], p.beta[0]
        if beta == 0 or R == 0 or not inside.any():
            return 0.0
        near = ~inside & (w.distance_to(config.points) < 2 * R)
        both = config.xy[inside | near]
        ext = config.xy[near]
        covered = K.union_area_clipped(
            np.ascontiguousarray(config.xy[w.distance_to(config.points) < R]), R, *w.bounds()
        )
        return float(beta * (K.union_area_all(both, R) - K.union_area_all(ext, R) - covered))
    i, j, d = _interacting_pairs(model, config, None)
    cross = inside[i] != inside[j]
    if not cross.any():
        return 0.0
    return float(0.5 * np.sum(_pair_energies(model, config.window, d[cross])))


def linear_statistics(model: GibbsModel, config: PointConfig) -> np.ndarray:
    """Statistics T with H = sum(theta_k * T_k) over ``model.linear_names``.

    Valid for models whose energy is linear in (z, beta) at fixed ranges;
    distances that fall exactly on a breakpoint are assigned to the outer
    interval.
    """
    names = model.linear_names
    if not names:
        raise TypeError(f"{model.kind.value} energy is not linear in its parameters")
    p = model.params
    out = np.zeros(len(names))
    out[0] = len(config)
    if model.kind is Kind.POISSON:
        return out
    if model.kind is Kind.AREA:
        if len(config) and p.ranges[0] > 0:
            out[1] = K.union_area_all(config.xy, p.ranges[0])
        return out
    if len(config) < 2:
        return out
    _, _, d = config.pairs(p.ranges[-1])
    edges = (0.0,) + p.ranges
    for k in range(len(p.ranges)):
        out[1 + k] = np.count_nonzero((d >= edges[k]) & (d < edges[k + 1]))
    return out
