"""Birth-death-move Metropolis-Hastings for finite-window Gibbs densities.

The target is exp(-H(omega)) restricted to the hardcore support, relative to
the unit-rate Poisson process on the window. Each proposal consumes five
uniforms from the chain's generator: move type, two position/index
coordinates, the acceptance draw and a direction angle. The compiled loop in
``_kernels.mh_run`` and the reference ``mh_step`` read them in the same order,
so both produce the same chain for a given seed.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .geometry import MAX_CELLS_PER_AXIS, PointConfig, Window, read_pattern, write_pattern
from .models import GibbsModel, Kind, hamiltonian, local_energies, support_indicator

ENERGY_TOL = 1e-8
GNZ_BATCHES = 30


class NonErgodicWarning(RuntimeWarning):
    """The chain barely moved during burn-in."""


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, proposal and seeding options for one chain.

    A sweep is ``steps_per_sweep`` proposals (default: the window volume,
    rounded up). Draws are taken after each ``thin``-th sweep past burn-in.
    """

    sweeps: int = 2000
    burn_in: int = 500
    thin: int = 10
    p_birth: float = 0.35
    p_death: float = 0.35
    p_move: float = 0.3
    move_radius: float = 0.1
    seed: int = 0
    boundary: str = "free"
    steps_per_sweep: int | None = None
    check_energy: bool = False

    def __post_init__(self):
        probs = (self.p_birth, self.p_death, self.p_move)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("move probabilities must be nonnegative and sum to 1")
        if self.p_birth == 0 or self.p_death == 0:
            raise ValueError("births and deaths must both be possible")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 <= self.burn_in <= self.sweeps:
            raise ValueError("need 0 <= burn_in <= sweeps")
        if self.boundary not in ("free", "periodic"):
            raise ValueError("boundary must be 'free' or 'periodic'")
        if self.move_radius < 0:
            raise ValueError("move radius must be nonnegative")

    @property
    def n_draws(self) -> int:
        return (self.sweeps - self.burn_in) // self.thin

    def sweep_length(self, w: Window) -> int:
        if self.steps_per_sweep is not None:
            return max(1, int(self.steps_per_sweep))
        return max(1, math.ceil(w.volume()))


@dataclass
class ChainState:
    """Mutable single-owner state of one chain.

    ``points`` is kept in the order the kernels maintain: births append,
    deaths move the last point into the freed slot.
    """

    points: np.ndarray
    window: Window
    energy: float = 0.0
    step: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))

    @classmethod
    def empty(cls, w: Window, seed: int = 0) -> ChainState:
        return cls(np.zeros((0, w.dim)), w, rng=np.random.default_rng(seed))

    @property
    def config(self) -> PointConfig:
        return PointConfig(self.points, self.window, check=False)


@dataclass
class SampleSet:
    """Thinned draws of one or more chains plus provenance."""

    draws: list[PointConfig]
    model: GibbsModel
    window: Window
    config: SamplerConfig
    acceptance: dict[str, float] = field(default_factory=dict)
    chain_energies: np.ndarray | None = None
    seeds: tuple[int, ...] = ()
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.draws)

    def counts(self) -> np.ndarray:
        return np.array([len(d) for d in self.draws], dtype=float)

    def energies(self, model: GibbsModel | None = None) -> np.ndarray:
        """Hamiltonian of every draw under ``model`` (default: the sampling model)."""
        m = model or self.model
        return np.array([hamiltonian(m, d, self.window) for d in self.draws])

    def export(self, directory) -> Path:
        """Write one CSV per draw plus a ``manifest.json``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        width = max(4, len(str(len(self.draws))))
        files = []
        for i, d in enumerate(self.draws):
            name = f"draw_{i:0{width}d}.csv"
            write_pattern(out / name, d)
            files.append(name)
        manifest = {
            "model": model_record(self.model),
            "window": list(self.window.bounds()),
            "sampler": asdict(self.config),
            "seeds": list(self.seeds or (self.config.seed,)),
            "acceptance": self.acceptance,
            "files": files,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return out

    @classmethod
    def load(cls, directory) -> SampleSet:
        src = Path(directory)
        man = json.loads((src / "manifest.json").read_text())
        w = Window.from_bounds(*man["window"])
        draws = [read_pattern(src / f, w) for f in man["files"]]
        return cls(
            draws=draws,
            model=model_from_record(man["model"]),
            window=w,
            config=SamplerConfig(**man["sampler"]),
            acceptance=man["acceptance"],
            seeds=tuple(man["seeds"]),
        )

    @staticmethod
    def merge(sets: Sequence[SampleSet]) -> SampleSet:
        """Concatenate chains of one model and window, ordered by seed."""
        if not sets:
            raise ValueError("nothing to merge")
        first = sets[0]
        for s in sets[1:]:
            if s.model != first.model or s.window != first.window:
                raise ValueError("can only merge samples of one model and window")
        ordered = sorted(sets, key=lambda s: min(s.seeds or (s.config.seed,)))
        draws = [d for s in ordered for d in s.draws]
        energies = None
        if all(s.chain_energies is not None for s in ordered):
            energies = np.concatenate([s.chain_energies for s in ordered])
        seeds = tuple(x for s in ordered for x in (s.seeds or (s.config.seed,)))
        weights = np.array([len(s) for s in ordered], dtype=float)
        acc = {}
        for key in first.acceptance:
            vals = np.array([s.acceptance.get(key, np.nan) for s in ordered])
            acc[key] = float(np.average(vals, weights=weights)) if weights.sum() else float("nan")
        return SampleSet(draws, first.model, first.window, first.config, acc, energies, seeds)


def model_record(model: GibbsModel) -> dict:
    p = model.params
    rec = {"kind": model.kind.value, "z": p.z, "delta": p.delta,
           "beta": list(p.beta), "ranges": list(p.ranges)}
    if p.lj is not None:
        rec["lj"] = list(p.lj)
    if model.truncation is not None:
        rec["truncation"] = model.truncation
    return rec


def model_from_record(rec: dict) -> GibbsModel:
    from .models import ModelParams

    params = ModelParams(z=rec["z"], delta=rec.get("delta", 0.0), beta=tuple(rec.get("beta", ())),
                         ranges=tuple(rec.get("ranges", ())),
                         lj=tuple(rec["lj"]) if rec.get("lj") else None)
    return GibbsModel(Kind(rec["kind"]), params, truncation=rec.get("truncation"))


# ---------------------------------------------------------------------------
# reference single step


def _periodic_local_energy(model: GibbsModel, x, pts: np.ndarray, skip: int, w: Window) -> float:
    d = np.delete(pts, skip, axis=0) - np.asarray(x) if skip >= 0 else pts - np.asarray(x)
    L = w.sides
    d = d - L * np.floor(d / L + 0.5)
    dist = np.sqrt(np.sum(d * d, axis=1))
    r = model.interaction_range(w)
    dist = dist[dist <= r]
    if np.any(dist < model.params.delta):
        return math.inf
    return float(model.params.z + np.sum(model.pair_potential(w)(dist)))


def _h(model, x, state: ChainState, skip: int, periodic: bool) -> float:
    if periodic:
        return _periodic_local_energy(model, x, state.points, skip, state.window)
    cfg = state.config
    sk = None if skip < 0 else [skip]
    return float(local_energies(model, np.reshape(x, (1, -1)), cfg, sk)[0])


def mh_step(state: ChainState, model: GibbsModel, w: Window,
            cfg: SamplerConfig = SamplerConfig()) -> ChainState:
    """One birth, death or move proposal; returns the updated state.

    A plain-Python transcription of the compiled sampler, useful as a
    reference and for models with callable potentials.
    """
    u0, u1, u2, u3, u4 = state.rng.random(5)
    pts = state.points
    n = len(pts)
    vol = w.volume()
    periodic = cfg.boundary == "periodic"
    accepted, proposed = state.accepted.copy(), state.proposed.copy()
    new_pts, energy = pts, state.energy

    def accept(log_a):
        return u3 == 0.0 or math.log(u3) < log_a

    if u0 < cfg.p_birth:
        proposed[0] += 1
        x = np.array(w.lower) + np.array([u1, u2][: w.dim]) * w.sides
        h = _h(model, x, state, -1, periodic)
        if math.isfinite(h):
            la = math.log(cfg.p_death / cfg.p_birth) + math.log(vol) - h - math.log(n + 1.0)
            if accept(la):
                new_pts = np.vstack([pts, x])
                energy += h
                accepted[0] += 1
    elif u0 < cfg.p_birth + cfg.p_death:
        proposed[1] += 1
        if n:
            i = min(int(u1 * n), n - 1)
            h = _h(model, pts[i], state, i, periodic)
            la = math.log(cfg.p_birth / cfg.p_death) + math.log(n) + h - math.log(vol)
            if accept(la):
                new_pts = pts.copy()
                new_pts[i] = pts[n - 1]
                new_pts = new_pts[: n - 1]
                energy -= h
                accepted[1] += 1
    else:
        proposed[2] += 1
        if n:
            i = min(int(u1 * n), n - 1)
            old = pts[i]
            if w.dim == 2:
                rr, ang = cfg.move_radius * math.sqrt(u2), 2.0 * math.pi * u4
                new = old + rr * np.array([math.cos(ang), math.sin(ang)])
            else:
                new = old + cfg.move_radius * (2.0 * u2 - 1.0)
            lo, side = np.array(w.lower), w.sides
            if periodic:
                new = lo + np.mod(new - lo, side)
            ok = periodic or bool(w.contains(new)[0])
            if ok:
                h_old = _h(model, old, state, i, periodic)
                h_new = _h(model, new, state, i, periodic)
                if math.isfinite(h_new) and accept(h_old - h_new):
                    new_pts = pts.copy()
                    new_pts[i] = new
                    energy += h_new - h_old
                    accepted[2] += 1
    return replace(state, points=new_pts, energy=energy, step=state.step + 1,
                   accepted=accepted, proposed=proposed)


# ---------------------------------------------------------------------------
# compiled chain


class _Buffers:
    """Point array and dense cell grid owned by one compiled chain."""

    def __init__(self, w: Window, cell: float, cap: int, ccap: int = 8):
        self.lo = np.array([w.lower[0], w.lower[1] if w.dim == 2 else 0.0])
        self.hi = np.array([w.upper[0], w.upper[1] if w.dim == 2 else 1.0])
        side = self.hi - self.lo
        cell = max(cell, float(np.max(w.sides)) / MAX_CELLS_PER_AXIS)
        nc = [1, 1]
        for a in range(w.dim):
            nc[a] = int(max(1, min(MAX_CELLS_PER_AXIS, math.floor(side[a] / cell))))
        self.ncx, self.ncy = nc
        self.csx, self.csy = side[0] / nc[0], side[1] / nc[1]
        self.pts = np.zeros((cap, 2))
        self.cell_of = np.zeros(cap, dtype=np.int64)
        self.slot = np.zeros(cap, dtype=np.int64)
        self.n = 0
        self._alloc_cells(ccap)

    def _alloc_cells(self, ccap):
        ncell = self.ncx * self.ncy
        while True:
            self.cell_pts = np.zeros((ncell, ccap), dtype=np.int64)
            self.cell_cnt = np.zeros(ncell, dtype=np.int64)
            if K.fill_grid(self.pts, self.n, self.lo, self.ncx, self.ncy, self.csx, self.csy,
                           self.cell_pts, self.cell_cnt, self.cell_of, self.slot):
                return
            ccap *= 2

    def grow_points(self):
        cap = 2 * self.pts.shape[0]
        for name in ("pts", "cell_of", "slot"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def grow_cells(self):
        self._alloc_cells(2 * self.cell_pts.shape[1])


def _check_periodic(model: GibbsModel, w: Window):
    if model.kind is Kind.AREA:
        raise ValueError("periodic boundaries are offered for pair-potential models only")
    if 2 * model.interaction_range(w) >= float(np.min(w.sides)):
        raise ValueError("periodic boundaries need an interaction range below half the side")


def run_chain(model: GibbsModel, w: Window, cfg: SamplerConfig,
              init: PointConfig | None = None) -> SampleSet:
    """Simulate one chain from the empty pattern (or ``init``) and thin it."""
    model.check_window(w)
    periodic = cfg.boundary == "periodic"
    if periodic:
        _check_periodic(model, w)
    if init is not None and not support_indicator(model.params.delta, init):
        raise ValueError("initial pattern violates the hardcore support")
    args = model.kernel_args(w)
    if args is None:
        return _run_python(model, w, cfg, init)

    code, par, brk, vals = args
    buf = _Buffers(w, par[K.P_RMAX], cap=max(64, 2 * math.ceil(w.volume())))
    energy = 0.0
    if init is not None and len(init):
        while buf.pts.shape[0] < len(init):
            buf.grow_points()
        buf.pts[: len(init)] = init.xy
        buf.n = len(init)
        buf.grow_cells()
        energy = hamiltonian(model, init, w)

    log_ratios = np.array([math.log(cfg.p_death / cfg.p_birth),
                           math.log(cfg.p_birth / cfg.p_death)])
    rng = np.random.default_rng(cfg.seed)
    steps = cfg.sweep_length(w)
    acc = np.zeros(3, dtype=np.int64)
    prop = np.zeros(3, dtype=np.int64)

    def advance(n_sweeps):
        nonlocal energy
        uni = rng.random((n_sweeps * steps, 5))
        start = 0
        while True:
            start, buf.n, energy, status = K.mh_run(
                buf.pts, buf.n, buf.cell_pts, buf.cell_cnt, buf.cell_of, buf.slot,
                buf.lo, buf.hi, buf.ncx, buf.ncy, buf.csx, buf.csy, w.dim, periodic,
                code, par, brk, vals, log_ratios, cfg.p_birth, cfg.p_death,
                cfg.move_radius, uni, start, energy, acc, prop,
            )
            if status == K.STATUS_DONE:
                return
            if status == K.STATUS_GROW_POINTS:
                buf.grow_points()
            else:
                buf.grow_cells()

    if cfg.burn_in:
        advance(cfg.burn_in)
    _warn_if_stuck(acc, prop)
    acc_burn, prop_burn = acc.copy(), prop.copy()

    draws, energies = [], []
    for _ in range(cfg.n_draws):
        advance(cfg.thin)
        pts = buf.pts[: buf.n, : w.dim].copy()
        draw = PointConfig(pts, w, check=False)
        if cfg.check_energy and not periodic:
            energy = _check_cache(model, draw, w, energy)
        draws.append(draw)
        energies.append(energy)
    rest = cfg.sweeps - cfg.burn_in - cfg.n_draws * cfg.thin
    if rest:
        advance(rest)
    return SampleSet(
        draws, model, w, cfg,
        acceptance=_rates(acc - acc_burn, prop - prop_burn),
        chain_energies=np.array(energies),
        seeds=(cfg.seed,),
    )


def _rates(acc, prop) -> dict[str, float]:
    names = ("birth", "death", "move")
    out = {k: float(a / p) if p else float("nan") for k, a, p in zip(names, acc, prop)}
    out["overall"] = float(acc.sum() / prop.sum()) if prop.sum() else float("nan")
    return out


def _warn_if_stuck(acc, prop):
    if prop.sum() and acc.sum() / prop.sum() < 1e-3:
        warnings.warn(
            f"acceptance rate {acc.sum() / prop.sum():.2e} during burn-in; the chain is "
            "not mixing", NonErgodicWarning, stacklevel=3,
        )


def _check_cache(model, draw, w, cached) -> float:
    fresh = hamiltonian(model, draw, w)
    if abs(fresh - cached) > ENERGY_TOL * max(1.0, abs(fresh)):
        raise RuntimeError(f"energy cache drifted: cached {cached!r}, recomputed {fresh!r}")
    return fresh


def _run_python(model, w, cfg, init) -> SampleSet:
    state = ChainState.empty(w, cfg.seed)
    if init is not None:
        state.points = init.points.copy()
        state.energy = hamiltonian(model, init, w)
    steps = cfg.sweep_length(w)
    for _ in range(cfg.burn_in * steps):
        state = mh_step(state, model, w, cfg)
    _warn_if_stuck(state.accepted, state.proposed)
    acc0, prop0 = state.accepted.copy(), state.proposed.copy()
    draws, energies = [], []
    for _ in range(cfg.n_draws):
        for _ in range(cfg.thin * steps):
            state = mh_step(state, model, w, cfg)
        draw = PointConfig(state.points.copy(), w, check=False)
        if cfg.check_energy and cfg.boundary == "free":
            state.energy = _check_cache(model, draw, w, state.energy)
        draws.append(draw)
        energies.append(state.energy)
    return SampleSet(draws, model, w, cfg, _rates(state.accepted - acc0, state.proposed - prop0),
                     np.array(energies), (cfg.seed,))


# ---------------------------------------------------------------------------
# GNZ identity check


class TestStatistic:
    """A statistic f(u, omega) evaluated at many locations at once.

    ``__call__(U, config, skip)`` returns f(U[k], config minus point skip[k]);
    ``skip`` may be None.
    """

    __test__ = False

    def __call__(self, U: np.ndarray, config: PointConfig, skip=None) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(TestStatistic):
    value: float = 1.0

    def __call__(self, U, config, skip=None):
        return np.full(len(U), float(self.value))


@dataclass(frozen=True)
class NeighborCount(TestStatistic):
    """Number of pattern points within distance r of u (u itself excluded)."""

    r: float

    def __call__(self, U, config, skip=None):
        U = np.asarray(U, dtype=float).reshape(-1, config.dim)
        qi, pj, _ = config.cross(U, self.r)
        if skip is not None:
            keep = pj != np.asarray(skip)[qi]
            qi = qi[keep]
        return np.bincount(qi, minlength=len(U)).astype(float)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float
    n: int

    def within(self, k: float = 3.0, target: float = 0.0) -> bool:
        return abs(self.value - target) <= k * self.std_error


def batch_means(x: np.ndarray, n_batches: int = GNZ_BATCHES) -> MCEstimate:
    """Mean with a batch-means standard error (contiguous batches)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        return MCEstimate(float("nan"), float("nan"), 0)
    b = min(n_batches, n)
    size = n // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    se = float(means.std(ddof=1) / math.sqrt(b)) if b > 1 else float("inf")
    return MCEstimate(float(x.mean()), se, n)


def gnz_residual(samples: SampleSet, model: GibbsModel, w: Window | None = None,
                 f: TestStatistic | Callable = Constant(1.0), resolution: int = 100,
                 shift: str | Sequence[float] = "random") -> MCEstimate:
    """Monte Carlo estimate of E sum_x f(x, omega - x) - E int f(u, omega) e^{-h(u|omega)} du.

    The integral uses the midpoint rule on a ``resolution``-per-side grid.
    With ``shift="random"`` the grid is moved by a fresh uniform offset for
    every draw (seeded from the sampler seed), which removes the quadrature
    bias in expectation; pass ``shift=None`` for the fixed centred grid.
    """
    w = samples.window if w is None else w
    if isinstance(f, Constant) and f.value == 0:
        return MCEstimate(0.0, 0.0, len(samples))
    rng = np.random.default_rng([samples.config.seed, 0x6E7A])
    per_draw = np.empty(len(samples))
    for k, omega in enumerate(samples.draws):
        if shift == "random":
            s = rng.random(w.dim)
        elif shift is None:
            s = None
        else:
            s = np.asarray(shift, dtype=float)
        nodes, cell = w.grid(resolution, s)
        lhs = 0.0
        if len(omega):
            idx = np.arange(len(omega))
            lhs = float(np.sum(f(omega.points, omega, idx)))
        fu = np.asarray(f(nodes, omega, None), dtype=float)
        live = fu != 0
        rhs = 0.0
        if live.any():
            h = local_energies(model, nodes[live], omega)
            rhs = float(np.sum(fu[live] * np.exp(-h)) * cell)
        per_draw[k] = lhs - rhs
    return batch_means(per_draw)


# ---------------------------------------------------------------------------
# Poisson reference


def direct_poisson_sample(w: Window, rate: float, seed) -> PointConfig:
    """Homogeneous Poisson pattern of the given intensity on ``w``."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = rng.poisson(rate * w.volume())
    pts = np.asarray(w.lower) + rng.random((n, w.dim)) * w.sides
    return PointConfig(pts, w, check=False)
