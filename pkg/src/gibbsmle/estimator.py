"""Maximum likelihood for the model zoo.

The hardcore distance has a closed-form estimate (the smallest observed
interpoint distance, clamped to the admissible interval). The remaining
parameters minimise the contrast ln Z/|W| + H(data)/|W|, where ln Z is
replaced by an importance-sampling surface built from one reference sample
and re-anchored when its effective sample size runs out. A pseudolikelihood
fit provides the first reference.

Every family handled here has an energy that is linear in its continuous
parameters once the range parameters are fixed: (z, beta_1..beta_q) for the
piecewise pair models and area-interaction, (z, A, B) for Lennard-Jones with
fixed exponents. The fitting code works on the statistics vectors.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .geometry import PointConfig, Window, pairwise_min_distance
from .models import (
    GibbsModel,
    Kind,
    ModelParams,
    hamiltonian,
    local_energies,
    support_indicator,
)
from .partition import (
    RATIO_MIN_ESS,
    BridgeSchedule,
    DegenerateOverlap,
    LogZEstimate,
    leg_seed,
    log_z_bridged,
    weight_summary,
)
from .sampler import SamplerConfig, run_chain


class InfeasibleData(ValueError):
    """The data cannot come from any member of the requested family."""


class SingularHessian(np.linalg.LinAlgError):
    pass


class UnidentifiableWarning(UserWarning):
    """A fitted interaction level is ~0, so its range is not identified."""


# ---------------------------------------------------------------------------
# hardcore distance


class HardcoreMLE(NamedTuple):
    delta: float
    feasible: bool
    min_distance: float


def hardcore_mle(data: PointConfig, interval: tuple[float, float]) -> HardcoreMLE:
    """Smallest interpoint distance clamped to ``interval``.

    Above the interval the estimate is its upper end. Below it no member of
    the family can have produced the data; the lower end is returned and
    ``feasible`` is False.
    """
    lo, hi = map(float, interval)
    if not 0 <= lo <= hi or not math.isfinite(hi):
        raise ValueError(f"bad hardcore interval {interval}")
    dmin = pairwise_min_distance(data)
    if dmin < lo:
        return HardcoreMLE(lo, False, dmin)
    return HardcoreMLE(dmin if dmin <= hi else hi, True, dmin)


# ---------------------------------------------------------------------------
# contrast


@dataclass(frozen=True)
class ContrastEval:
    value: float
    mc_error: float
    pressure_term: float
    energy_term: float

    def __post_init__(self):
        total = self.pressure_term + self.energy_term
        if not (total == self.value or math.isclose(total, self.value, rel_tol=1e-12,
                                                     abs_tol=1e-12)):
            raise ValueError("contrast must equal pressure term plus energy term")


def contrast(model: GibbsModel, data: PointConfig, w: Window, logz: LogZEstimate) -> ContrastEval:
    """ln Z/|W| + H(data)/|W|, infinite when the data violate the hardcore."""
    vol = w.volume()
    inside = data.restrict(w)
    pressure = logz.value / vol
    err = logz.std_error / vol
    if not support_indicator(model.params.delta, inside):
        return ContrastEval(math.inf, err, pressure, math.inf)
    energy = hamiltonian(model, inside, w) / vol
    return ContrastEval(pressure + energy, err, pressure, energy)


# ---------------------------------------------------------------------------
# sufficient statistics


def linear_names(template: GibbsModel) -> tuple[str, ...]:
    if template.kind is Kind.LENNARD_JONES:
        return ("z", "A", "B")
    if template.pieces is not None:
        raise TypeError("models with callable pieces cannot be fitted here")
    return template.linear_names


def _theta(model: GibbsModel, names) -> np.ndarray:
    return np.array([model.get(n) for n in names])


def _ranges(model: GibbsModel) -> tuple[float, ...]:
    return tuple(model.get(n) for n in model.range_names)


class _Stats:
    """Statistics of a list of patterns as functions of the range parameters.

    ``matrix(ranges)`` gives T with H = T @ theta for the linear parameters;
    pair distances sitting exactly on a breakpoint are returned separately by
    ``ties(ranges)`` and priced with the smaller adjacent level.
    """

    def __init__(self, template: GibbsModel, configs: Sequence[PointConfig], r_cap: float):
        self.kind = template.kind
        self.template = template
        self.configs = list(configs)
        self.n = np.array([len(c) for c in self.configs], dtype=float)
        self._cache = {}
        self.r_cap = r_cap
        if self.kind.pairwise and self.kind is not Kind.POISSON:
            ds, ids = [], []
            for k, c in enumerate(self.configs):
                if len(c) >= 2 and r_cap > 0:
                    _, _, d = c.pairs(r_cap)
                    ds.append(d)
                    ids.append(np.full(len(d), k))
            self.d = np.concatenate(ds) if ds else np.empty(0)
            self.ids = np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)

    def _count(self, mask) -> np.ndarray:
        return np.bincount(self.ids[mask], minlength=len(self.configs)).astype(float)

    def matrix(self, ranges: tuple[float, ...]):
        key = tuple(ranges)
        got = self._cache.get(key)
        if got is not None:
            return got
        cols = [self.n]
        ties = np.zeros((len(self.configs), 0))
        if self.kind is Kind.LENNARD_JONES:
            _, _, n_exp, m_exp = self.template.params.lj
            live = self.d <= self.r_cap
            with np.errstate(divide="ignore", over="ignore"):
                sn = np.bincount(self.ids[live], self.d[live] ** -n_exp, len(self.configs))
                sm = np.bincount(self.ids[live], self.d[live] ** -m_exp, len(self.configs))
            bad = self._count(self.d < K.LJ_MIN_DIST) > 0
            sn[bad] = np.inf
            cols += [sn, -sm]
        elif self.kind is Kind.AREA:
            R = ranges[0]
            cols.append(np.array([K.union_area_all(c.xy, R) if len(c) and R > 0 else 0.0
                                  for c in self.configs]))
        elif self.kind is not Kind.POISSON:
            if ranges and ranges[-1] > self.r_cap:
                raise ValueError("range beyond the precomputed distance cap")
            prev = None
            tie_cols = []
            for rk in ranges:
                below = self.d < rk
                if prev is not None:
                    below &= self.d > prev
                cols.append(self._count(below))
                tie_cols.append(self._count(self.d == rk))
                prev = rk
            ties = np.column_stack(tie_cols) if tie_cols else ties
        got = (np.column_stack(cols), ties)
        self._cache[key] = got
        return got

    def energy(self, theta: np.ndarray, ranges) -> np.ndarray:
        T, ties = self.matrix(ranges)
        with np.errstate(invalid="ignore"):
            e = T @ theta
        if ties.size and ties.any():
            levels = np.append(theta[1:], 0.0)
            e = e + ties @ np.minimum(levels[:-1], levels[1:])
        return e


def _model_at(template: GibbsModel, names, theta, ranges, delta) -> GibbsModel:
    vals = dict(zip(names, map(float, theta)))
    vals.update(zip(template.range_names, map(float, ranges)))
    if template.kind is Kind.HARDCORE_STRAUSS and delta <= 0:
        template = GibbsModel(Kind.STRAUSS, template.params, template.truncation)
    return template.with_values(vals, delta=delta)


# ---------------------------------------------------------------------------
# optimiser configuration and results


@dataclass(frozen=True)
class OptimizerConfig:
    """Search box and numerical options for the fits.

    ``box`` maps parameter names to (lo, hi); unspecified parameters get the
    defaults of ``default_box``. ``fixed`` pins parameters to values.
    ``range_grid`` is None for the observed-distance grid policy, or an
    explicit list of candidate ranges (tuples for several breakpoints).
    """

    box: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    restarts: int = 3
    tol: float = 1e-8
    crn: bool = True
    range_grid: Sequence | None = None
    grid_size: int = 16
    refine_grid: bool = True
    delta_interval: tuple[float, float] | None = None
    estimate_delta: bool | None = None
    draws: int = 200
    max_rounds: int = 5
    accept_rel_ess: float = 0.5
    trust_rel_ess: float = 0.1
    trust_penalty: float = 10.0
    pl_resolution: int | None = None
    reference: dict | None = None
    start_from_data: bool = True
    absolute_contrast: bool = False
    bridge_legs: int = 5
    allow_infeasible: bool = False
    surface_offset: float = 0.0
    beta_zero_tol: float = 1e-3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        for name, (lo, hi) in self.box.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"box for {name} must be finite and nonempty")
        if self.restarts < 0 or self.max_rounds < 1 or self.draws < 2:
            raise ValueError("restarts >= 0, max_rounds >= 1 and draws >= 2 required")


def default_box(template: GibbsModel, delta: float, w: Window) -> dict:
    quarter = 0.25 * float(np.min(w.sides))
    box = {"z": (-3.0, 3.0)}
    if template.kind is Kind.LENNARD_JONES:
        box.update(A=(1e-3, 10.0), B=(-10.0, 10.0))
    for n in template.param_names:
        if n.startswith("beta"):
            box[n] = (-5.0, 5.0)
        elif n.startswith("R"):
            box[n] = (delta + 1e-3, max(quarter, delta + 2e-3))
    return box


def _resolve_box(template, delta, w, ocfg: OptimizerConfig) -> dict:
    box = default_box(template, delta, w)
    box.update({k: tuple(map(float, v)) for k, v in ocfg.box.items()})
    if template.kind.pairwise and delta == 0:
        for n in template.param_names:
            if n.startswith("beta"):
                lo, hi = box[n]
                box[n] = (max(lo, 0.0), max(hi, 0.0))
    return box


@dataclass
class FitResult:
    """Fitted model with provenance.

    ``contrast_relative`` is the minimised surface, i.e. the contrast up to
    the reference's ln Z/|W|; ``contrast`` is absolute when that term was
    estimated (or known in closed form) and NaN otherwise.
    """

    model: GibbsModel
    delta_hat: float
    contrast: float
    mc_error: float
    contrast_relative: float
    feasible: bool
    method: str
    seed: int
    box: dict = field(default_factory=dict)
    references: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta_hat(self) -> ModelParams:
        return self.model.params

    def values(self) -> dict[str, float]:
        out = {"delta": self.delta_hat}
        out.update(self.model.values())
        return out

    def record(self) -> str:
        """Flat ``key=value`` text."""
        lines = [f"kind={self.model.kind.value}", f"method={self.method}"]
        lines += [f"{k}={v!r}" for k, v in self.values().items()]
        lines += [f"contrast={self.contrast!r}", f"mc_error={self.mc_error!r}",
                  f"contrast_relative={self.contrast_relative!r}",
                  f"feasible={str(self.feasible).lower()}", f"seed={self.seed}"]
        for k, (lo, hi) in sorted(self.box.items()):
            lines.append(f"box.{k}={lo!r}:{hi!r}")
        for i, ref in enumerate(self.references):
            lines.append(f"reference.{i}=" + ",".join(f"{k}:{v!r}" for k, v in ref.items()))
        for k, v in self.diagnostics.items():
            if isinstance(v, (list, tuple)):
                v = ";".join(repr(x) for x in v)
            lines.append(f"diag.{k}={v}")
        return "\n".join(lines) + "\n"

    def trace_csv(self) -> str:
        if not self.trace:
            return ""
        keys = list(dict.fromkeys(k for row in self.trace for k in row))
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        wr.writeheader()
        wr.writerows(self.trace)
        return buf.getvalue()

    def write(self, path) -> tuple[Path, Path]:
        path = Path(path)
        path.write_text(self.record())
        tpath = path.with_name(path.stem + "_trace.csv")
        tpath.write_text(self.trace_csv())
        return path, tpath


def read_record(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# pseudolikelihood


def _pair_features(template: GibbsModel, d: np.ndarray, ranges) -> np.ndarray:
    """Per-pair contribution to the non-z statistics (one column each)."""
    if template.kind is Kind.LENNARD_JONES:
        _, _, n_exp, m_exp = template.params.lj
        with np.errstate(divide="ignore", over="ignore"):
            return np.column_stack([d ** -n_exp, -(d ** -m_exp)])
    cols, prev = [], None
    for rk in ranges:
        c = d < rk
        if prev is not None:
            c &= d > prev
        cols.append(c.astype(float))
        prev = rk
    return np.column_stack(cols) if cols else np.zeros((len(d), 0))


class PseudoLikelihood:
    """Negative log pseudolikelihood for fixed hardcore distance and ranges.

    F(theta) = sum_x theta.t(x | data - x) + sum_u c e^{-theta.t(u | data)}
    over midpoint-rule dummy points u with cell volume c. It is convex in
    theta; dummy points that violate the hardcore drop out.
    """

    def __init__(self, data: PointConfig, w: Window, template: GibbsModel, ranges=(),
                 delta: float = 0.0, resolution: int = 100):
        if resolution < 1:
            raise ValueError("quadrature resolution must be positive")
        self.names = linear_names(template)
        self.template, self.ranges, self.delta = template, tuple(ranges), float(delta)
        data = data.restrict(w)
        nodes, self.cell = w.grid(resolution)
        p = len(self.names)
        self.t_data = np.zeros((len(data), p))
        self.t_data[:, 0] = 1.0
        t_nodes = np.zeros((len(nodes), p))
        t_nodes[:, 0] = 1.0
        alive = np.ones(len(nodes), dtype=bool)
        kind = template.kind
        if delta > 0 and len(data):
            qi, _, d = data.cross(nodes, delta)
            alive[qi[d < delta]] = False
        if kind is Kind.AREA:
            R = ranges[0]
            unit = GibbsModel.area_interaction(0.0, 1.0, R)
            if len(data):
                self.t_data[:, 1] = local_energies(unit, data.points, data, np.arange(len(data)))
            t_nodes[:, 1] = local_energies(unit, nodes, data)
        elif kind is not Kind.POISSON:
            r = template.truncation_for(w) if kind is Kind.LENNARD_JONES else ranges[-1]
            if len(data) >= 2:
                i, j, d = data.pairs(r)
                f = _pair_features(template, d, ranges)
                for col in range(f.shape[1]):
                    self.t_data[:, 1 + col] = (np.bincount(i, f[:, col], len(data))
                                               + np.bincount(j, f[:, col], len(data)))
            if len(data):
                qi, _, d = data.cross(nodes, r)
                f = _pair_features(template, d, ranges)
                for col in range(f.shape[1]):
                    t_nodes[:, 1 + col] = np.bincount(qi, f[:, col], len(nodes))
        self.t_nodes = t_nodes[alive]
        self.s_data = self.t_data.sum(axis=0)

    def _weights(self, theta):
        with np.errstate(over="ignore"):
            return self.cell * np.exp(-(self.t_nodes @ theta))

    def value(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(self.s_data @ theta + self._weights(theta).sum())

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.s_data - self._weights(theta) @ self.t_nodes

    def hessian(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        wt = self._weights(theta)
        return (self.t_nodes * wt[:, None]).T @ self.t_nodes

    def fit(self, lo, hi, x0=None, max_iter: int = 200) -> tuple[np.ndarray, float, str]:
        """Projected damped Newton; falls back to Nelder-Mead on a singular Hessian."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        x = np.clip(np.zeros(len(lo)) if x0 is None else np.asarray(x0, float), lo, hi)
        try:
            x = self._newton(x, lo, hi, max_iter)
            how = "newton"
        except SingularHessian:
            res = minimize(self.value, x, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                           options={"xatol": 1e-10, "fatol": 1e-12, "maxfev": 4000})
            x, how = np.clip(res.x, lo, hi), "nelder-mead"
        return x, self.value(x), how

    def _newton(self, x, lo, hi, max_iter):
        f = self.value(x)
        for _ in range(max_iter):
            g = self.gradient(x)
            H = self.hessian(x)
            pinned = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
            free = ~pinned
            if not free.any():
                return x
            Hf = H[np.ix_(free, free)]
            if not np.all(np.isfinite(Hf)) or np.linalg.cond(Hf) > 1e12:
                raise SingularHessian("pseudolikelihood Hessian is singular")
            step = np.zeros_like(x)
            step[free] = np.linalg.solve(Hf, g[free])
            # near the optimum F changes by less than its own rounding error
            slack = 1e-13 * max(1.0, abs(f))
            t = 1.0
            while True:
                xn = np.clip(x - t * step, lo, hi)
                fn = self.value(xn)
                if fn <= f + slack or t < 1e-12:
                    break
                t *= 0.5
            if fn > f + slack:
                return x
            if np.max(np.abs(xn - x)) < 1e-12:
                return xn
            x, f = xn, fn
        return x


def _auto_resolution(w: Window, ranges) -> int:
    side = float(np.max(w.sides))
    scale = min([r for r in ranges if r > 0], default=side / 50)
    return int(np.clip(math.ceil(2.0 * side / scale), 50, 300))


def pseudolikelihood_fit(data: PointConfig, w: Window, kind, quadrature: int | None = None,
                         ocfg: OptimizerConfig | None = None) -> FitResult:
    """Maximum pseudolikelihood over the box, profiling the range on a grid."""
    ocfg = ocfg or OptimizerConfig()
    template, data, delta, hc = _prepare(data, w, kind, ocfg)
    box = _resolve_box(template, delta, w, ocfg)
    names = linear_names(template)
    lo, hi = _bounds(names, box, ocfg.fixed)
    grid = _range_candidates(template, data, box, ocfg) or [_ranges(template)]
    best, trace = None, []
    for ranges in grid:
        res = quadrature or _auto_resolution(w, ranges)
        pl = PseudoLikelihood(data, w, template, ranges, delta, res)
        theta, val, how = pl.fit(lo, hi, _clip_start(template, names, lo, hi))
        trace.append({"ranges": ";".join(map(repr, ranges)), "value": val, "solver": how,
                      **dict(zip(names, theta))})
        if best is None or val < best[1]:
            best = (theta, val, ranges, res)
    theta, val, ranges, res = best
    model = _model_at(template, names, theta, ranges, delta)
    diag = {"resolution": res, "pseudolikelihood": -val}
    if template.kind is Kind.LENNARD_JONES:
        diag["truncation"] = model.truncation_for(w)
    return FitResult(model, delta, math.nan, math.nan, math.nan, hc.feasible,
                     "pseudolikelihood", 0, box, [], trace, diag)


# ---------------------------------------------------------------------------
# Monte Carlo maximum likelihood


def _template_for(kind, w: Window) -> GibbsModel:
    if isinstance(kind, GibbsModel):
        return kind
    kind = Kind(kind)
    r0 = 0.05 * float(np.min(w.sides))
    if kind is Kind.POISSON:
        return GibbsModel.poisson(0.0)
    if kind is Kind.STRAUSS:
        return GibbsModel.strauss(0.0, 0.0, r0)
    if kind is Kind.HARDCORE_STRAUSS:
        return GibbsModel.hardcore_strauss(0.0, 0.0, r0, 1e-3)
    if kind is Kind.AREA:
        return GibbsModel.area_interaction(0.0, 0.0, r0)
    if kind is Kind.LENNARD_JONES:
        return GibbsModel.lennard_jones(0.0)
    raise ValueError(f"{kind.value} needs a template model carrying its breakpoints")


def _prepare(data: PointConfig, w: Window, kind, ocfg: OptimizerConfig):
    template = _template_for(kind, w)
    template.check_window(w)
    data = data.restrict(w)
    if len(data) == 0 and template.kind is not Kind.POISSON:
        raise InfeasibleData("empty pattern: the intensity estimate does not exist")
    estimate = ocfg.estimate_delta
    if estimate is None:
        estimate = template.kind is Kind.HARDCORE_STRAUSS
    if estimate:
        interval = ocfg.delta_interval or (0.0, 0.25 * float(np.min(w.sides)))
        hc = hardcore_mle(data, interval)
        if not hc.feasible and not ocfg.allow_infeasible:
            raise InfeasibleData(
                f"minimum interpoint distance {hc.min_distance:.6g} is below the "
                f"smallest admissible hardcore distance {interval[0]:.6g}"
            )
        delta = hc.delta
    else:
        delta = template.params.delta
        dmin = pairwise_min_distance(data)
        hc = HardcoreMLE(delta, dmin >= delta, dmin)
        if not hc.feasible and not ocfg.allow_infeasible:
            raise InfeasibleData("data violate the fixed hardcore distance")
    fixed = {k: v for k, v in ocfg.fixed.items() if k != "delta"}
    if fixed:
        template = template.with_values(fixed)
    return template, data, delta, hc


def _bounds(names, box, fixed):
    lo = np.array([fixed.get(n, box[n][0]) for n in names], dtype=float)
    hi = np.array([fixed.get(n, box[n][1]) for n in names], dtype=float)
    return lo, hi


def _clip_start(template, names, lo, hi):
    return np.clip(_theta(template, names), lo, hi)


def _thin(values: np.ndarray, lo: float, hi: float, k: int) -> list[float]:
    if len(values) <= k:
        return list(values)
    targets = np.linspace(lo, hi, k)
    idx = np.unique(np.clip(np.searchsorted(values, targets), 0, len(values) - 1))
    return list(values[idx])


def _range_candidates(template, data, box, ocfg, around=None) -> list[tuple]:
    """Candidate range tuples; empty when there is nothing to profile."""
    names = template.range_names
    if not names:
        return []
    if any(n in ocfg.fixed for n in names):
        return [tuple(float(ocfg.fixed.get(n, template.get(n))) for n in names)]
    if ocfg.range_grid is not None:
        return [tuple(np.atleast_1d(np.asarray(c, dtype=float))) for c in ocfg.range_grid]
    if len(names) > 1:
        return [_ranges(template)]
    lo, hi = box[names[0]]
    if around is not None:
        lo, hi = around
    if template.kind is Kind.AREA:
        vals = np.linspace(lo, hi, ocfg.grid_size)
        return [(float(v),) for v in vals]
    _, _, d = data.pairs(hi) if len(data) >= 2 else (None, None, np.empty(0))
    d = np.unique(d[(d >= lo) & (d <= hi)])
    vals = sorted(set(_thin(d, lo, hi, ocfg.grid_size)) | {lo, hi})
    return [(float(v),) for v in vals]


class _Surface:
    """Contrast up to ln Z(reference)/|W| from one reference sample."""

    def __init__(self, ref_model, names, draws_stats, data_stats, vol, ocfg):
        self.names = names
        self.ref_theta = _theta(ref_model, names)
        self.ref_ranges = _ranges(ref_model)
        self.draws, self.data, self.vol, self.ocfg = draws_stats, data_stats, vol, ocfg
        self.e_ref = draws_stats.energy(self.ref_theta, self.ref_ranges)
        self.n = len(draws_stats.configs)
        self.evals = 0

    def evaluate(self, theta, ranges):
        self.evals += 1
        lw = -(self.draws.energy(theta, ranges) - self.e_ref)
        val, se, ess = weight_summary(lw, batches=30)
        e_data = float(self.data.energy(theta, ranges)[0])
        return (val + e_data) / self.vol + self.ocfg.surface_offset, se / self.vol, ess

    def objective(self, theta, ranges):
        val, _, ess = self.evaluate(theta, ranges)
        if not math.isfinite(val):
            return 1e300
        trust = self.ocfg.trust_rel_ess * self.n
        if ess < trust:
            val += self.ocfg.trust_penalty / self.vol * math.log(trust / max(ess, 1e-300))
        return val


def _minimize_box(fun, x0, lo, hi, ocfg: OptimizerConfig):
    free = hi > lo
    if not free.any():
        return lo.copy(), fun(lo)

    def f(y):
        x = lo.copy()
        x[free] = y
        return fun(x)

    y = np.clip(x0, lo, hi)[free]
    bounds = list(zip(lo[free], hi[free]))
    best_y, best_f = y, f(y)
    for _ in range(1 + ocfg.restarts):
        res = minimize(f, best_y, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-6, "fatol": ocfg.tol, "maxfev": 2000})
        if res.fun < best_f - ocfg.tol:
            best_y, best_f = np.clip(res.x, lo[free], hi[free]), res.fun
        else:
            if res.fun < best_f:
                best_y, best_f = np.clip(res.x, lo[free], hi[free]), res.fun
            break
    x = lo.copy()
    x[free] = best_y
    return x, best_f


def _profile(surface: _Surface, template, data, box, ocfg, lo, hi, start, trace, rnd):
    """Inner fits over the range grid; returns (theta, ranges, objective)."""
    grid = _range_candidates(template, data, box, ocfg) or [_ranges(template)]
    done = {}

    def run(cands):
        for ranges in cands:
            if ranges in done:
                continue
            x0 = start if not done else min(done.values(), key=lambda t: t[1])[0]
            theta, val = _minimize_box(lambda t: surface.objective(t, ranges), x0, lo, hi, ocfg)
            if not math.isfinite(val) or val >= 1e299:
                theta, val = _minimize_box(lambda t: surface.objective(t, ranges), start, lo, hi,
                                           ocfg)
            raw, se, ess = surface.evaluate(theta, ranges)
            done[ranges] = (theta, val)
            trace.append({"round": rnd, "ranges": ";".join(map(repr, ranges)),
                          **dict(zip(surface.names, map(float, theta))),
                          "objective": val, "surface": raw, "surface_se": se, "ess": ess})

    run(grid)
    if ocfg.refine_grid and ocfg.range_grid is None and len(grid) > 2 and len(grid[0]) == 1:
        order = sorted(done)
        best = _best(done)
        k = order.index(best)
        around = (order[max(k - 1, 0)][0], order[min(k + 1, len(order) - 1)][0])
        run(_range_candidates(template, data, box, ocfg, around=around))
    best = _best(done)
    return done[best][0], best, done[best][1]


def _best(done: dict):
    """Smallest objective; ties go to the smaller range."""
    best = None
    for ranges in sorted(done):
        if best is None or done[ranges][1] < done[best][1]:
            best = ranges
    return best


def _poisson_fit(template, data, w, delta, hc, box, seed) -> FitResult:
    vol = w.volume()
    n = len(data)
    lo, hi = box["z"]
    # convex in z with stationary point -ln(N/|W|); an empty pattern pushes z to the top
    z = float(np.clip(-math.log(n / vol), lo, hi)) if n else hi
    model = template.with_values({"z": z})
    val = math.expm1(-z) + z * n / vol
    return FitResult(model, delta, val, 0.0, val, hc.feasible, "analytic", seed, box,
                     [], [], {"n_points": n})


def _sampler_for(scfg: SamplerConfig, draws: int, seed: int) -> SamplerConfig:
    return replace(scfg, sweeps=scfg.burn_in + draws * scfg.thin, seed=seed)


def mc_mle(data: PointConfig, w: Window, kind, ocfg: OptimizerConfig | None = None,
           scfg: SamplerConfig | None = None) -> FitResult:
    """Monte Carlo maximum likelihood with free boundary.

    ``kind`` is a model kind or a template model; the template supplies the
    pinned parts (breakpoint count, Lennard-Jones exponents, truncation) and
    is the starting point when no pseudolikelihood reference is used.
    """
    ocfg = ocfg or OptimizerConfig()
    scfg = scfg or SamplerConfig()
    template, data, delta, hc = _prepare(data, w, kind, ocfg)
    box = _resolve_box(template, delta, w, ocfg)
    names = linear_names(template)
    lo, hi = _bounds(names, box, ocfg.fixed)
    vol = w.volume()
    levels = [n for n in names if n != "z"]
    if delta == 0 and (template.kind is Kind.POISSON
                       or (levels and all(lo[names.index(n)] == hi[names.index(n)] == 0
                                          for n in levels))):
        return _poisson_fit(template, data, w, delta, hc, box, scfg.seed)

    if ocfg.reference is not None:
        ranges0 = tuple(ocfg.reference.get(n, template.get(n)) for n in template.range_names)
        ref = _model_at(template, names, [ocfg.reference.get(n, template.get(n)) for n in names],
                        ranges0, delta)
    else:
        pl = pseudolikelihood_fit(data, w, template, ocfg.pl_resolution,
                                  replace(ocfg, estimate_delta=False, allow_infeasible=True))
        theta = np.clip(_theta(pl.model, names), lo, hi)
        ref = _model_at(template, names, theta, _ranges(pl.model), delta)

    r_cap = 0.0
    if template.kind is Kind.LENNARD_JONES:
        r_cap = template.truncation_for(w)
    elif template.range_names:
        grid = _range_candidates(template, data, box, ocfg) or [_ranges(template)]
        r_cap = max(max(max(c) for c in grid), *_ranges(ref))
    data_stats = _Stats(template, [data], r_cap)
    references, trace, ess_log = [], [], []
    theta_hat, ranges_hat, ess = None, None, 0.0
    for rnd in range(ocfg.max_rounds):
        seed = leg_seed(scfg.seed, rnd) if ocfg.crn else leg_seed(scfg.seed, rnd, len(trace))
        init = data if ocfg.start_from_data and support_indicator(delta, data) else None
        samples = run_chain(ref, w, _sampler_for(scfg, ocfg.draws, seed), init=init)
        references.append({"round": rnd, "seed": seed, **ref.values(), "delta": delta})
        stats = _Stats(template, samples.draws, r_cap)
        surface = _Surface(ref, names, stats, data_stats, vol, ocfg)
        start = np.clip(_theta(ref, names), lo, hi)
        theta_hat, ranges_hat, _ = _profile(surface, _model_at(template, names, start,
                                                               _ranges(ref), delta),
                                            data, box, ocfg, lo, hi, start, trace, rnd)
        rel, rel_se, ess = surface.evaluate(theta_hat, ranges_hat)
        ess_log.append(ess)
        ref_new = _model_at(template, names, theta_hat, ranges_hat, delta)
        if ess >= ocfg.accept_rel_ess * ocfg.draws:
            ref_final, final_surface = ref, (rel, rel_se)
            break
        ref_final, final_surface = ref, (rel, rel_se)
        ref = ref_new
    if ess < RATIO_MIN_ESS:
        raise DegenerateOverlap(
            f"effective sample size {ess:.1f} at the incumbent after {ocfg.max_rounds} rounds",
            ess,
        )
    model = _model_at(template, names, theta_hat, ranges_hat, delta)
    rel, rel_se = final_surface
    rel -= ocfg.surface_offset
    cval, cerr = math.nan, rel_se
    diag = {"rounds": len(references), "ess": ess_log, "surface_evaluations": len(trace)}
    if ocfg.absolute_contrast:
        sched = BridgeSchedule.from_poisson(ref_final, ocfg.bridge_legs,
                                            ocfg.bridge_legs if delta > 0 else 0, ocfg.draws)
        logz = log_z_bridged(sched, w, replace(scfg, seed=leg_seed(scfg.seed, 99)))
        cval = logz.value / vol + rel
        cerr = math.hypot(logz.std_error / vol, rel_se)
        diag["bridge_legs"] = len(logz.legs)
    if template.kind is Kind.LENNARD_JONES:
        diag["truncation"] = model.truncation_for(w)
    if template.range_names and levels and ocfg.range_grid is None:
        if all(abs(model.get(n)) < ocfg.beta_zero_tol for n in levels):
            msg = "fitted interaction is ~0; the interaction range is not identifiable"
            warnings.warn(msg, UnidentifiableWarning, stacklevel=2)
            diag["warning"] = msg
    if not hc.feasible:
        diag["warning"] = "data violate every admissible hardcore distance"
    return FitResult(model, delta, cval, cerr, rel, hc.feasible, "mc_mle", scfg.seed, box,
                     references, trace, diag)


def profile_range(data: PointConfig, w: Window, kind, candidates: Sequence,
                  ocfg: OptimizerConfig | None = None,
                  scfg: SamplerConfig | None = None) -> tuple[tuple[float, ...], FitResult]:
    """MC-MLE restricted to the given range candidates; returns (best ranges, fit)."""
    if len(candidates) == 0:
        raise ValueError("empty candidate grid")
    ocfg = replace(ocfg or OptimizerConfig(), range_grid=list(candidates), refine_grid=False)
    fit = mc_mle(data, w, kind, ocfg, scfg)
    return _ranges(fit.model), fit
