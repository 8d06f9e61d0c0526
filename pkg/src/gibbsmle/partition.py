"""Log partition functions by importance ratios, bridging and direct Monte Carlo.

Everything is carried as log-weights. For a sample from theta,
ln Z(theta') - ln Z(theta) = ln E_theta exp(-(H_theta' - H_theta)), with the
hardcore indicator of theta' folded into H_theta' as +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .geometry import PointConfig, Window, pairwise_min_distance
from .models import GibbsModel, Kind, hamiltonian, linear_statistics
from .sampler import SampleSet, SamplerConfig, direct_poisson_sample, run_chain

RATIO_MIN_ESS = 10.0
BRUTE_MIN_ESS = 30.0
LEG_MIN_REL_ESS = 0.1


class DegenerateOverlap(RuntimeError):
    """Importance weights collapsed onto too few draws."""

    def __init__(self, message: str, ess: float = 0.0, leg: int | None = None):
        super().__init__(message)
        self.ess = ess
        self.leg = leg


@dataclass(frozen=True)
class LogZEstimate:
    value: float
    std_error: float
    ess: float
    method: str
    n: int = 0
    legs: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be nonnegative")

    def csv_row(self, fingerprint: str = "") -> str:
        return f"{self.method},{self.value!r},{self.std_error!r},{self.ess!r},{fingerprint}"

    CSV_HEADER = "method,value,std_error,ess,model"


class PressureEstimate(NamedTuple):
    value: float
    std_error: float


def model_fingerprint(model: GibbsModel) -> str:
    vals = ";".join(f"{k}={v:.12g}" for k, v in model.values().items())
    return f"{model.kind.value}[delta={model.params.delta:.12g};{vals}]"


def poisson_log_z(z: float, w: Window) -> LogZEstimate:
    """ln Z = |W| (e^{-z} - 1) for the energy H = z N."""
    return LogZEstimate(w.volume() * math.expm1(-z), 0.0, math.inf, "analytic")


def analytic_log_z(model: GibbsModel, w: Window) -> LogZEstimate | None:
    """Closed form when the model reduces to a Poisson process, else None."""
    p = model.params
    if p.delta > 0:
        return None
    if model.kind is Kind.POISSON or (model.linear_names and not any(p.beta)):
        return poisson_log_z(p.z, w)
    return None


def finite_volume_pressure(logz: LogZEstimate, w: Window) -> PressureEstimate:
    vol = w.volume()
    return PressureEstimate(logz.value / vol, logz.std_error / vol)


# ---------------------------------------------------------------------------
# per-draw energies


def _family_key(model: GibbsModel):
    if model.kind is Kind.POISSON:
        return ("poisson",)
    if model.kind is Kind.AREA:
        return ("area", model.params.ranges)
    return ("pair", model.params.ranges)


def _linear_theta(model: GibbsModel) -> np.ndarray:
    return np.array([model.get(n) for n in model.linear_names])


def draw_statistics(model: GibbsModel, draws: Sequence[PointConfig], cache: dict | None = None):
    """Matrix of linear statistics, one row per draw."""
    key = ("stats",) + _family_key(model)
    if cache is not None and key in cache:
        return cache[key]
    T = np.array([linear_statistics(model, d) for d in draws]).reshape(len(draws), -1)
    if cache is not None:
        cache[key] = T
    return T


def draw_min_distances(draws: Sequence[PointConfig], cache: dict | None = None) -> np.ndarray:
    if cache is not None and "mind" in cache:
        return cache["mind"]
    out = np.array([pairwise_min_distance(d) for d in draws])
    if cache is not None:
        cache["mind"] = out
    return out


def draw_energies(model: GibbsModel, draws: Sequence[PointConfig], w: Window,
                  cache: dict | None = None) -> np.ndarray:
    """Free-boundary energies (hardcore included) of every draw."""
    if model.linear_names:
        e = draw_statistics(model, draws, cache) @ _linear_theta(model)
        if model.params.delta > 0:
            e = np.where(draw_min_distances(draws, cache) < model.params.delta, np.inf, e)
        return e
    return np.array([hamiltonian(model, d, w) for d in draws])


# ---------------------------------------------------------------------------
# weights


def weight_summary(log_w: np.ndarray, batches: int | None = None) -> tuple[float, float, float]:
    """(ln mean w, delta-method standard error, ESS) from log-weights.

    With ``batches`` the variance of the mean weight comes from batch means,
    which accounts for autocorrelated draws.
    """
    lw = np.asarray(log_w, dtype=float)
    n = len(lw)
    if n == 0 or not np.any(np.isfinite(lw)):
        return -math.inf, math.inf, 0.0
    value = float(logsumexp(lw) - math.log(n))
    w = np.exp(lw - lw[np.isfinite(lw)].max())
    ess = float(w.sum() ** 2 / np.sum(w * w))
    mean = w.mean()
    if batches and n >= 2 * batches:
        size = n // batches
        bm = w[: batches * size].reshape(batches, size).mean(axis=1)
        var_mean = bm.var(ddof=1) / batches
    else:
        var_mean = w.var(ddof=1) / n if n > 1 else 0.0
    return value, float(math.sqrt(var_mean) / mean), ess


def log_ratio_weights(model_from: GibbsModel, model_to: GibbsModel, samples: SampleSet,
                      w: Window | None = None) -> np.ndarray:
    """-(H_to - H_from) per draw, -inf where the target's hardcore fires."""
    w = samples.window if w is None else w
    if model_to.params.delta < model_from.params.delta:
        raise ValueError(
            "ratios towards a smaller hardcore distance are not absolutely continuous"
        )
    cache = samples.cache if w == samples.window else None
    draws = samples.draws
    if model_from.linear_names and _family_key(model_from) == _family_key(model_to):
        T = draw_statistics(model_from, draws, cache)
        lw = -(T @ (_linear_theta(model_to) - _linear_theta(model_from)))
    else:
        lw = -(draw_energies(model_to, draws, w, cache) - draw_energies(model_from, draws, w, cache))
    if model_to.params.delta > model_from.params.delta:
        mind = draw_min_distances(draws, cache)
        lw = np.where(mind < model_to.params.delta, -np.inf, lw)
    return lw


def log_z_ratio(model_from: GibbsModel, model_to: GibbsModel, samples: SampleSet,
                w: Window | None = None, min_ess: float = RATIO_MIN_ESS) -> LogZEstimate:
    """Estimate ln Z(model_to) - ln Z(model_from) from draws of ``model_from``."""
    n = len(samples)
    if model_from == model_to:
        return LogZEstimate(0.0, 0.0, float(n), "ratio", n)
    lw = log_ratio_weights(model_from, model_to, samples, w)
    value, se, ess = weight_summary(lw, batches=30)
    if ess < min_ess:
        raise DegenerateOverlap(f"importance ESS {ess:.1f} below {min_ess}", ess)
    return LogZEstimate(value, se, ess, "ratio", n)


# ---------------------------------------------------------------------------
# bridging


def _interp(a: GibbsModel, b: GibbsModel, t: float) -> GibbsModel:
    va, vb = a.values(), b.values()
    va["delta"], vb["delta"] = a.params.delta, b.params.delta
    return a.with_values({k: va[k] if va[k] == vb[k] else (1 - t) * va[k] + t * vb[k]
                          for k in va})


@dataclass(frozen=True)
class BridgeSchedule:
    """Parameter path from a known baseline to the target.

    Consecutive models share a kind; the hardcore distance may only grow
    along the path.
    """

    models: tuple[GibbsModel, ...]
    draws_per_leg: int = 400

    def __post_init__(self):
        if not self.models:
            raise ValueError("empty schedule")
        deltas = [m.params.delta for m in self.models]
        if any(b < a for a, b in zip(deltas, deltas[1:])):
            raise ValueError("hardcore distance must be nondecreasing along a schedule")

    @property
    def start(self) -> GibbsModel:
        return self.models[0]

    @property
    def end(self) -> GibbsModel:
        return self.models[-1]

    @classmethod
    def linear(cls, start: GibbsModel, end: GibbsModel, legs: int,
               draws_per_leg: int = 400) -> BridgeSchedule:
        ts = np.linspace(0.0, 1.0, legs + 1)
        models = tuple(_interp(start, end, t) for t in ts[:-1]) + (end,)
        return cls(models, draws_per_leg)

    @classmethod
    def from_poisson(cls, target: GibbsModel, legs: int = 5, delta_legs: int = 0,
                     draws_per_leg: int = 400) -> BridgeSchedule:
        """Start at the interaction-free, hardcore-free model with the target's z.

        With a hardcore, ``delta_legs`` legs first raise the hardcore distance
        at zero interaction, then ``legs`` legs switch the interaction on.
        """
        zero = {n: 0.0 for n in target.param_names if n.startswith("beta")}
        base = target
        if target.kind is Kind.HARDCORE_STRAUSS:
            base = GibbsModel(Kind.STRAUSS, target.params)
        anchor = base.with_values(zero, delta=0.0)
        if target.params.delta == 0:
            return cls.linear(anchor, target, legs, draws_per_leg)
        delta_legs = max(delta_legs, 1)
        hc = target.with_values(zero)
        first = cls.linear(anchor, hc, delta_legs, draws_per_leg).models
        second = cls.linear(hc, target, legs, draws_per_leg).models
        return cls(first + second[1:], draws_per_leg)

    def reversed(self) -> BridgeSchedule:
        return BridgeSchedule(self.models[::-1], self.draws_per_leg)

    def refined(self, leg: int) -> BridgeSchedule:
        a, b = self.models[leg], self.models[leg + 1]
        mid = _interp(a, b, 0.5)
        return BridgeSchedule(self.models[: leg + 1] + (mid,) + self.models[leg + 1:],
                              self.draws_per_leg)


def leg_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for a (seed, keys...) tuple."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *keys])
    return int(ss.generate_state(1, np.uint64)[0])


def _leg_sampler(scfg: SamplerConfig, draws: int, seed: int) -> SamplerConfig:
    from dataclasses import replace

    return replace(scfg, sweeps=scfg.burn_in + draws * scfg.thin, seed=seed)


def log_z_bridged(schedule: BridgeSchedule, w: Window, scfg: SamplerConfig,
                  baseline: LogZEstimate | None = None, max_refinements: int = 6,
                  min_rel_ess: float = LEG_MIN_REL_ESS) -> LogZEstimate:
    """Telescoped importance ratios along ``schedule`` plus a baseline.

    Legs whose relative ESS falls below ``min_rel_ess`` are split at the
    midpoint, at most ``max_refinements`` times in total. Leg samples are
    seeded by their position along the path, so a rerun reproduces them.
    A schedule running from a high to a low hardcore distance is not
    accepted.
    """
    if baseline is None:
        baseline = analytic_log_z(schedule.start, w)
        if baseline is None:
            raise ValueError("schedule start has no closed-form ln Z; pass a baseline")
    legs = []
    sched = schedule
    refinements = 0
    i = 0
    samples_at = {}
    while i < len(sched.models) - 1:
        a, b = sched.models[i], sched.models[i + 1]
        if a == b:
            legs.append(LogZEstimate(0.0, 0.0, float(sched.draws_per_leg), "ratio"))
            i += 1
            continue
        key = model_fingerprint(a)
        s = samples_at.get(key)
        if s is None:
            seed = leg_seed(scfg.seed, *[int(v * 1e9) & 0xFFFFFFFF for v in _path_key(a)])
            s = run_chain(a, w, _leg_sampler(scfg, sched.draws_per_leg, seed))
            samples_at[key] = s
        try:
            est = log_z_ratio(a, b, s, w)
            ok = est.ess >= min_rel_ess * len(s)
        except DegenerateOverlap as err:
            est, ok = None, False
            last_err = err
        if not ok:
            if refinements >= max_refinements:
                ess = est.ess if est else last_err.ess
                raise DegenerateOverlap(f"leg {i}: relative ESS {ess / len(s):.3f} after "
                                        f"{refinements} refinements", ess, leg=i)
            sched = sched.refined(i)
            refinements += 1
            continue
        legs.append(est)
        i += 1
    value = baseline.value + sum(l.value for l in legs)
    se = math.sqrt(baseline.std_error**2 + sum(l.std_error**2 for l in legs))
    ess = min((l.ess for l in legs), default=baseline.ess)
    return LogZEstimate(value, se, ess, "bridged", sum(l.n for l in legs), tuple(legs))


def _path_key(m: GibbsModel):
    return (m.params.delta,) + tuple(m.values().values())


# ---------------------------------------------------------------------------
# direct Monte Carlo over the Poisson reference


def poisson_draws(w: Window, n_mc: int, seed) -> list[PointConfig]:
    rng = np.random.default_rng(seed)
    return [direct_poisson_sample(w, 1.0, rng) for _ in range(n_mc)]


def log_z_brute(model: GibbsModel, w: Window, n_mc: int, seed,
                draws: Sequence[PointConfig] | None = None,
                cache: dict | None = None, min_ess: float = BRUTE_MIN_ESS) -> LogZEstimate:
    """ln of the average of e^{-H} over unit-rate Poisson patterns.

    The same seed gives the same reference patterns, so estimates for
    different parameters share their random numbers.
    """
    if draws is None:
        draws = poisson_draws(w, n_mc, seed)
    lw = -draw_energies(model, draws, w, cache)
    value, se, ess = weight_summary(lw)
    if ess < min_ess:
        raise DegenerateOverlap(f"brute-force ESS {ess:.1f} below {min_ess}", ess)
    return LogZEstimate(value, se, ess, "brute", len(draws))
