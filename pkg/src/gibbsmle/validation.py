"""Self-checks run by ``gibbsmle validate``.

Each check compares an estimate with an exact identity or an independent
computation and reports pass/fail with the numbers involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import CellPartition, PointConfig, Window
from .models import (
    GibbsModel,
    Kind,
    boundary_energy,
    disc_union_area,
    hamiltonian,
    mean_energy_cell,
)
from .partition import (
    BridgeSchedule,
    DegenerateOverlap,
    log_z_bridged,
    log_z_brute,
    poisson_draws,
)
from .sampler import Constant, NeighborCount, SamplerConfig, gnz_residual, run_chain


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


DEFAULT_MODELS = {
    Kind.STRAUSS: GibbsModel.strauss(0.3, 0.7, 0.1),
    Kind.HARDCORE_STRAUSS: GibbsModel.hardcore_strauss(0.3, 0.7, 0.1, 0.05),
    Kind.AREA: GibbsModel.area_interaction(0.3, 0.7, 0.1),
    Kind.POISSON: GibbsModel.poisson(0.3),
    Kind.PIECEWISE: GibbsModel.piecewise(0.3, (0.9, 0.3), (0.05, 0.12)),
    Kind.LENNARD_JONES: GibbsModel.lennard_jones(0.0, 0.02, 0.02, truncation=0.5),
}


def union_area_slices(centres, R: float, h: float = 1e-4) -> float:
    """Area of a union of discs by summing exact vertical chord unions on x-slices."""
    c = np.asarray(centres, dtype=float).reshape(-1, 2)
    if len(c) == 0 or R <= 0:
        return 0.0
    x0, x1 = c[:, 0].min() - R, c[:, 0].max() + R
    m = max(1, int(math.ceil((x1 - x0) / h)))
    step = (x1 - x0) / m
    xs = x0 + (np.arange(m) + 0.5) * step
    dx = xs[:, None] - c[None, :, 0]
    half = np.sqrt(np.clip(R * R - dx * dx, 0.0, None))
    lo = np.where(half > 0, c[None, :, 1] - half, np.inf)
    hi = np.where(half > 0, c[None, :, 1] + half, -np.inf)
    order = np.argsort(lo, axis=1)
    lo = np.take_along_axis(lo, order, 1)
    hi = np.take_along_axis(hi, order, 1)
    total = np.zeros(m)
    reach = np.full(m, -np.inf)
    for k in range(lo.shape[1]):
        a, b = lo[:, k], hi[:, k]
        live = np.isfinite(a)
        start = np.maximum(a, reach)
        total += np.where(live & (b > start), b - start, 0.0)
        reach = np.where(live, np.maximum(reach, b), reach)
    return float(total.sum() * step)


def _random_config(rng, w: Window, n_max: int = 40) -> PointConfig:
    n = int(rng.integers(0, n_max + 1))
    pts = np.asarray(w.lower) + rng.random((n, w.dim)) * w.sides
    return PointConfig(pts, w, check=False)


def check_gnz(model: GibbsModel, seed: int = 0, sampler_model: GibbsModel | None = None,
              side: float = 5.0, sweeps: int = 4000) -> list[Check]:
    w = Window((0.0, 0.0), (side, side))
    cfg = SamplerConfig(sweeps=sweeps, burn_in=500, thin=5, seed=seed)
    s = run_chain(sampler_model or model, w, cfg)
    r = model.interaction_range(w) if model.kind is not Kind.POISSON else 0.1
    if model.kind is Kind.LENNARD_JONES:
        r = 0.5 * r
    out = []
    for label, f in (("f=1", Constant(1.0)), (f"f=neighbours within {r:g}", NeighborCount(r))):
        est = gnz_residual(s, model, w, f)
        out.append(Check(f"GNZ residual {label}", est.within(3.0),
                         f"{est.value:+.4f} (SE {est.std_error:.4f}, {est.n} draws)"))
    return out


def check_partition(model: GibbsModel, seed: int = 0, side: float = 3.0,
                    n_mc: int = 20000) -> list[Check]:
    w = Window((0.0, 0.0), (side, side))
    out = []
    z = model.params.z
    poisson = GibbsModel.poisson(z)
    exact = w.volume() * math.expm1(-z)
    est = log_z_brute(poisson, w, n_mc, seed)
    out.append(Check("Poisson ln Z (direct MC vs closed form)",
                     abs(est.value - exact) <= 3 * est.std_error,
                     f"{est.value:.4f} +- {est.std_error:.4f} vs {exact:.4f}"))
    if model.kind is Kind.POISSON:
        return out
    scfg = SamplerConfig(burn_in=200, thin=3, seed=seed)
    try:
        sched = BridgeSchedule.from_poisson(model, 5, 4 if model.params.delta > 0 else 0, 400)
        br = log_z_bridged(sched, w, scfg)
        bf = log_z_brute(model, w, n_mc, seed + 1)
    except DegenerateOverlap as err:
        return out + [Check("bridged vs direct ln Z", False, str(err))]
    se = math.hypot(br.std_error, bf.std_error)
    out.append(Check("bridged vs direct ln Z", abs(br.value - bf.value) <= 3 * se,
                     f"{br.value:.4f} vs {bf.value:.4f} (combined SE {se:.4f})"))
    return out


def check_decomposition(model: GibbsModel, seed: int = 0, instances: int = 20) -> list[Check]:
    rng = np.random.default_rng([seed, 7])
    w = Window.centered(3.0)
    inner = Window.centered(2.0)
    part = CellPartition(inner)
    worst = 0.0
    for _ in range(instances):
        cfg = _random_config(rng, w, 60)
        total = sum(mean_energy_cell(model, cfg, k, inner) for k in part.indices())
        total += boundary_energy(model, cfg, inner)
        h = hamiltonian(model, cfg, inner)
        if math.isinf(h):
            continue
        worst = max(worst, abs(total - h))
    return [Check("cell decomposition of the energy", worst <= 1e-10,
                  f"max |sum - H| = {worst:.2e} over {instances} instances")]


def check_monotone(model: GibbsModel, seed: int = 0, side: float = 3.0,
                   n_mc: int = 2000) -> list[Check]:
    """ln Z with shared Poisson draws must not increase in delta (nor in beta >= 0)."""
    w = Window((0.0, 0.0), (side, side))
    draws = poisson_draws(w, n_mc, seed)
    out = []
    if model.kind in (Kind.POISSON, Kind.LENNARD_JONES):
        return out
    base = model if model.kind is not Kind.HARDCORE_STRAUSS else GibbsModel(
        Kind.STRAUSS, model.params)
    deltas = np.linspace(0.0, 0.15, 7)
    vals = [log_z_brute(base.with_values(delta=d), w, n_mc, seed, draws, min_ess=0).value
            for d in deltas]
    ok = all(b <= a for a, b in zip(vals, vals[1:]))
    out.append(Check("ln Z nonincreasing in delta", ok,
                     " ".join(f"{v:.4f}" for v in vals)))
    if model.kind in (Kind.STRAUSS, Kind.HARDCORE_STRAUSS):
        betas = np.linspace(0.0, 2.0, 6)
        vals = [log_z_brute(base.with_values(beta=b), w, n_mc, seed, draws, min_ess=0).value
                for b in betas]
        ok = all(b <= a for a, b in zip(vals, vals[1:]))
        out.append(Check("ln Z nonincreasing in beta", ok,
                         " ".join(f"{v:.4f}" for v in vals)))
    return out


def check_union_area(seed: int = 0, instances: int = 20) -> list[Check]:
    rng = np.random.default_rng([seed, 11])
    worst = 0.0
    for _ in range(instances):
        k = int(rng.integers(2, 11))
        R = float(rng.uniform(0.2, 1.0))
        c = rng.uniform(0, 3, (k, 2))
        a = disc_union_area(c, R)
        b = union_area_slices(c, R)
        worst = max(worst, abs(a - b) / b)
    return [Check("disc union area vs slice quadrature", worst <= 1e-3,
                  f"max relative error {worst:.2e} over {instances} instances")]


def validate(model: GibbsModel, seed: int = 0, negate_activity: bool = False,
             report: Callable[[Check], None] | None = None) -> list[Check]:
    """Run every check that applies to ``model``.

    ``negate_activity`` samples with the sign of z flipped while checking
    against the stated model; the GNZ checks must then fail.
    """
    sampler_model = model.with_values(z=-model.params.z) if negate_activity else None
    suites = [lambda: check_gnz(model, seed, sampler_model),
              lambda: check_partition(model, seed),
              lambda: check_decomposition(model, seed),
              lambda: check_monotone(model, seed)]
    if model.kind is Kind.AREA:
        suites.append(lambda: check_union_area(seed))
    checks = []
    for suite in suites:
        for c in suite():
            checks.append(c)
            if report:
                report(c)
    return checks
