"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``criterion k: PASS/FAIL`` line; the lines are
repeated in the pytest terminal summary.
"""

import math
import time

import numpy as np
from acceptance_log import report
from oracles import (
    brute_min_distance,
    central_difference,
    poisson_log_z,
    poisson_z_hat,
    union_area_grid,
)
from gibbsmle import cli
from gibbsmle.estimator import (
    OptimizerConfig,
    PseudoLikelihood,
    contrast,
    hardcore_mle,
    pseudolikelihood_fit,
)
from gibbsmle.experiment import ExperimentSpec, run_consistency
from gibbsmle.geometry import CellPartition, PointConfig, Window, read_pattern
from gibbsmle.models import (
    GibbsModel,
    boundary_energy,
    disc_union_area,
    hamiltonian,
    mean_energy_cell,
    pair_potential_eval,
)
from gibbsmle.partition import (
    BridgeSchedule,
    log_z_bridged,
    log_z_brute,
    log_z_ratio,
    poisson_draws,
)
from gibbsmle.sampler import Constant, NeighborCount, SamplerConfig, gnz_residual, run_chain

STRAUSS = GibbsModel.strauss(0.3, 0.7, 0.1)


def _check(number, conditions, detail, t0):
    passed = all(conditions)
    report(number, passed, f"{detail} [{time.perf_counter() - t0:.1f} s]")
    assert passed, detail


def test_criterion_1_poisson_closed_form(tmp_path):
    t0 = time.perf_counter()
    model_file = tmp_path / "poisson.txt"
    model_file.write_text("kind = poisson\nz = 0.7\n")
    gaps = []
    for seed in range(10):
        out = tmp_path / f"sim{seed}"
        rc = cli.main(["simulate", "--model", str(model_file), "--window", "8",
                       "--seed", str(seed), "--sweeps", "300", "--burnin", "200",
                       "--out", str(out)])
        assert rc == 0
        data = read_pattern(out / "pattern.csv")
        rec = tmp_path / f"fit{seed}.txt"
        rc = cli.main(["fit", "--data", str(out / "pattern.csv"), "--kind", "poisson",
                       "--seed", str(seed), "--out", str(rec)])
        assert rc == 0
        z_hat = float(dict(l.split("=", 1) for l in rec.read_text().splitlines())["z"])
        gaps.append(abs(z_hat - poisson_z_hat(len(data), data.window.volume())))
    elapsed = time.perf_counter() - t0
    _check(1, [max(gaps) < 0.05, elapsed < 60],
           f"max |z_hat + ln(N/|W|)| = {max(gaps):.2e} over 10 seeds (< 0.05)", t0)


def _gnz_suite(model, w, seed):
    s = run_chain(model, w, SamplerConfig(sweeps=4500, burn_in=500, thin=5, seed=seed))
    r = model.params.ranges[0]
    return [gnz_residual(s, model, w, Constant(1.0)), gnz_residual(s, model, w, NeighborCount(r))]


def test_criterion_2_gnz_residuals():
    t0 = time.perf_counter()
    w = Window((0.0, 0.0), (5.0, 5.0))
    models = {
        "strauss": STRAUSS,
        "hardcore strauss": GibbsModel.hardcore_strauss(0.3, 0.7, 0.1, 0.05),
        "area-interaction": GibbsModel.area_interaction(0.3, 0.7, 0.1),
    }
    conds, parts = [], []
    for k, (name, m) in enumerate(models.items()):
        for label, est in zip(("f=1", "f=nbrs"), _gnz_suite(m, w, 100 + k)):
            z = est.value / est.std_error
            conds.append(abs(z) <= 3.0)
            parts.append(f"{name} {label} {z:+.2f}SE")
    conds.append(time.perf_counter() - t0 < 300)
    _check(2, conds, "; ".join(parts), t0)


STRAUSS_SETTINGS = [(0.3, 0.7, 0.1), (0.0, 1.0, 0.2), (0.5, 0.3, 0.3),
                    (-0.3, 1.5, 0.15), (1.0, 2.0, 0.25)]


def test_criterion_3_partition_oracles():
    t0 = time.perf_counter()
    w = Window((0.0, 0.0), (3.0, 3.0))
    conds, parts = [], []
    for k, (z, beta, R) in enumerate(STRAUSS_SETTINGS):
        m = GibbsModel.strauss(z, beta, R)
        br = log_z_bridged(BridgeSchedule.from_poisson(m, 5, 0, 400), w,
                           SamplerConfig(burn_in=200, thin=3, seed=10 + k))
        bf = log_z_brute(m, w, 20000, 1000 + k)
        se = math.hypot(br.std_error, bf.std_error)
        conds.append(abs(br.value - bf.value) <= 3 * se)
        parts.append(f"{(z, beta, R)} {abs(br.value - bf.value) / se:.2f}SE")
    exact = poisson_log_z(0.3, w.volume())
    pe = log_z_brute(GibbsModel.poisson(0.3), w, 20000, 7)
    conds.append(abs(pe.value - exact) <= 3 * pe.std_error)
    parts.append(f"poisson {abs(pe.value - exact) / pe.std_error:.2f}SE")
    conds.append(time.perf_counter() - t0 < 120)
    _check(3, conds, "bridged vs direct: " + "; ".join(parts), t0)


def test_criterion_4_monotone_shadows():
    t0 = time.perf_counter()
    w = Window((0.0, 0.0), (3.0, 3.0))
    draws = poisson_draws(w, 3000, 4)
    deltas = np.linspace(0.0, 0.2, 11)
    lz_delta = [log_z_brute(STRAUSS.with_values(delta=d), w, 0, 0, draws, min_ess=0).value
                for d in deltas]
    betas = np.linspace(0.0, 3.0, 13)
    lz_beta = [log_z_brute(STRAUSS.with_values(beta=b), w, 0, 0, draws, min_ess=0).value
               for b in betas]
    # the same statements through MCMC importance ratios from one sample
    s = run_chain(STRAUSS, w, SamplerConfig(sweeps=1700, burn_in=200, thin=5, seed=3))
    ratio_delta = [log_z_ratio(STRAUSS, STRAUSS.with_values(delta=d), s, w).value
                   for d in deltas]
    ratio_beta = [log_z_ratio(STRAUSS, STRAUSS.with_values(beta=b), s, w).value for b in betas]
    # contrast on [0, min gap of the data]
    data = run_chain(STRAUSS, w, SamplerConfig(sweeps=1001, burn_in=1000, thin=1,
                                               seed=8)).draws[-1]
    gap = brute_min_distance(data.points)
    grid = np.linspace(0.0, gap, 9)
    contrasts = []
    for d in grid:
        m = STRAUSS.with_values(delta=d)
        contrasts.append(contrast(m, data, w, log_z_brute(m, w, 0, 0, draws, min_ess=0)).value)
    above = STRAUSS.with_values(delta=gap * 1.01)
    inf_above = contrast(above, data, w, log_z_brute(above, w, 0, 0, draws, min_ess=0)).value

    def nonincreasing(v):
        return all(b <= a for a, b in zip(v, v[1:]))

    conds = [nonincreasing(lz_delta), nonincreasing(lz_beta), nonincreasing(ratio_delta),
             nonincreasing(ratio_beta), nonincreasing(contrasts), math.isinf(inf_above)]
    _check(4, conds, "ln Z in delta/beta (direct and MCMC ratios), contrast on "
           f"[0, {gap:.4f}] nonincreasing: {conds}", t0)


def test_criterion_5_hardcore_estimator():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    exact = []
    for _ in range(100):
        n = int(rng.integers(2, 60))
        w = Window((0.0, 0.0), tuple(rng.uniform(0.5, 5.0, 2)))
        pts = np.asarray(w.lower) + rng.random((n, 2)) * w.sides
        est = hardcore_mle(PointConfig(pts, w), (0.0, 100.0)).delta
        exact.append(est == brute_min_distance(pts))
    spec = ExperimentSpec(GibbsModel.hardcore_strauss(0.3, 0.7, 0.1, 0.05), (4, 8, 16), 20,
                          seed=5, estimator="hardcore")
    rep = run_consistency(spec)
    ok_rows = [r for r in rep.rows if r["status"] == "ok"]
    above = all(r["est_delta"] >= 0.05 for r in ok_rows)
    med = rep.medians("delta")
    conds = [all(exact), len(ok_rows) == len(rep.rows), above, med[-1] < med[0]]
    _check(5, conds, f"exact on {sum(exact)}/100; delta_hat >= delta* on all "
           f"{len(ok_rows)} replicates: {above}; median delta_hat - delta* by rung "
           + ", ".join(f"{v:.4f}" for v in med), t0)


def test_criterion_6_consistency_trend():
    t0 = time.perf_counter()
    spec = ExperimentSpec(STRAUSS, (4, 8, 16), 20, seed=2024, box={"R": (0.01, 0.5)})
    rep = run_consistency(spec)
    parts, conds = [], []
    for p in ("z", "beta", "R"):
        med = rep.medians(p)
        conds.append(med[-1] < med[0])
        parts.append(f"{p}: " + " > ".join(f"{v:.4f}" for v in med))
    conds.append(not rep.failed_rungs)
    conds.append(time.perf_counter() - t0 < 900)
    _check(6, conds, "median |error| n=4,8,16  " + "; ".join(parts), t0)


def test_criterion_7_decomposition():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    outer, inner = Window.centered(4.0), Window.centered(3.0)
    cells = CellPartition(inner).indices()
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(0, 80))
        cfg = PointConfig(np.asarray(outer.lower) + rng.random((n, 2)) * outer.sides, outer)
        beta, R = rng.uniform(0, 2), rng.uniform(0.05, 0.8)
        m = (GibbsModel.strauss(rng.normal(), beta, R) if k % 2 == 0
             else GibbsModel.area_interaction(rng.normal(), rng.uniform(-2, 2), R))
        total = sum(mean_energy_cell(m, cfg, c, inner) for c in cells)
        total += boundary_energy(m, cfg, inner)
        worst = max(worst, abs(total - hamiltonian(m, cfg, inner)))
    # boundary share of the energy on simulated patterns
    model = GibbsModel.strauss(0.3, 0.7, 0.5)
    ratios = {}
    for n in (4, 16):
        vals = []
        for rep in range(8):
            s = run_chain(model, Window.centered(n + 1.0),
                          SamplerConfig(sweeps=301, burn_in=300, thin=1, seed=700 + rep))
            w = Window.centered(float(n))
            vals.append(abs(boundary_energy(model, s.draws[-1], w)) / w.volume())
        ratios[n] = float(np.mean(vals))
    conds = [worst <= 1e-10, ratios[16] < ratios[4]]
    _check(7, conds, f"max |sum cells + boundary - H| = {worst:.1e} over 200 instances; "
           f"|dH|/|W|: n=4 {ratios[4]:.4f}, n=16 {ratios[16]:.4f}", t0)


def test_criterion_8_geometry_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 11))
        R = float(rng.uniform(0.1, 1.0))
        c = rng.uniform(0.0, 3.0, (k, 2))
        ref = union_area_grid(c, R, 1e-4)
        worst = max(worst, abs(disc_union_area(c, R) - ref) / ref)
    lj = GibbsModel.lennard_jones(0.0, 1.0, 1.0, 12, 6).pair_potential()
    val = float(pair_potential_eval(lj, np.array([2 ** (1 / 6)]))[0])
    conds = [worst < 1e-3, abs(val + 0.25) <= 1e-12]
    _check(8, conds, f"union area max rel err {worst:.1e}; LJ(2^(1/6)) + 0.25 = "
           f"{val + 0.25:.1e}", t0)


def test_criterion_9_pseudolikelihood():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(20):
        side = rng.uniform(1.5, 4.0)
        w = Window((0.0, 0.0), (side, side))
        n = int(rng.integers(5, 60))
        data = PointConfig(rng.random((n, 2)) * side, w)
        R = rng.uniform(0.05, 0.5)
        pl = PseudoLikelihood(data, w, GibbsModel.strauss(0, 0, R), (R,), 0.0,
                              int(rng.integers(20, 80)))
        theta = np.array([rng.normal(), rng.uniform(0, 2)])
        g = pl.gradient(theta)
        fd = central_difference(pl.value, theta, 1e-6)
        worst = max(worst, float(np.max(np.abs(g - fd)) / np.max(np.abs(g))))
    w = Window.centered(5.0)
    data = run_chain(GibbsModel.poisson(0.2), w,
                     SamplerConfig(sweeps=301, burn_in=300, thin=1, seed=9)).draws[-1]
    target = poisson_z_hat(len(data), w.volume())
    errs = []
    for res in (50, 100, 200):
        ocfg = OptimizerConfig(fixed={"beta": 0.0, "R": 0.1}, range_grid=[(0.1,)])
        fit = pseudolikelihood_fit(data, w, "strauss", res, ocfg)
        errs.append(abs(fit.model.params.z - target))
    conds = [worst <= 1e-5, all(b <= a + 1e-12 for a, b in zip(errs, errs[1:])), errs[-1] < 1e-6]
    _check(9, conds, f"max relative gradient error {worst:.1e}; Poisson PL |z - z_hat| by "
           "grid 50/100/200: " + ", ".join(f"{e:.1e}" for e in errs), t0)
