import math
import warnings

import numpy as np
import pytest

from oracles import central_difference, poisson_z_hat
from gibbsmle.geometry import PointConfig, Window
from gibbsmle.models import GibbsModel, Kind, hamiltonian
from gibbsmle.partition import (
    BridgeSchedule,
    LogZEstimate,
    log_z_bridged,
    log_z_brute,
    poisson_draws,
    poisson_log_z,
)
from gibbsmle.estimator import (
    InfeasibleData,
    OptimizerConfig,
    PseudoLikelihood,
    UnidentifiableWarning,
    contrast,
    hardcore_mle,
    mc_mle,
    profile_range,
    pseudolikelihood_fit,
    read_record,
)
from gibbsmle.sampler import SamplerConfig, run_chain

W6 = Window((0.0, 0.0), (6.0, 6.0))
SCFG = SamplerConfig(burn_in=100, thin=3, seed=4)


def strauss_data(w, seed, model=GibbsModel.strauss(0.3, 0.7, 0.15)):
    s = run_chain(model, w, SamplerConfig(sweeps=301, burn_in=300, thin=1, seed=seed))
    return s.draws[-1]


def gap_pattern(w, gaps):
    """Points on a line with the given consecutive spacings."""
    x = 1.0 + np.concatenate([[0.0], np.cumsum(gaps)])
    return PointConfig(np.column_stack([x, np.full_like(x, 1.0)]), w)


def test_hardcore_mle_clamping():
    w = Window((0.0, 0.0), (10.0, 10.0))
    assert hardcore_mle(gap_pattern(w, [0.5, 0.8]), (0.1, 1.0)) == (0.5, True, 0.5)
    assert hardcore_mle(gap_pattern(w, [2.0, 3.0]), (0.1, 1.0)).delta == 1.0
    low = hardcore_mle(gap_pattern(w, [0.05, 0.8]), (0.1, 1.0))
    assert low.delta == 0.1 and not low.feasible
    with pytest.raises(ValueError):
        hardcore_mle(gap_pattern(w, [1.0]), (0.5, 0.1))


def test_hardcore_mle_nested_windows():
    m = GibbsModel.hardcore_strauss(0.0, 0.2, 0.1, 0.05)
    big = Window.centered(4.0)
    data = strauss_data(big, 3, m)
    prev = math.inf
    for half in (1.0, 2.0, 3.0, 4.0):
        d = hardcore_mle(data.restrict(Window.centered(half)), (0.0, 100.0)).delta
        assert 0.05 <= d <= prev
        prev = d


def test_contrast_poisson_closed_form():
    data = strauss_data(W6, 1, GibbsModel.poisson(0.2))
    z = 0.5
    c = contrast(GibbsModel.poisson(z), data, W6, poisson_log_z(z, W6))
    assert c.value == pytest.approx(math.expm1(-z) + z * len(data) / W6.volume())
    assert c.value == c.pressure_term + c.energy_term


def test_contrast_infinite_above_gap():
    w = Window((0.0, 0.0), (5.0, 5.0))
    data = gap_pattern(w, [0.3, 0.5])
    m = GibbsModel.hardcore_strauss(0.0, 0.0, 0.5, 0.35)
    assert math.isinf(contrast(m, data, w, LogZEstimate(-1.0, 0.0, 1.0, "x")).value)


def test_contrast_empty_data_is_pressure():
    logz = LogZEstimate(-3.2, 0.1, 100.0, "x")
    c = contrast(GibbsModel.strauss(0.3, 0.7, 0.1), PointConfig([], W6), W6, logz)
    assert c.value == -3.2 / W6.volume() and c.energy_term == 0.0


def test_poisson_submodel_fit():
    data = strauss_data(W6, 2, GibbsModel.poisson(0.1))
    ocfg = OptimizerConfig(fixed={"beta": 0.0})
    fit = mc_mle(data, W6, Kind.STRAUSS, ocfg, SCFG)
    assert fit.values()["z"] == pytest.approx(poisson_z_hat(len(data), W6.volume()), abs=1e-6)
    poi = mc_mle(data, W6, Kind.POISSON, scfg=SCFG)
    assert poi.values()["z"] == pytest.approx(poisson_z_hat(len(data), W6.volume()), abs=1e-6)


def test_empty_data_is_infeasible():
    with pytest.raises(InfeasibleData):
        mc_mle(PointConfig([], W6), W6, Kind.STRAUSS)


def test_hardcore_passthrough():
    w = Window((0.0, 0.0), (8.0, 8.0))
    rng = np.random.default_rng(0)
    pts = [[1.0, 1.0], [1.07, 1.0]]
    while len(pts) < 40:
        p = rng.uniform(0.5, 7.5, 2)
        if min(math.dist(p, q) for q in pts) > 0.3:
            pts.append(list(p))
    data = PointConfig(pts, w)
    ocfg = OptimizerConfig(delta_interval=(0.01, 1.0), draws=100)
    fit = mc_mle(data, w, Kind.HARDCORE_STRAUSS, ocfg, SCFG)
    assert fit.delta_hat == pytest.approx(0.07) and fit.feasible


def test_argmin_contract():
    truth = GibbsModel.strauss(0.3, 0.7, 0.15)
    w = Window((0.0, 0.0), (12.0, 12.0))
    data = strauss_data(w, 5, truth)
    fit = mc_mle(data, w, Kind.STRAUSS, OptimizerConfig(draws=200), SCFG)
    for name, (lo, hi) in fit.box.items():
        if name != "delta":
            assert lo <= fit.model.get(name) <= hi
    scfg = SamplerConfig(burn_in=200, thin=3, seed=9)
    k = []
    for m in (fit.model, truth):
        logz = log_z_bridged(BridgeSchedule.from_poisson(m, 6), w, scfg)
        k.append(contrast(m, data, w, logz))
    assert k[0].value <= k[1].value + 3 * math.hypot(k[0].mc_error, k[1].mc_error)


def test_mc_mle_is_deterministic_and_offset_invariant():
    data = strauss_data(W6, 6)
    ocfg = OptimizerConfig(draws=120)
    a = mc_mle(data, W6, Kind.STRAUSS, ocfg, SCFG)
    b = mc_mle(data, W6, Kind.STRAUSS, ocfg, SCFG)
    assert a.values() == b.values() and a.contrast_relative == b.contrast_relative
    shifted = mc_mle(data, W6, Kind.STRAUSS,
                     OptimizerConfig(draws=120, surface_offset=7.5), SCFG)
    # the shift only perturbs rounding, so agreement is up to the simplex tolerance
    for k, v in a.values().items():
        assert shifted.values()[k] == pytest.approx(v, abs=1e-5)


def test_profile_range_single_candidate():
    data = strauss_data(W6, 7)
    ocfg = OptimizerConfig(draws=120)
    best, fit = profile_range(data, W6, Kind.STRAUSS, [(0.15,)], ocfg, SCFG)
    assert best == (0.15,)
    fixed = mc_mle(data, W6, Kind.STRAUSS,
                   OptimizerConfig(draws=120, range_grid=[(0.15,)], refine_grid=False), SCFG)
    assert fit.values() == fixed.values()
    with pytest.raises(ValueError):
        profile_range(data, W6, Kind.STRAUSS, [], ocfg, SCFG)


def test_range_gap_contrast_favours_larger_range():
    # no pair lies in [0.1, 0.2), so both ranges see the same energy and
    # the one with the smaller ln Z (larger range) has the smaller contrast
    w = Window((0.0, 0.0), (3.0, 3.0))
    data = gap_pattern(w, [0.05, 0.3, 0.06, 0.4])
    draws = poisson_draws(w, 4000, 1)
    k = []
    for R in (0.1, 0.2):
        m = GibbsModel.strauss(0.2, 0.8, R)
        k.append(contrast(m, data, w, log_z_brute(m, w, 0, 0, draws)))
    assert k[0].energy_term == k[1].energy_term
    assert k[1].value < k[0].value


def test_unidentifiable_range_warns():
    data = strauss_data(W6, 8, GibbsModel.poisson(0.0))
    ocfg = OptimizerConfig(draws=100, box={"beta": (0.0, 1e-4)})
    with pytest.warns(UnidentifiableWarning):
        fit = mc_mle(data, W6, Kind.STRAUSS, ocfg, SCFG)
    assert "identifiable" in fit.diagnostics["warning"]


def test_fit_record_round_trip(tmp_path):
    data = strauss_data(W6, 6)
    fit = pseudolikelihood_fit(data, W6, Kind.STRAUSS)
    rec, trace = fit.write(tmp_path / "fit.txt")
    back = read_record(rec)
    assert back["kind"] == "strauss" and back["method"] == "pseudolikelihood"
    for k, v in fit.values().items():
        assert float(back[k]) == v
    assert trace.read_text().splitlines()[0].startswith("ranges,value")


def test_pseudolikelihood_poisson_closed_form():
    data = strauss_data(W6, 3, GibbsModel.poisson(0.4))
    fit = pseudolikelihood_fit(data, W6, Kind.POISSON, quadrature=100)
    assert fit.values()["z"] == pytest.approx(poisson_z_hat(len(data), W6.volume()), abs=1e-9)


def test_pseudolikelihood_gradient_and_sign():
    tmpl = GibbsModel.strauss(0.0, 0.0, 0.2)
    rng = np.random.default_rng(5)
    inhibited = PointConfig(np.array([[0.5 + i, 0.5 + j] for i in range(6) for j in range(6)]), W6)
    centres = rng.uniform(1.0, 5.0, (6, 2))
    clustered = PointConfig((centres[:, None, :] + rng.normal(0, 0.05, (6, 6, 2))).reshape(-1, 2)
                            .clip(0, 6), W6)
    for data, sign in ((inhibited, -1), (clustered, 1)):
        pl = PseudoLikelihood(data, W6, tmpl, (0.2,), 0.0, 60)
        theta = np.array([-math.log(len(data) / W6.volume()), 0.0])
        g = pl.gradient(theta)
        num = central_difference(pl.value, theta, 1e-6)
        assert np.allclose(g, num, rtol=1e-5, atol=1e-7)
        # the objective is minimised: clustering pulls beta negative
        assert np.sign(g[1]) == sign


def test_pseudolikelihood_hardcore_dummy_points_vanish():
    data = PointConfig([[3.0, 3.0], [4.0, 4.0]], W6)
    tmpl = GibbsModel.hardcore_strauss(0.0, 0.0, 0.2, 0.5)
    with_hc = PseudoLikelihood(data, W6, tmpl, (0.2,), 0.5, 60)
    without = PseudoLikelihood(data, W6, tmpl, (0.2,), 0.0, 60)
    # the dummy integral loses the mass of the two excluded discs
    gap = without.value(np.zeros(2)) - with_hc.value(np.zeros(2))
    assert gap == pytest.approx(2 * math.pi * 0.25, rel=0.05)


def test_strauss_fit_energy_matches_model():
    data = strauss_data(W6, 6)
    fit = pseudolikelihood_fit(data, W6, Kind.STRAUSS)
    assert math.isfinite(hamiltonian(fit.model, data, W6))


def test_warnings_are_silent_for_regular_fit():
    data = strauss_data(W6, 6)
    with warnings.catch_warnings():
        warnings.simplefilter("error", UnidentifiableWarning)
        mc_mle(data, W6, Kind.STRAUSS, OptimizerConfig(draws=120), SCFG)
