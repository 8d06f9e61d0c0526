import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import strauss_energy, union_area_grid
from gibbsmle.geometry import CellPartition, PointConfig, Window
from gibbsmle.models import (
    GibbsModel,
    Kind,
    ModelError,
    UnsupportedDimension,
    boundary_energy,
    disc_union_area,
    hamiltonian,
    linear_statistics,
    local_energies,
    local_energy,
    mean_energy_cell,
    pair_potential_eval,
    support_indicator,
)

W = Window((0.0, 0.0), (3.0, 3.0))


def cfg(*pts, w=W):
    return PointConfig(np.array(pts, dtype=float).reshape(-1, 2), w)


def random_config(rng, n, w=W):
    return PointConfig(np.asarray(w.lower) + rng.random((n, 2)) * w.sides, w)


# pair potentials


def test_strauss_potential_values():
    phi = GibbsModel.strauss(0.0, 0.5, 1.0).pair_potential()
    assert pair_potential_eval(phi, 0.5) == 0.5
    assert pair_potential_eval(phi, 1.5) == 0.0
    hc = GibbsModel.hardcore_strauss(0.0, 0.5, 1.0, 0.2).pair_potential()
    assert pair_potential_eval(hc, 0.1) == math.inf
    assert pair_potential_eval(hc, 0.2) == 0.5


def test_breakpoint_takes_smaller_side():
    assert pair_potential_eval(GibbsModel.strauss(0, 0.5, 1.0).pair_potential(), 1.0) == 0.0
    pw = GibbsModel.piecewise(0.0, (2.0, 0.5), (0.3, 0.8)).pair_potential()
    assert pair_potential_eval(pw, 0.3) == 0.5
    assert pair_potential_eval(pw, 0.8) == 0.0
    assert list(pair_potential_eval(pw, np.array([0.1, 0.5, 0.9]))) == [2.0, 0.5, 0.0]


def test_callable_pieces():
    pieces = (lambda d, b, r: b[0] * (1 - d / r[0]), lambda d, b, r: b[1] * np.ones_like(d))
    m = GibbsModel.piecewise(0.0, (1.0, 0.25), (0.5, 1.0), pieces=pieces)
    phi = m.pair_potential()
    assert phi(0.25) == pytest.approx(0.5)
    assert phi(0.5) == 0.0  # min(0, 0.25)
    assert phi(0.7) == 0.25
    c = cfg([0, 0], [0.25, 0], [2.0, 2.0], [2.7, 2.0])
    assert hamiltonian(m, c) == pytest.approx(0.5 + 0.25)


def test_lennard_jones_values():
    phi = GibbsModel.lennard_jones(0.0, 1.0, 1.0, 12, 6).pair_potential()
    assert phi(1.0) == 0.0
    assert abs(phi(2 ** (1 / 6)) + 0.25) <= 1e-12


# validation


def test_negative_interaction_without_hardcore_rejected():
    with pytest.raises(ModelError, match="no Gibbs measure"):
        GibbsModel.strauss(0.3, -0.5, 0.1)
    GibbsModel.strauss(0.3, -0.5, 0.1, delta=0.05)


@pytest.mark.parametrize("make", [
    lambda: GibbsModel.piecewise(0, (1, 1), (0.5, 0.3)),
    lambda: GibbsModel.lennard_jones(0, A=-1),
    lambda: GibbsModel.lennard_jones(0, n=6, m=12),
    lambda: GibbsModel.hardcore_strauss(0, 1, 0.1, 0.0),
    lambda: GibbsModel.strauss(math.nan, 1, 0.1),
])
def test_invalid_models(make):
    with pytest.raises(ModelError):
        make()


def test_lennard_jones_dimension_check():
    m = GibbsModel.lennard_jones(0.0, 1, 1, n=3, m=1.5)
    with pytest.raises(ModelError):
        m.check_window(W)
    with pytest.raises(UnsupportedDimension):
        GibbsModel.area_interaction(0, 1, 0.1).check_window(Window((0.0,), (1.0,)))


def test_named_parameters():
    m = GibbsModel.piecewise(0.1, (1.0, 0.5), (0.2, 0.4), delta=0.05)
    assert m.param_names == ("z", "beta1", "beta2", "R1", "R2")
    assert m.with_values(beta2=0.7, delta=0.1).get("beta2") == 0.7
    assert m.with_values(delta=0.1).params.delta == 0.1
    assert GibbsModel.strauss(0.1, 0.2, 0.3).values() == {"z": 0.1, "beta": 0.2, "R": 0.3}


# energies


def test_hamiltonian_small_cases():
    s = GibbsModel.strauss(1.0, 0.5, 1.0)
    assert hamiltonian(s, cfg()) == 0.0
    assert hamiltonian(GibbsModel.strauss(1.5, 0.5, 1.0), cfg([1, 1])) == 1.5
    assert hamiltonian(s, cfg([1, 1], [1.5, 1])) == 2.5


def test_hamiltonian_matches_brute_force():
    rng = np.random.default_rng(10)
    for _ in range(30):
        z, beta, R = rng.normal(), rng.uniform(0, 2), rng.uniform(0.05, 1.0)
        delta = rng.choice([0.0, 0.02])
        c = random_config(rng, int(rng.integers(0, 50)))
        m = GibbsModel.strauss(z, beta, R, delta)
        want = strauss_energy(c.points, z, beta, R, delta)
        got = hamiltonian(m, c)
        assert got == want if math.isinf(want) else got == pytest.approx(want, abs=1e-12)


def test_hardcore_energy_infinite_iff_support_violated():
    rng = np.random.default_rng(11)
    for _ in range(30):
        c = random_config(rng, int(rng.integers(2, 30)))
        m = GibbsModel.hardcore_strauss(0.2, 0.3, 0.3, 0.15)
        assert math.isinf(hamiltonian(m, c)) == (not support_indicator(0.15, c))


def test_support_indicator():
    c = cfg([0, 0], [0.5, 0])
    assert support_indicator(0.0, c)
    assert not support_indicator(0.6, c)
    assert support_indicator(0.5, c)


def test_strauss_energy_bounded_below_by_activity():
    rng = np.random.default_rng(12)
    for _ in range(20):
        c = random_config(rng, int(rng.integers(0, 40)))
        z, beta = rng.uniform(0, 2), rng.uniform(0, 2)
        assert hamiltonian(GibbsModel.strauss(z, beta, 0.4), c) >= z * len(c)


MODELS = [
    GibbsModel.strauss(0.3, 0.7, 0.4),
    GibbsModel.hardcore_strauss(0.3, 0.7, 0.4, 0.01),
    GibbsModel.piecewise(-0.2, (1.2, -0.3), (0.2, 0.5), delta=0.01),
    GibbsModel.lennard_jones(0.1, 0.01, 0.02, truncation=0.8),
    GibbsModel.area_interaction(0.3, -0.8, 0.3),
]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind.value)
def test_local_energy_is_energy_difference(model):
    rng = np.random.default_rng(13)
    for _ in range(10):
        c = random_config(rng, int(rng.integers(0, 30)))
        x = rng.random(2) * 3
        before, after = hamiltonian(model, c), hamiltonian(model, c.with_point(x))
        h = local_energy(model, x, c)
        if math.isinf(before):
            continue
        if math.isinf(after):
            assert math.isinf(h)
        else:
            # the difference of totals carries their rounding error
            scale = max(abs(after), abs(before), 1.0)
            assert h == pytest.approx(after - before, abs=1e-12 * scale)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind.value)
def test_local_energy_independent_of_window(model):
    rng = np.random.default_rng(14)
    c = random_config(rng, 25)
    big = PointConfig(c.points, W.dilate(2.0))
    x = np.array([1.5, 1.5])
    a = hamiltonian(model, big.with_point(x), W.dilate(2.0)) - hamiltonian(model, big, W.dilate(2.0))
    b = hamiltonian(model, c.with_point(x), W) - hamiltonian(model, c, W)
    if math.isfinite(a):
        assert a == pytest.approx(b, rel=1e-12, abs=1e-9)
        assert local_energy(model, x, c) == pytest.approx(b, rel=1e-12, abs=1e-9)


def test_local_energies_skip():
    m = GibbsModel.strauss(0.5, 1.0, 0.3)
    c = cfg([1, 1], [1.1, 1], [2, 2])
    h = local_energies(m, c.points, c, np.arange(3))
    assert h.tolist() == [1.5, 1.5, 0.5]


def test_area_interaction_local_energy():
    z, beta, R = 0.4, 0.7, 0.3
    m = GibbsModel.area_interaction(z, beta, R)
    assert local_energy(m, [1.5, 1.5], cfg()) == pytest.approx(z + beta * math.pi * R * R)
    assert local_energy(m, [1.5, 1.5], cfg([1.5, 1.5])) == pytest.approx(z)
    for t in (0.05, 0.3, 0.55):
        extra = union_area_grid(np.array([[1.5, 1.5], [1.5 + t, 1.5]]), R) - math.pi * R * R
        h = local_energy(m, [1.5 + t, 1.5], cfg([1.5, 1.5]))
        assert h == pytest.approx(z + beta * extra, rel=1e-4)


def test_disc_union_area():
    R = 0.4
    assert disc_union_area([[1.0, 1.0]], R) == pytest.approx(math.pi * R * R)
    assert disc_union_area([[1.0, 1.0], [1.0, 1.0]], R) == pytest.approx(math.pi * R * R)
    pts = np.array([[1.0, 1.0], [1.0 + R, 1.0]])
    assert disc_union_area(pts, R) == pytest.approx(union_area_grid(pts, R), rel=1e-5)
    lens = 2 * R * R * math.acos(0.5) - 0.5 * R * math.sqrt(4 * R * R - R * R)
    assert disc_union_area(pts, R) == pytest.approx(2 * math.pi * R * R - lens, rel=1e-12)
    clipped = disc_union_area([[0.0, 0.0]], R, Window((0.0, 0.0), (1.0, 1.0)))
    assert clipped == pytest.approx(math.pi * R * R / 4)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 2), st.floats(0, 2)), min_size=1, max_size=8),
       st.floats(0.05, 0.6), st.floats(0.0, 0.2))
def test_disc_union_area_monotone(pts, R, dR):
    pts = np.array(pts)
    a = disc_union_area(pts, R)
    assert disc_union_area(pts, R + dR) >= a - 1e-12
    assert disc_union_area(pts[:-1], R) <= a + 1e-12 if len(pts) > 1 else True
    assert a <= len(pts) * math.pi * R * R + 1e-12


def test_cell_energy_examples():
    m = GibbsModel.strauss(0.7, 0.5, 0.3)
    w = Window.centered(2.0)
    assert mean_energy_cell(m, PointConfig([], w), (0, 0)) == 0.0
    assert mean_energy_cell(m, PointConfig([[0.5, 0.5]], w), (0, 0)) == 0.7
    two = PointConfig([[0.9, 0.5], [1.1, 0.5]], w)
    assert mean_energy_cell(m, two, (0, 0)) == pytest.approx(0.7 + 0.25)


def test_boundary_energy_zero_far_from_edge():
    m = GibbsModel.strauss(0.7, 0.5, 0.3)
    w = Window.centered(2.0)
    c = PointConfig([[0.0, 0.0], [0.1, 0.0], [-0.5, 0.5]], w)
    assert boundary_energy(m, c, w) == 0.0


@pytest.mark.parametrize("model", [MODELS[0], MODELS[2], MODELS[4]], ids=lambda m: m.kind.value)
def test_decomposition_identity(model):
    rng = np.random.default_rng(15)
    outer, inner = Window.centered(3.0), Window.centered(2.0)
    cells = CellPartition(inner).indices()
    for _ in range(10):
        c = random_config(rng, int(rng.integers(0, 50)), outer)
        h = hamiltonian(model, c, inner)
        if math.isinf(h):
            continue
        total = sum(mean_energy_cell(model, c, k, inner) for k in cells)
        assert total + boundary_energy(model, c, inner) == pytest.approx(h, abs=1e-10)


def test_linear_statistics():
    m = GibbsModel.piecewise(0.0, (1.0, 1.0), (0.3, 0.6))
    c = cfg([0, 0], [0.2, 0], [0.5, 0], [0.3, 0])
    # pairs: 0.2, 0.5, 0.3 (on the first breakpoint -> outer), 0.3, 0.1, 0.2
    T = linear_statistics(m, c)
    assert T.tolist() == [4, 3, 3]
    rng = np.random.default_rng(16)
    for _ in range(10):
        c = random_config(rng, 30)
        theta = np.array([rng.normal(), rng.uniform(0, 1), rng.uniform(0, 1)])
        mm = m.with_values(z=theta[0], beta1=theta[1], beta2=theta[2])
        assert theta @ linear_statistics(mm, c) == pytest.approx(hamiltonian(mm, c))
