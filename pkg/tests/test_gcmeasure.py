import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nueg.errors import ValidationError
from nueg.gcmeasure import (DiscreteDensity, GCPlan, RieszCost,
                            cell_self_interaction, density_of, direct_energy,
                            localize, riesz_energy)

from oracles import cube_pair_interaction_mc, two_cell_direct_quadrature


def make_plan(support, p0, layers):
    return GCPlan(np.asarray(support, dtype=float), p0, layers)


# ---------------------------------------------------------------------------
# density marginal


def test_density_single_particle():
    plan = make_plan([[0.0], [1.0]], 0.0, {1: {(0,): 1.0}})
    rho = density_of(plan)
    np.testing.assert_allclose(rho.weights, [1.0, 0.0])


def test_density_pair():
    plan = make_plan([[0.0], [1.0]], 0.0, {2: {(0, 1): 1.0}})
    rho = density_of(plan)
    np.testing.assert_allclose(rho.weights, [1.0, 1.0])


def test_density_vacuum():
    plan = make_plan([[0.0]], 1.0, {})
    assert density_of(plan).total_mass == 0.0


def test_density_multiplicity():
    plan = make_plan([[0.0], [1.0]], 0.5, {2: {(0, 0): 0.5}})
    rho = density_of(plan)
    np.testing.assert_allclose(rho.weights, [1.0, 0.0])


# ---------------------------------------------------------------------------
# Riesz energy


def test_riesz_no_pairs(cost_1d):
    plan = make_plan([[0.0], [2.0]], 0.4, {1: {(0,): 0.3, (1,): 0.3}})
    assert riesz_energy(plan, cost_1d) == 0.0


def test_riesz_single_pair():
    plan = make_plan([[0.0, 0, 0], [2.0, 0, 0]], 0.0, {2: {(0, 1): 1.0}})
    cost = RieszCost(3, 1.0)
    assert riesz_energy(plan, cost) == pytest.approx(0.5)


def test_riesz_triangle():
    pts = [[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]
    plan = make_plan(pts, 0.0, {3: {(0, 1, 2): 1.0}})
    cost = RieszCost(2, 1.0)
    assert riesz_energy(plan, cost) == pytest.approx(3.0)


def test_riesz_repeated_point_rules():
    plan = make_plan([[0.0], [1.0]], 0.0, {2: {(0, 0): 1.0}})
    assert riesz_energy(plan, RieszCost(1, 0.5, "infinite")) == math.inf
    assert riesz_energy(plan, RieszCost(1, 0.5, "excluded")) == 0.0


def test_cost_validation():
    with pytest.raises(ValidationError):
        RieszCost(1, 1.0)
    with pytest.raises(ValidationError):
        RieszCost(3, 0.0)


# ---------------------------------------------------------------------------
# direct term and the cell self-interaction constant


def test_direct_zero_density(cost_1d):
    rho = DiscreteDensity(np.zeros((0, 1)), np.zeros(0))
    assert direct_energy(rho, cost_1d) == 0.0


def test_direct_translation_invariant(cost_1d):
    rng = np.random.default_rng(3)
    pts = np.sort(rng.uniform(0, 4, 5))[:, None]
    w = rng.uniform(0.1, 0.9, 5)
    rho = DiscreteDensity(pts, w, cell_width=0.2)
    shifted = rho.translated([1.7])
    assert direct_energy(rho, cost_1d) == pytest.approx(
        direct_energy(shifted, cost_1d), rel=1e-14)


def test_direct_two_cells_off_diagonal(cost_1d):
    cost = RieszCost(1, 1.0 - 1e-9)  # s -> 1 from below in d=1 is invalid; use s=0.5
    cost = RieszCost(1, 0.5)
    rho = DiscreteDensity([[0.0], [4.0]], [1.0, 1.0])  # h=0: off-diagonal only
    val = direct_energy(rho, cost)
    assert val == pytest.approx(0.5 * 2 * 4.0 ** (-0.5))
    # fine-grid double-quadrature oracle converges to the point value as h->0
    for h, tol in [(0.2, 2e-3), (0.05, 2e-4)]:
        oracle = two_cell_direct_quadrature(0.0, 4.0, 1.0, 1.0, h, 0.5)
        assert oracle == pytest.approx(val, abs=tol)


def test_cell_self_interaction_d1_closed_form():
    for s in (0.3, 0.5, 0.8):
        assert cell_self_interaction(1, s) == pytest.approx(
            2.0 / ((1.0 - s) * (2.0 - s)), rel=1e-10)


def test_cell_self_interaction_d3_oracle():
    val = cell_self_interaction(3, 1.0)
    mc = cube_pair_interaction_mc(3, 1.0)
    assert val == pytest.approx(mc, abs=5e-3)


def test_direct_self_term_scaling():
    cost = RieszCost(1, 0.5)
    rho1 = DiscreteDensity([[0.0]], [1.0], cell_width=0.5)
    rho2 = DiscreteDensity([[0.0]], [1.0], cell_width=1.0)
    kappa = cell_self_interaction(1, 0.5)
    assert direct_energy(rho1, cost) == pytest.approx(
        kappa / (2 * 0.5 ** 0.5))
    assert direct_energy(rho2, cost) == pytest.approx(kappa / 2.0)


# ---------------------------------------------------------------------------
# localization


def test_localize_everything_is_identity(cost_1d):
    plan = make_plan([[0.0], [1.0], [2.5]], 0.1,
                     {1: {(0,): 0.3}, 2: {(1, 2): 0.6}})
    loc = localize(plan, np.array([True, True, True]))
    assert loc.p0 == plan.p0
    assert loc.layers == plan.layers


def test_localize_empty_region():
    plan = make_plan([[0.0], [1.0]], 0.2, {2: {(0, 1): 0.8}})
    loc = localize(plan, np.array([False, False]))
    assert loc.p0 == pytest.approx(1.0)
    assert not loc.layers


def test_localize_pair_to_singleton():
    plan = make_plan([[0.0], [2.0]], 0.0, {2: {(0, 1): 1.0}})
    loc = localize(plan, np.array([True, False]))
    assert loc.p0 == 0.0
    assert loc.layers == {1: {(0,): 1.0}}
    np.testing.assert_allclose(density_of(loc).weights, [1.0, 0.0])


def _random_plan(rng, M=5, nmax=3):
    support = np.sort(rng.uniform(0, 3, M))[:, None]
    layers = {}
    budget = 1.0
    for n in range(1, nmax + 1):
        k = rng.integers(1, 3)
        bucket = {}
        for _ in range(k):
            cfg = tuple(sorted(rng.choice(M, size=n, replace=False).tolist()))
            w = float(rng.uniform(0, budget / 4))
            bucket[cfg] = bucket.get(cfg, 0.0) + w
            budget -= w
        layers[n] = bucket
    plan = GCPlan(support, budget, layers)
    return plan.validate()


def test_localize_preserves_normalization_and_restricts_density():
    rng = np.random.default_rng(11)
    for _ in range(25):
        plan = _random_plan(rng)
        mask = rng.random(plan.support.shape[0]) < 0.5
        loc = localize(plan, mask)
        assert abs(loc.total_probability() - 1.0) <= 1e-12
        full = density_of(plan).weights
        restricted = density_of(loc).weights
        np.testing.assert_allclose(restricted, np.where(mask, full, 0.0),
                                   atol=1e-14)


def test_localization_superadditive_over_partitions(cost_1d):
    rng = np.random.default_rng(7)
    for _ in range(15):
        plan = _random_plan(rng)
        M = plan.support.shape[0]
        labels = rng.integers(0, 3, M)
        total = riesz_energy(plan, cost_1d)
        parts = sum(riesz_energy(localize(plan, labels == j), cost_1d)
                    for j in range(3))
        assert parts <= total + 1e-12


def test_localize_predicate_form():
    plan = make_plan([[0.0], [2.0]], 0.0, {2: {(0, 1): 1.0}})
    loc = localize(plan, lambda p: p[0] < 1.0)
    assert loc.layers == {1: {(0,): 1.0}}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_localize_normalization_property(seed):
    rng = np.random.default_rng(seed)
    plan = _random_plan(rng, M=4, nmax=2)
    mask = rng.random(4) < rng.random()
    loc = localize(plan, mask)
    assert abs(loc.total_probability() - 1.0) <= 1e-12


# ---------------------------------------------------------------------------
# validation and serialization


def test_plan_normalization_enforced():
    plan = make_plan([[0.0]], 0.5, {1: {(0,): 0.7}})
    with pytest.raises(ValidationError):
        plan.validate()


def test_plan_serialization_roundtrip(tmp_path):
    plan = make_plan([[0.0, 0.0, 0.0], [1.0, 0.5, 0.0]], 0.25,
                     {1: {(1,): 0.25}, 2: {(0, 1): 0.5}})
    path = tmp_path / "plan.json"
    plan.dump(path)
    back = GCPlan.load(path)
    assert back.p0 == plan.p0
    assert back.layers == plan.layers
    np.testing.assert_allclose(back.support, plan.support)


def test_density_serialization_roundtrip(tmp_path):
    rho = DiscreteDensity([[0.0], [1.5]], [0.4, 0.6], cell_width=0.5)
    path = tmp_path / "rho.json"
    rho.dump(path)
    back = DiscreteDensity.load(path)
    np.testing.assert_allclose(back.points, rho.points)
    np.testing.assert_allclose(back.weights, rho.weights)
    assert back.cell_width == rho.cell_width


def test_density_invariants():
    with pytest.raises(ValidationError):
        DiscreteDensity([[0.0], [0.0]], [1.0, 1.0])
    with pytest.raises(ValidationError):
        DiscreteDensity([[0.0]], [-0.1])
