import math

import numpy as np
import pytest

from nueg.bounds import (LDAParams, fourier_direct_identity, lda_check,
                         lda_rhs, lda_slow_variation_rhs, lieb_oxford_check,
                         lt_llsbound_rhs, morrey_bound, quantum_apriori,
                         skeleton_mean_check)
from nueg.constants import (C_GS, C_LO_3D, C_TF, LIEB_NARNHOFER_FLOOR,
                            constants_table, morrey_constant)
from nueg.errors import ValidationError
from nueg.gcmeasure import DiscreteDensity, GCPlan, RieszCost
from nueg.periodic import Lattice, PeriodicField, constant_field
from nueg.sce import SCEProblem, sce_exact


# ---------------------------------------------------------------------------
# constants table


def test_constants_against_independent_evaluation():
    assert C_GS == pytest.approx(math.pi * (1 + 2 * math.sqrt(2)) / 4, rel=0)
    assert f"{C_GS:.4f}" == "3.0068"
    assert f"{LIEB_NARNHOFER_FLOOR:.4f}" == "-1.4508"
    assert C_TF == pytest.approx(
        0.6 * (2 * math.pi) ** 2 * (4 * math.pi / 3) ** (-2 / 3), rel=0)
    assert f"{C_TF:.5g}" == "9.1156"
    assert morrey_constant(4.0) == pytest.approx(
        2 * 24 ** 0.25 * 3 / 5, rel=1e-12)
    table = constants_table()
    assert table["c_lo_3d_coulomb"] == 1.58


# ---------------------------------------------------------------------------
# Lieb-Oxford slack


def test_lieb_oxford_vacuum_plan():
    plan = GCPlan(np.zeros((1, 3)), 1.0, {})
    cost = RieszCost(3, 1.0)
    assert lieb_oxford_check(plan, cost, cell_width=0.2) == pytest.approx(0.0)


def test_lieb_oxford_single_particle_plans():
    support = np.array([[0.0, 0, 0], [0.5, 0, 0]])
    plan = GCPlan(support, 0.2, {1: {(0,): 0.4, (1,): 0.4}})
    cost = RieszCost(3, 1.0)
    slack = lieb_oxford_check(plan, cost, cell_width=0.25)
    # n <= 1 plans: slack = c_LO integral rho^(4/3) - D(rho) >= 0
    h = 0.25
    w = np.array([0.4, 0.4])
    manual = C_LO_3D * np.sum(w ** (4 / 3)) / h - (
        0.4 * 0.4 / 0.5 + np.sum(w ** 2) * 1.8823126443 / (2 * h))
    assert slack == pytest.approx(manual, rel=1e-6)
    assert slack >= 0


def test_lieb_oxford_on_optimal_plan():
    h = 0.25
    pts = np.array([[0.0, 0, 0], [h, 0, 0], [0, h, 0], [h, h, h]])
    w = np.array([0.8, 0.6, 0.7, 0.5])
    rho = DiscreteDensity(pts, w, cell_width=h)
    cost = RieszCost(3, 1.0)
    rep = sce_exact(SCEProblem(rho=rho, cost=cost))
    slack = lieb_oxford_check(rep.plan, cost, cell_width=h)
    assert slack >= -1e-8


def test_lieb_oxford_needs_constant_outside_coulomb():
    plan = GCPlan(np.zeros((1, 1)), 1.0, {})
    with pytest.raises(ValidationError):
        lieb_oxford_check(plan, RieszCost(1, 0.5), cell_width=0.1)


# ---------------------------------------------------------------------------
# LDA bound


def test_lda_params_hand_values():
    p1 = LDAParams(p=4.0, theta=1.0 / 3.0, epsilon=0.5)
    assert p1.b == pytest.approx(4.0)
    assert p1.c_ptheta == pytest.approx(2.71 * 4 * 30.0 ** 4)
    p2 = LDAParams(p=6.0, theta=0.5, epsilon=0.5)
    assert p2.b == pytest.approx(11.0)
    assert p2.c_ptheta == pytest.approx(2.71 * 11 * 20.0 ** 11)


def test_lda_params_constraint_messages():
    with pytest.raises(ValidationError, match="p > 3"):
        LDAParams(p=2.0, theta=0.5, epsilon=0.1)
    with pytest.raises(ValidationError, match="theta"):
        LDAParams(p=4.0, theta=1.5, epsilon=0.1)
    with pytest.raises(ValidationError, match="4/3"):
        LDAParams(p=4.0, theta=0.2, epsilon=0.1)


def test_lda_rhs_constant_field():
    zeta = constant_field(2.0, dimension=3, shape=(4, 4, 4))
    params = LDAParams(p=4.0, theta=1.0 / 3.0, epsilon=0.3)
    bound = lda_rhs(zeta, params)
    assert bound.grad_term == 0.0
    assert bound.rhs == pytest.approx(0.3 * (2.0 + 2.0 ** (4 / 3)))
    assert bound.minimizing_eps == 0.0


def _wavy_field(n=8, amp=0.3):
    x = (np.arange(n) + 0.5) / n
    sx = 1.0 + amp * np.sin(2 * np.pi * x)
    samples = np.einsum("i,j,k->ijk", sx, np.ones(n), np.ones(n))
    return PeriodicField(Lattice(np.eye(3)), samples, "multilinear")


def test_lda_gradient_term_scales_like_lambda_p():
    params = LDAParams(p=4.0, theta=1.0 / 3.0, epsilon=0.5)
    f1 = _wavy_field()
    g1 = lda_rhs(f1, params).grad_integral
    # zeta(lam x): same samples on a lattice shrunk by lam
    lam = 0.5
    f2 = PeriodicField(Lattice(np.eye(3) / lam), f1.samples, "multilinear")
    g2 = lda_rhs(f2, params).grad_integral
    assert g2 == pytest.approx(lam ** params.p * g1, rel=1e-12)


def test_lda_rhs_epsilon_convexity():
    f = _wavy_field()
    eps_star = lda_rhs(f, LDAParams(4.0, 1.0 / 3.0, 1.0)).minimizing_eps
    assert eps_star > 0
    best = lda_rhs(f, LDAParams(4.0, 1.0 / 3.0, eps_star)).rhs
    below = lda_rhs(f, LDAParams(4.0, 1.0 / 3.0, eps_star / 5.0)).rhs
    above = lda_rhs(f, LDAParams(4.0, 1.0 / 3.0, eps_star * 5.0)).rhs
    # decreasing branch before the minimizer, increasing after
    assert below > best < above


def test_lda_slow_variation_form():
    f = _wavy_field()
    params = LDAParams(4.0, 1.0 / 3.0, epsilon=1.0)
    lam = 0.01
    val = lda_slow_variation_rhs(f, params, lam)
    base = lda_rhs(f, params)
    expect = math.sqrt(lam) * base.mass_term + \
        base.c_ptheta * lam ** params.p / math.sqrt(lam) ** params.b * \
        base.grad_integral
    assert val == pytest.approx(expect, rel=1e-12)


def test_lda_check_constant_field_consistent():
    zeta = constant_field(1.0, dimension=3, shape=(2, 2, 2))
    params = LDAParams(4.0, 1.0 / 3.0, epsilon=0.5)
    floor = -C_LO_3D
    chk = lda_check(zeta, params, (floor, 0.0),
                    (LIEB_NARNHOFER_FLOOR, 0.0))
    assert chk.consistent  # the bracket contains 0 by the uniform-gas case


def test_lda_check_vacuity_flag():
    zeta = constant_field(1.0, dimension=3, shape=(2, 2, 2))
    tight = lda_check(zeta, LDAParams(4.0, 1.0 / 3.0, epsilon=1e-6),
                      (-0.5, -0.4), (-1.0, -0.9))
    wide = lda_check(zeta, LDAParams(4.0, 1.0 / 3.0, epsilon=10.0),
                     (-0.5, -0.4), (-1.0, -0.9))
    assert wide.vacuous and wide.consistent
    assert not tight.vacuous


# ---------------------------------------------------------------------------
# Morrey bound


def test_morrey_constant_function():
    rep = morrey_bound(4.0, 2.0, lambda pts: np.zeros(len(np.atleast_2d(pts))),
                       grad_u=lambda pts: np.zeros_like(np.atleast_2d(pts)))
    assert rep["ok"]


def test_morrey_linear_function():
    v = np.array([0.7, -0.4, 1.1])

    def u(pts):
        return np.atleast_2d(pts) @ v

    def grad_u(pts):
        return np.tile(v, (len(np.atleast_2d(pts)), 1))

    rep = morrey_bound(4.0, 2.0, u, grad_u, n_pairs=1000)
    assert rep["ok"]
    assert rep["max_ratio_to_bound"] <= 1.0


def test_morrey_sharp_bump():
    def u(pts):
        pts = np.atleast_2d(pts)
        return np.exp(-40.0 * ((pts - 0.05) ** 2).sum(axis=1))

    rep = morrey_bound(5.0, 1.0, u, n_pairs=800)
    assert rep["ok"]


def test_morrey_rejects_small_p():
    with pytest.raises(ValidationError):
        morrey_bound(3.0, 1.0, lambda p: np.zeros(len(np.atleast_2d(p))))


# ---------------------------------------------------------------------------
# kinetic sandwich evaluators


def test_quantum_apriori_constant_field():
    rho0 = 1.3
    zeta = constant_field(rho0, dimension=3, shape=(2, 2, 2))
    upper, lower = quantum_apriori(zeta, hbar=1.0, eps=1.0 / 15.0)
    # gradient terms vanish identically for constant fields
    assert upper == pytest.approx((1 + 1 / 15) * C_TF * rho0 ** (5 / 3))
    assert lower == pytest.approx((1 - 1 / 15) * C_TF * rho0 ** (5 / 3)
                                  - C_LO_3D * rho0 ** (4 / 3))
    assert lower <= C_TF * rho0 ** (5 / 3) <= upper


def test_quantum_apriori_sandwich_on_wavy_corpus():
    for amp in (0.1, 0.4, 0.8):
        f = _wavy_field(amp=amp)
        upper, lower = quantum_apriori(f, hbar=1.0, eps=1.0 / 15.0)
        assert lower <= upper


def test_quantum_apriori_range_errors():
    zeta = constant_field(1.0, dimension=3, shape=(2, 2, 2))
    with pytest.raises(ValidationError, match="upper"):
        quantum_apriori(zeta, 1.0, 0.2)
    with pytest.raises(ValidationError, match="lower"):
        quantum_apriori(zeta, 1.0, 0.7)


def test_lt_lls_constant_density():
    rho0 = 0.9
    zeta = constant_field(rho0, dimension=3, shape=(2, 2, 2))
    lt, lls = lt_llsbound_rhs(zeta, eps=1.0 / 15.0, hbar=1.0)
    tf = C_TF * rho0 ** (5 / 3)
    assert lt == pytest.approx((1 - 1 / 15) * tf)
    assert lls == pytest.approx((1 + 1 / 15) * tf)
    assert lt <= tf <= lls / (1 + 1 / 15) + 1e-12


def test_lt_lls_mass_scaling():
    f1 = constant_field(1.0, dimension=3, shape=(2, 2, 2))
    f2 = constant_field(2.0, dimension=3, shape=(2, 2, 2))
    lt1, _ = lt_llsbound_rhs(f1, 0.05, 1.0)
    lt2, _ = lt_llsbound_rhs(f2, 0.05, 1.0)
    assert lt2 == pytest.approx(2.0 ** (5 / 3) * lt1)


# ---------------------------------------------------------------------------
# translation-averaged direct-term identity


def _bump_density(h=0.25):
    pts, ws = [], []
    for i in range(3):
        for j in range(3):
            for k in range(3):
                pts.append([(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h])
                ws.append(math.exp(-((i - 1) ** 2 + (j - 1) ** 2 +
                                     (k - 1) ** 2) / 2.0) * 0.05)
    return DiscreteDensity(np.array(pts), np.array(ws), cell_width=h)


def test_fourier_identity_constant_field():
    ell = 2.0
    f = PeriodicField(Lattice(np.eye(3) * ell), np.full((4, 4, 4), 1.3))
    rho = _bump_density()
    rep = fourier_direct_identity(f, rho, translations=2, kmax=4)
    assert rep.rel_gap <= 1e-6


def test_fourier_identity_zero_density():
    ell = 2.0
    f = PeriodicField(Lattice(np.eye(3) * ell), np.full((4, 4, 4), 1.0))
    rho = DiscreteDensity(np.zeros((0, 3)), np.zeros(0), cell_width=0.25)
    rep = fourier_direct_identity(f, rho, translations=2, kmax=2)
    assert rep.lhs == 0.0 and rep.rhs == 0.0


def test_fourier_identity_zero_mean_refinement():
    ell = 2.0
    n = 8
    x = (np.arange(n) + 0.5) * ell / n
    samples = np.tile(np.cos(2 * np.pi * x / ell)[:, None, None], (1, n, n))
    f = PeriodicField(Lattice(np.eye(3) * ell), samples, signed=True)
    rho = _bump_density()
    base = fourier_direct_identity(f, rho, translations=2, kmax=8)
    level2 = fourier_direct_identity(f, rho, translations=8, kmax=32)
    assert base.lhs > 0.0
    assert level2.rel_gap <= 1e-2  # matches within 1% at refinement level 2
    assert level2.rel_gap < base.rel_gap


def test_fourier_identity_gap_shrinks_with_refinement():
    ell = 2.0
    n = 8
    x = (np.arange(n) + 0.5) * ell / n
    gx = 1.0 + 0.6 * np.cos(2 * np.pi * x / ell)
    samples = np.einsum("i,j,k->ijk", gx, np.ones(n),
                        1.0 + 0.3 * np.sin(2 * np.pi * x / ell))
    f = PeriodicField(Lattice(np.eye(3) * ell), samples)
    rho = _bump_density()
    gaps = [fourier_direct_identity(f, rho, translations=t, kmax=k).rel_gap
            for t, k in [(2, 4), (4, 8), (8, 16)]]
    assert gaps[0] > gaps[1] > gaps[2]


# ---------------------------------------------------------------------------
# skeleton mean


def test_skeleton_mean_check_basic():
    rep = skeleton_mean_check(2.0, 1.0)
    assert rep["ok"]
    assert rep["closed_form"] == pytest.approx(7.0 / 8.0)


def test_skeleton_mean_formula_comparison():
    r1 = skeleton_mean_check(4.0, 2.0, cells_per_ell=48)
    r2 = skeleton_mean_check(4.0, 1.0, cells_per_ell=64)
    assert r1["closed_form"] == pytest.approx(1 - 0.5 ** 3)
    assert r2["closed_form"] == pytest.approx(1 - 0.75 ** 3)
    assert r1["ok"] and r2["ok"]
