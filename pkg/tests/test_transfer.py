import math

import numpy as np
import pytest

from ergokit import (GridDensity, TransferContext, apply_transfer,
                     apply_transfer_derivative, duality_residual, from_trig,
                     keller_map, make_step, transfer_fixed_point)
from ergokit.density import constant, from_function
from ergokit.errors import DomainError, GridMismatchError
from ergokit.lyverify import compute_w11_constants, random_smooth_density
from ergokit.trig import TrigPoly, cos_mode

from oracles import mc_integral_g_of_T, quad_01


@pytest.fixture(scope="module")
def ctx2(doubling):
    return TransferContext(doubling, 4096)


@pytest.fixture(scope="module")
def ctx4(degree4_map):
    return TransferContext(degree4_map, 4096)


def test_lebesgue_invariant_for_doubling(ctx2):
    lf = apply_transfer(ctx2, constant(1.0, 4096))
    assert np.max(np.abs(lf.values - 1.0)) < 1e-13


def test_cos_annihilation_and_mode_halving(ctx2):
    lf = apply_transfer(ctx2, from_trig(cos_mode(1), 4096))
    assert np.max(np.abs(lf.values)) < 1e-12
    lf2 = apply_transfer(ctx2, from_trig(cos_mode(2), 4096))
    assert np.max(np.abs(lf2.values - np.cos(2 * np.pi * lf2.x))) < 1e-12


def test_grid_mismatch_rejected(ctx2):
    with pytest.raises(GridMismatchError):
        apply_transfer(ctx2, constant(1.0, 1024))


def test_positivity_and_integral_preservation(ctx4):
    rng = np.random.default_rng(5)
    for _ in range(100):
        f = random_smooth_density(rng, n=4096)
        lf = apply_transfer(ctx4, f)
        assert np.min(lf.values) >= -1e-14
        assert abs(lf.integral() - f.integral()) < 1e-6


def test_weak_contraction_smooth(ctx4):
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = TrigPoly(rng.normal(), ((1, rng.normal()), (3, rng.normal())), ())
        f = from_trig(p, 4096)
        assert apply_transfer(ctx4, f).l1_norm() <= f.l1_norm() + 1e-9


def test_weak_contraction_piecewise_steps(keller_ref):
    # jump quadrature costs O(Var/n), so the slack scales with the grid
    ctx = TransferContext(keller_ref, 4096)
    rng = np.random.default_rng(7)
    for _ in range(20):
        cuts = np.sort(rng.uniform(0.05, 0.95, size=4))
        f, _, _ = make_step(list(cuts), list(rng.uniform(0, 2, size=5)), 4096)
        assert apply_transfer(ctx, f).l1_norm() <= f.l1_norm() + 1e-3


def test_linearity(ctx4):
    # all three applications share the interpolation path
    rng = np.random.default_rng(8)
    f = GridDensity(random_smooth_density(rng, n=4096).values, "circle")
    g = GridDensity(random_smooth_density(rng, n=4096).values, "circle")
    a, b = 1.7, -0.4
    combo = GridDensity(a * f.values + b * g.values, "circle")
    lhs = apply_transfer(ctx4, combo).values
    rhs = a * apply_transfer(ctx4, f).values + b * apply_transfer(ctx4, g).values
    assert np.mean(np.abs(lhs - rhs)) < 1e-10


def test_transfer_derivative_trivial_and_formula(ctx2, ctx4):
    one = constant(1.0, 4096)
    d = apply_transfer_derivative(ctx2, one)
    assert np.max(np.abs(d.values)) < 1e-12
    # (Lf)' vs finite differences of apply_transfer for the degree-4 map
    lf = apply_transfer(ctx4, one)
    dlf = apply_transfer_derivative(ctx4, one)
    n = 4096
    fd = (np.roll(lf.values, -1) - np.roll(lf.values, 1)) * (n / 2.0)
    assert np.max(np.abs(dlf.values - fd)) < 1e-3


def test_transfer_derivative_rejects_piecewise(keller_ref):
    ctx = TransferContext(keller_ref, 1024)
    with pytest.raises(DomainError):
        apply_transfer_derivative(ctx, constant(1.0, 1024))


def test_transfer_derivative_sin_cancellation(ctx2):
    f = from_trig(TrigPoly(0.0, ((1, 1.0),), ()), 4096)
    d = apply_transfer_derivative(ctx2, f)
    assert np.max(np.abs(d.values)) < 1e-11


def test_duality_trivial(ctx2):
    one = constant(1.0, 4096)
    assert duality_residual(ctx2, one, one) < 1e-12


def test_duality_smooth(ctx2):
    f = from_trig(TrigPoly(1.0, (), ((1, 0.5),)), 4096)
    g = from_trig(cos_mode(1), 4096)
    assert duality_residual(ctx2, f, g) < 1e-6


def test_duality_keller_indicator_with_mc_oracle(keller_ref):
    n = 4096
    ctx = TransferContext(keller_ref, n)
    f = constant(1.0, n, "interval")
    g, _, _ = make_step([0.25, 0.75], [0.0, 1.0, 0.0], n)
    assert duality_residual(ctx, f, g) < 1e-3
    # cross-check the composed side against Monte Carlo
    quad = float(np.mean(np.asarray(g.eval_at(ctx.Tx)) * f.values))
    mc, se = mc_integral_g_of_T(
        lambda xs: keller_ref.value(np.clip(xs, 0, 1 - 1e-12)),
        lambda v: ((v >= 0.25) & (v < 0.75)).astype(float),
        lambda v: np.ones_like(v), 10 ** 6, seed=42)
    assert abs(quad - mc) < 4 * se + 1e-3


def test_fixed_point_cauchy_and_norm_bound(degree4_map):
    ctx = TransferContext(degree4_map, 4096)
    h, incs = transfer_fixed_point(ctx, tol=1e-6)
    assert all(b < a for a, b in zip(incs, incs[1:])) or incs[-1] < 1e-6
    c = compute_w11_constants(degree4_map)
    assert h.w11_norm() <= c.big_b + 0.05
