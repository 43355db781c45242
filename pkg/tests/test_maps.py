import math

import numpy as np
import pytest
import sympy

from ergokit import (PerturbationFamily, PiecewiseExpandingMap, SmoothCircleMap,
                     SolenoidMap, AffineFiber, TrigPoly, keller_map, wrap01)
from ergokit.errors import DomainError
from ergokit.maps import KellerParams, LinearBranch
from ergokit.trig import default_direction

from oracles import forward_scan_preimages


def test_doubling_eval():
    m = SmoothCircleMap(2)
    assert m.value(0.3) == pytest.approx(0.6, abs=1e-15)


def test_keller_branch_formula():
    w = keller_map(1.0, 0.5, 0.25)
    # a (1 - x/r) on the first branch
    assert w.value(np.array([0.125]))[0] == pytest.approx(0.5, abs=1e-15)


def test_degree4_value_and_derivative_against_symbolic():
    m = SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ()))
    x = sympy.symbols("x")
    expr = 4 * x + sympy.Rational(1, 100) * sympy.sin(8 * sympy.pi * x)
    d1 = sympy.lambdify(x, sympy.diff(expr, x))
    d2 = sympy.lambdify(x, sympy.diff(expr, x, 2))
    assert m.value(0.0) == pytest.approx(0.0, abs=1e-15)
    assert m.deriv(0.0, 1) == pytest.approx(4 + 0.08 * math.pi, abs=1e-12)
    for pt in (0.0, 0.1, 0.37, 0.81):
        assert m.deriv(pt, 1) == pytest.approx(d1(pt), abs=1e-12)
        assert m.deriv(pt, 2) == pytest.approx(d2(pt), abs=1e-10)


def test_degree_consistency_of_lift():
    m = SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ()))
    xs = np.linspace(0.0, 1.0, 100)
    assert np.allclose(m.lift(xs + 1.0) - m.lift(xs), 4.0, atol=1e-12)


def test_expansivity_rejected():
    with pytest.raises(DomainError):
        SmoothCircleMap(2, TrigPoly(0.0, ((1, 0.5),), ()))  # T' dips below 1


def test_branch_inverses_doubling():
    m = SmoothCircleMap(2)
    assert m.branch_inverses(0.5) == [(0.25, 2.0), (0.75, 2.0)]


def test_branch_inverses_residuals_degree4():
    m = SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ()))
    pairs = m.branch_inverses(0.1)
    assert len(pairs) == 4
    for y, dt in pairs:
        assert abs(m.value(y) - 0.1) < 1e-12
        assert dt == pytest.approx(abs(m.deriv(y, 1)), abs=1e-14)


def test_branch_inverses_keller_vs_forward_scan():
    w = keller_map(1.0, 0.5, 0.25)
    pairs = w.branch_inverses(0.25)
    scan = forward_scan_preimages(lambda xs: w.value(np.clip(xs, 0, 1 - 1e-12)), 0.25)
    assert len(pairs) == len(scan) == 4
    for (y, _), r in zip(pairs, scan):
        assert abs(y - r) < 1e-5


def test_preimage_multiset_property():
    maps = [SmoothCircleMap(3), SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ())),
            keller_map(1.0, 0.5, 0.24)]
    rng = np.random.default_rng(0)
    for m in maps:
        for x in rng.uniform(0.0, 1.0, 25):
            for y, _ in m.branch_inverses(float(x)):
                img = float(np.atleast_1d(m.value(np.array([y])))[0])
                assert min(abs(img - x), 1 - abs(img - x)) < 1e-10


def test_first_derivative_matches_finite_differences():
    m = SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ()))
    h = 1e-5
    for x in (0.12, 0.31, 0.72):
        fd = (m.lift(x + h) - m.lift(x - h)) / (2 * h)
        assert abs(m.deriv(x, 1) - fd) / abs(fd) < 1e-6
    w = keller_map(1.0, 0.5, 0.24)
    for x in (0.1, 0.3, 0.6, 0.9):  # away from breakpoints
        fd = (w.value(np.array([x + h]))[0] - w.value(np.array([x - h]))[0]) / (2 * h)
        assert abs(w.deriv(np.array([x]), 1)[0] - fd) / abs(fd) < 1e-6


def test_keller_params_validation():
    with pytest.raises(DomainError):
        KellerParams(1.0, 0.5, 0.6)       # r >= 1/2
    with pytest.raises(DomainError):
        KellerParams(0.1, 0.5, 0.25)      # slope a/r < 1


def test_keller_trap_interval_maps_into_itself():
    # for b in (1/2, 1-2r] the window [1-b, b] is forward invariant
    a, b, r = 0.53125, 0.53125, 0.234375
    w = keller_map(a, b, r)
    xs = np.linspace(1 - b, b, 500, endpoint=False)
    vals = w.value(xs)
    assert np.all(vals >= 1 - b - 1e-12) and np.all(vals <= b + 1e-12)


def test_eval_outside_domain_raises():
    w = keller_map(1.0, 0.5, 0.25)
    with pytest.raises(DomainError):
        w.value(np.array([1.0]))
    with pytest.raises(DomainError):
        w.branch_inverses(-0.1)


def test_breakpoint_ownership_is_left_inclusive():
    w = keller_map(1.0, 0.5, 0.25)
    # x = r evaluates on the second branch: W(r) = 0
    assert w.value(np.array([0.25]))[0] == pytest.approx(0.0, abs=1e-15)


def test_wrap01_canonicalization():
    assert wrap01(1.0) == 0.0
    assert wrap01(-0.25) == 0.75
    assert 0.0 <= wrap01(-1e-18) < 1.0


def test_perturbation_family_at_zero_and_fd():
    base = SmoothCircleMap(2)
    fam = PerturbationFamily(base, default_direction())
    xs = np.linspace(0, 1, 64, endpoint=False)
    assert np.array_equal(fam.map_at(0.0).value(xs), base.value(xs))
    eps = fam.direction(xs)
    # the family is exactly linear in delta, so every rung sits at roundoff
    for d in (1e-2, 1e-3, 1e-4):
        fd = (fam.map_at(d).lift(xs) - base.lift(xs)) / d
        assert np.max(np.abs(fd - eps)) < 1e-10
    assert fam.c2_bound >= 1.0  # ||eps||_C2 >= sup|eps'| = 1


def test_circle_as_piecewise_round_trip():
    m = SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ()))
    pw = m.as_piecewise()
    assert pw.n_branches == 4
    xs = np.linspace(0.01, 0.99, 173)
    assert np.allclose(pw.value(xs), m.value(xs), atol=1e-12)


def test_iterate_composition_matches_pointwise():
    w = keller_map(1.0, 0.5, 0.25)
    w2 = w.iterate(2)
    xs = np.linspace(0.001, 0.999, 211)
    direct = w.value(np.minimum(w.value(xs), 1 - 1e-15))
    assert np.allclose(w2.value(xs), direct, atol=1e-9)
    assert w2.min_slope() == pytest.approx(4.0, rel=1e-9)


def test_solenoid_contraction_validation():
    base = SmoothCircleMap(2)
    SolenoidMap(base, AffineFiber(1 / 3, x_coeff=0.1))
    with pytest.raises(DomainError):
        AffineFiber(1.2)
    with pytest.raises(DomainError):
        AffineFiber(0.5, offset=0.9)  # image leaves [0, 1]


def test_linear_branch_monotonicity_validation():
    with pytest.raises(DomainError):
        PiecewiseExpandingMap(np.array([0.0, 0.5, 1.0]),
                              [LinearBranch(0.0, 0.5, 0.0, 0.4),   # slope < 1
                               LinearBranch(0.5, 1.0, 0.0, 1.0)])
