import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergokit import GridDensity, from_trig, make_step, norm_report, zero_average_project
from ergokit.density import constant, from_csv, from_function, to_csv
from ergokit.trig import TrigPoly, cos_mode, sin_mode

from oracles import quad_01


def test_constant_norms():
    f = constant(1.0, 256)
    rep = norm_report(f)
    assert rep.l1 == 1.0 and rep.w11 == 1.0 and rep.sup == 1.0


def test_l1_of_sin_against_quadrature():
    f = from_trig(sin_mode(1), 1024)
    oracle = quad_01(lambda x: abs(math.sin(2 * math.pi * x)), points=[0.5])
    assert oracle == pytest.approx(2 / math.pi, abs=1e-12)
    assert f.l1_norm() == pytest.approx(oracle, abs=1e-4)


def test_w11_of_one_plus_cos():
    f = from_trig(TrigPoly(1.0, (), ((1, 1.0),)), 1024)
    dl1 = quad_01(lambda x: 2 * math.pi * abs(math.sin(2 * math.pi * x)), points=[0.5])
    assert f.w11_norm() == pytest.approx(1.0 + dl1, abs=1e-3)
    assert dl1 == pytest.approx(4.0, abs=1e-10)


def test_variation_of_reference_step():
    f, snapped, snap = make_step([0.5], [1.5, 0.5], 512)
    assert snap == 0.0
    assert f.variation() == pytest.approx(1.0, abs=1e-14)


def test_variation_constant_and_smooth():
    assert constant(3.0, 128, "interval").variation() == 0.0
    f = from_trig(sin_mode(1), 1024, "interval")
    oracle = quad_01(lambda x: 2 * math.pi * abs(math.cos(2 * math.pi * x)),
                     points=[0.25, 0.75])
    assert f.variation() == pytest.approx(oracle, abs=1e-2)
    assert oracle == pytest.approx(4.0, abs=1e-10)


def test_zero_average_projection_cases():
    f = constant(1.0, 128)
    assert np.all(zero_average_project(f).values == 0.0)
    g = from_trig(sin_mode(1), 256)
    assert np.max(np.abs(zero_average_project(g).values - g.values)) < 1e-14
    step, _, _ = make_step([0.5], [2.0, 0.0], 128)
    proj = zero_average_project(step)
    assert np.all(proj.values[:64] == 1.0) and np.all(proj.values[64:] == -1.0)


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_projection_idempotent(seed):
    rng = np.random.default_rng(seed)
    f = GridDensity(rng.normal(size=64), "circle")
    once = zero_average_project(f)
    twice = zero_average_project(once)
    assert np.max(np.abs(twice.values - once.values)) < 1e-15
    assert abs(once.integral()) < 1e-15


def test_norm_ordering_invariants():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = GridDensity(rng.normal(size=128), "circle")
        rep = norm_report(f)
        assert rep.w11 >= rep.l1
        assert rep.lip >= rep.sup
        assert rep.variation >= 0.0


def test_norm_stability_under_refinement():
    p = TrigPoly(1.0, ((1, 0.3), (3, 0.05)), ((2, 0.2),))
    reps = [norm_report(from_trig(p, n)) for n in (512, 1024)]
    for attr in ("l1", "w11", "sup", "lip"):
        assert abs(getattr(reps[0], attr) - getattr(reps[1], attr)) < 1e-3


def test_grid_variation_tracks_derivative_integral():
    # for smooth f the grid variation, the summed increments and int |f'|
    # agree to O(1/n)
    f = from_trig(cos_mode(2), 2048, "circle")
    inc = float(np.sum(np.abs(np.diff(f.values)))) + abs(f.values[0] - f.values[-1])
    assert f.variation() == inc
    oracle = quad_01(lambda x: 4 * math.pi * abs(math.sin(4 * math.pi * x)),
                     points=[0.25, 0.5, 0.75])
    assert f.variation() == pytest.approx(oracle, abs=3e-2)


def test_step_snapping_records_distance():
    f, snapped, snap = make_step([1 / 3], [1.0, 2.0], 64)
    assert snapped[0] == pytest.approx(21 / 64)
    assert snap == pytest.approx(abs(1 / 3 - 21 / 64))


def test_csv_round_trip(tmp_path):
    f = from_trig(TrigPoly(1.0, ((1, 0.5),), ()), 128)
    path = tmp_path / "density.csv"
    to_csv(f, path)
    g = from_csv(path)
    assert g.topology == "circle"
    assert np.max(np.abs(g.values - f.values)) < 1e-12


def test_eval_at_interpolation_modes():
    f = from_function(lambda y: np.asarray(y) ** 0, 64)      # analytic channel
    assert float(f.eval_at(0.123)) == 1.0
    g = GridDensity(np.linspace(0, 1, 64, endpoint=False), "circle")
    mid = float(g.eval_at(0.5 / 64))
    assert mid == pytest.approx(0.5 * (g.values[0] + g.values[1]))
