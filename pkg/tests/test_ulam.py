import numpy as np
import pytest

from ergokit import (TransferContext, apply_transfer, build_ulam, from_trig,
                     invariant_vector, keller_map, make_step, project_to_cells,
                     transfer_fixed_point, ulam_defect, ulam_ly_check)
from ergokit.density import constant
from ergokit.errors import ConvergenceError, DomainError
from ergokit.lyverify import compute_bv_constants
from ergokit.trig import TrigPoly
from ergokit.ulam import CellVector, UlamOperator, cells_to_grid, refinement_gaps

from scipy import sparse


def test_doubling_k2_matrix(doubling):
    mat = build_ulam(doubling, 2).matrix.toarray()
    assert np.allclose(mat, 0.5 * np.ones((2, 2)), atol=1e-12)


def test_doubling_k4_matrix(doubling):
    mat = build_ulam(doubling, 4).matrix.toarray()
    expected = np.array([
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.0, 0.5, 0.5],
        [0.5, 0.5, 0.0, 0.0],
        [0.0, 0.0, 0.5, 0.5],
    ])
    assert np.allclose(mat, expected, atol=1e-12)
    # spot check P_11 = m(T^{-1}([0,1/4)) cap [0,1/4)) / (1/4) = (1/8)/(1/4)
    assert mat[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_rejects_trivial_partitions(doubling):
    for k in (0, 1):
        with pytest.raises(DomainError):
            build_ulam(doubling, k)


def test_keller_row_sums_and_mirror_symmetry():
    op = build_ulam(keller_map(1.0, 0.5, 0.25), 8)
    assert op.row_sum_defect() < 1e-10
    mat = op.matrix.toarray()
    # W(1-x) = W(x): mirrored source cells have identical rows
    assert np.allclose(mat, mat[::-1, :], atol=1e-10)


def test_invariant_vector_doubling_uniform(doubling):
    v = invariant_vector(build_ulam(doubling, 4))
    assert np.allclose(v.masses, 0.25, atol=1e-12)


def test_invariant_degree4_agrees_with_transfer_iteration(degree4_map):
    k = 2 ** 14
    vec = invariant_vector(build_ulam(degree4_map, k))
    ctx = TransferContext(degree4_map, k)
    h, _ = transfer_fixed_point(ctx, tol=1e-10)
    assert np.mean(np.abs(vec.levels - h.values)) < 1e-2
    # near-flat invariant density; first-order size is 0.02 pi
    assert np.max(np.abs(vec.levels - 1.0)) < 0.1


def test_invariant_keller_reference_step(keller_ref):
    k = 2 ** 12
    vec = invariant_vector(build_ulam(keller_ref, k))
    ref = np.where(np.arange(k) < k // 2, 1.5, 0.5)
    assert np.mean(np.abs(vec.levels - ref)) < 0.05


def test_nonconvergence_reports_residual():
    # two nearly-disconnected states mix too slowly for the iteration budget
    p = 1e-9
    mat = sparse.csr_matrix(np.array([[1 - p, p], [p, 1 - p]]))
    op = UlamOperator(mat, 2)
    with pytest.raises(ConvergenceError) as exc:
        invariant_vector(op, tol=1e-14, max_iter=50)
    assert exc.value.residual is not None


def test_cesaro_fallback_on_period_two_chain():
    mat = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    op = UlamOperator(mat, 2)
    v0 = np.array([0.9, 0.1])
    # start the iteration off-uniform by pre-multiplying the operator once
    out = invariant_vector(op, max_iter=5000)
    assert np.allclose(out.masses, 0.5, atol=1e-9)


def test_ulam_weak_contraction_signed():
    op = build_ulam(keller_map(1.0, 0.5, 0.24), 256)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=256)
        assert np.sum(np.abs(op.act(v))) <= np.sum(np.abs(v)) + 1e-12


def test_projection_contracts_l1_within_bv_bound(keller_ref):
    n, k = 4096, 128
    rng = np.random.default_rng(1)
    cuts = np.sort(rng.uniform(0.1, 0.9, size=3))
    f, _, _ = make_step(list(cuts), list(rng.uniform(0, 2, size=4)), n)
    pf = cells_to_grid(project_to_cells(f, k), n, "interval")
    assert np.mean(np.abs(pf.values - f.values)) <= (f.variation() + f.l1_norm()) / k
    g = from_trig(TrigPoly(1.0, ((2, 0.3),), ()), n, "interval")
    pg = cells_to_grid(project_to_cells(g, k), n, "interval")
    assert np.mean(np.abs(pg.values - g.values)) <= (g.variation() + g.l1_norm()) / k


def test_defect_zero_for_invariant_uniform(doubling):
    f = constant(1.0, 4096)
    rep = ulam_defect(doubling, f, 64)
    assert rep.defect < 1e-10


def test_defect_halves_with_k(degree4_map):
    f = from_trig(TrigPoly(1.0, (), ((1, 0.5),)), 4096)
    d256 = ulam_defect(degree4_map, f, 256).defect
    d512 = ulam_defect(degree4_map, f, 512).defect
    assert d512 == pytest.approx(d256 / 2, rel=0.25)


def test_defect_ratio_stable_for_keller_steps(keller_ref):
    f, _, _ = make_step([0.3, 0.7], [1.5, 0.2, 1.3], 4096)
    ratios = [ulam_defect(keller_ref, f, k).ratio for k in (128, 256, 512)]
    assert max(ratios) <= 2 * min(ratios)


def test_ly_check_trivial_density(keller_ref):
    op = build_ulam(keller_ref, 512)
    constants = compute_bv_constants(keller_ref)
    lam, b = constants.alpha, constants.big_b
    masses = np.full(512, 1.0 / 512)
    out = masses
    for _ in range(constants.n_step):
        out = op.act(out)
    lhs = np.sum(np.abs(np.diff(out * 512))) + 1.0
    assert lhs <= lam * 1.0 + b * 1.0 + 1e-12


def test_ly_check_batteries(keller_ref, degree4_map):
    repk = ulam_ly_check(build_ulam(keller_ref, 1024), keller_ref, trials=50, seed=3)
    assert repk.worst >= 0.0
    pw = degree4_map.as_piecewise()
    rep4 = ulam_ly_check(build_ulam(pw, 1024), pw, trials=50, seed=4)
    assert rep4.worst >= 0.0


def test_refinement_gaps_decrease(degree4_map, keller_ref):
    for mp in (degree4_map, keller_ref):
        ks = [2 ** e for e in range(8, 15, 2)]
        gaps, _ = refinement_gaps(mp, ks)
        assert all(b <= a * 1.05 for a, b in zip(gaps, gaps[1:]))


def test_matrix_and_vector_csv_export(tmp_path, doubling):
    op = build_ulam(doubling, 4)
    op.to_csv(tmp_path / "mat.csv")
    vec = invariant_vector(op)
    vec.to_csv(tmp_path / "vec.csv")
    lines = (tmp_path / "mat.csv").read_text().strip().splitlines()
    assert lines[0] == "i,j,value" and len(lines) == 9
    assert (tmp_path / "vec.csv").read_text().startswith("cell,mass,level")
