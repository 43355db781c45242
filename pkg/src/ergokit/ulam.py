"""Ulam discretization: exact transition matrices and sparse fixed vectors.

P_ij = m(T^{-1}(I_j) cap I_i) / m(I_i) over the uniform k-cell partition.
Entries come from exact branch-inverse interval intersections (never Monte
Carlo), densities evolve by v -> v P, and the fixed vector is found by power
iteration with a Cesaro fallback for oscillatory spectra.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import errors
from .density import CIRCLE, INTERVAL, GridDensity
from .maps import PiecewiseExpandingMap, SmoothCircleMap
from .transfer import apply_transfer

ROW_SUM_TOL = 1e-10


@dataclass
class UlamOperator:
    """Sparse row-stochastic transition matrix over a k-cell partition."""

    matrix: sparse.csr_matrix
    k: int
    topology: str = INTERVAL

    def __post_init__(self):
        self.mesh = 1.0 / self.k
        self._pt = None

    @property
    def transpose(self):
        if self._pt is None:
            self._pt = self.matrix.T.tocsr()
        return self._pt

    def row_sum_defect(self):
        return float(np.max(np.abs(self.matrix @ np.ones(self.k) - 1.0)))

    def act(self, masses):
        """Left action v -> v P on cell masses."""
        return self.transpose @ masses

    def to_csv(self, path):
        coo = self.matrix.tocoo()
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["i", "j", "value"])
            for i, j, v in zip(coo.row, coo.col, coo.data):
                w.writerow([int(i), int(j), f"{v:.17g}"])


@dataclass
class CellVector:
    """Masses per cell; density levels are masses * k."""

    masses: np.ndarray
    k: int
    iterations: int = 0
    residual: float = 0.0
    rate_estimate: float = field(default=float("nan"))
    used_cesaro: bool = False

    @property
    def levels(self):
        return self.masses * self.k

    def to_density(self, topology=INTERVAL):
        return GridDensity(self.levels, topology)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["cell", "mass", "level"])
            for i, m in enumerate(self.masses):
                w.writerow([i, f"{m:.17g}", f"{m * self.k:.17g}"])


def _division_points(mp, k):
    """Sorted points cutting [0,1] so each piece maps inside one target cell."""
    bounds = np.arange(k + 1) / k
    pts = [bounds]
    if isinstance(mp, SmoothCircleMap):
        ys, _ = mp.grid_preimages(bounds[:-1])
        pts.append(ys.ravel())
    else:
        pts.append(mp.breakpoints)
        for b in range(mp.n_branches):
            mask, y, _ = mp.branch_preimages(bounds, b)
            pts.append(y)
    allpts = np.sort(np.concatenate(pts))
    keep = np.concatenate([[True], np.diff(allpts) > 1e-14])
    out = allpts[keep]
    out[0], out[-1] = 0.0, 1.0
    return out


def build_ulam(mp, k):
    """Exact Ulam matrix for a circle or piecewise expanding map."""
    if k < 2:
        raise errors.DomainError("partition size k must be >= 2")
    pts = _division_points(mp, k)
    mids = 0.5 * (pts[:-1] + pts[1:])
    lengths = np.diff(pts)
    src = np.clip(np.floor(mids * k).astype(int), 0, k - 1)
    tvals = mp.value(mids)
    if isinstance(mp, SmoothCircleMap):
        tvals = np.mod(tvals, 1.0)
    tgt = np.clip(np.floor(tvals * k).astype(int), 0, k - 1)
    mat = sparse.coo_matrix((lengths * k, (src, tgt)), shape=(k, k)).tocsr()
    topology = CIRCLE if isinstance(mp, SmoothCircleMap) else INTERVAL
    op = UlamOperator(mat, k, topology)
    defect = op.row_sum_defect()
    if defect > ROW_SUM_TOL:
        raise errors.ConvergenceError(
            f"Ulam rows are not stochastic (defect {defect:.3e})", residual=defect)
    return op


def invariant_vector(op, tol=1e-12, max_iter=100_000):
    """Left fixed vector of P by power iteration with L1 normalization.

    Stalls with a period-2 residual pattern are folded by averaging
    consecutive iterates; the averaged sequence is the standard Cesaro
    construction for degenerate spectra.
    """
    k = op.k
    v = np.full(k, 1.0 / k)
    prev = None
    ratios = []
    used_cesaro = False
    r = np.inf
    for it in range(1, max_iter + 1):
        w = op.act(v)
        s = w.sum()
        if s > 0:
            w = w / s
        r_new = float(np.sum(np.abs(w - v)))
        if r_new < tol:
            rate = float(np.exp(np.mean(np.log(ratios[-8:])))) if len(ratios) >= 2 else float("nan")
            return CellVector(np.maximum(w, 0.0) / np.maximum(w, 0.0).sum(), k,
                              iterations=it, residual=r_new, rate_estimate=rate,
                              used_cesaro=used_cesaro)
        if prev is not None and np.sum(np.abs(w - prev)) < 1e-3 * r_new:
            # period-2 oscillation: average consecutive iterates
            w = 0.5 * (w + v)
            w = w / w.sum()
            used_cesaro = True
        if r_new > 0 and r > 0 and np.isfinite(r):
            ratios.append(min(r_new / r, 1.0))
        prev = v
        v = w
        r = r_new
    raise errors.ConvergenceError(
        f"power iteration did not converge in {max_iter} steps (residual {r:.3e}); "
        "the discretized chain may not be mixing", residual=r, iterations=max_iter)


def project_to_cells(f, k):
    """Conditional expectation onto the k-cell partition (cell averages)."""
    if f.n % k != 0:
        raise errors.GridMismatchError("fine grid must refine the cell partition")
    block = f.n // k
    levels = f.values.reshape(k, block).mean(axis=1)
    return CellVector(levels / k, k)


def cells_to_grid(vec, n, topology=INTERVAL):
    """Step density on the fine grid from cell levels."""
    if n % vec.k != 0:
        raise errors.GridMismatchError("fine grid must refine the cell partition")
    return GridDensity(np.repeat(vec.levels, n // vec.k), topology)


@dataclass(frozen=True)
class DefectReport:
    defect: float
    delta: float
    bv: float
    ratio: float | None


def ulam_defect(mp, f, k, ctx=None):
    """||Lf - L_delta f||_1 on the fine grid, plus the defect/(delta*Var) ratio."""
    from .transfer import TransferContext

    if ctx is None:
        ctx = TransferContext(mp, f.n)
    lf = apply_transfer(ctx, f)
    op = build_ulam(mp, k)
    pf = project_to_cells(f, k)
    ldelta = cells_to_grid(CellVector(op.act(pf.masses), k), f.n, f.topology)
    defect = float(np.mean(np.abs(lf.values - ldelta.values)))
    bv = f.variation() + f.l1_norm()
    ratio = defect / (op.mesh * bv) if bv > 1e-14 else None
    return DefectReport(defect, op.mesh, bv, ratio)


@dataclass
class LyCheckReport:
    lam: float
    big_b: float
    n_step: int
    margins: np.ndarray
    worst: float
    seed: int


def random_step_levels(k, rng, n_jumps=None):
    """Random nonnegative step density levels on k cells with a few jumps."""
    if n_jumps is None:
        n_jumps = int(rng.integers(4, 20))
    cuts = np.sort(rng.integers(1, k, size=n_jumps))
    levels = np.empty(k)
    vals = rng.uniform(0.0, 2.0, size=n_jumps + 1)
    edges = np.concatenate([[0], cuts, [k]])
    for s in range(len(vals)):
        levels[edges[s]:edges[s + 1]] = vals[s]
    return levels


def ulam_ly_check(op, mp, constants=None, trials=50, seed=0):
    """Check Var + L1 of the discretized operator against the map's BV constants.

    For maps whose constants require n_step iterates, the matrix is applied
    n_step times. Margins are RHS - LHS; all should be nonnegative.
    """
    from .lyverify import compute_bv_constants

    if constants is None:
        constants = compute_bv_constants(mp)
    lam, big_b, m = constants.alpha, constants.big_b, constants.n_step
    rng = np.random.default_rng(seed)
    margins = np.empty(trials)
    for t in range(trials):
        levels = random_step_levels(op.k, rng)
        masses = levels / op.k
        out = masses
        for _ in range(m):
            out = op.act(out)
        out_levels = out * op.k
        lhs = float(np.sum(np.abs(np.diff(out_levels)))) + float(np.mean(np.abs(out_levels)))
        var_phi = float(np.sum(np.abs(np.diff(levels))))
        l1_phi = float(np.mean(np.abs(levels)))
        rhs = lam * (var_phi + l1_phi) + big_b * l1_phi
        margins[t] = rhs - lhs
    return LyCheckReport(lam, big_b, m, margins, float(np.min(margins)), seed)


def refinement_gaps(mp, ks, **inv_kwargs):
    """L1 gaps ||h_{2k} - h_k||_1 along a doubling partition ladder."""
    hs = {k: invariant_vector(build_ulam(mp, k), **inv_kwargs) for k in ks}
    gaps = []
    for k, k2 in zip(ks[:-1], ks[1:]):
        if k2 % k != 0:
            raise errors.GridMismatchError("ladder entries must refine each other")
        coarse_on_fine = np.repeat(hs[k].levels, k2 // k)
        gaps.append(float(np.mean(np.abs(coarse_on_fine - hs[k2].levels))))
    return gaps, hs
