"""Quantitative stability and linear response of invariant densities.

Covers the delta*|log delta| continuity law for Ulam-computed fixed
densities, the Lipschitz bound through the resolvent identity
Delta h = (1 - L_delta)^{-1} (L_delta - L_0) h_0, the derivative operator of
a smooth map family, the response formula hhat = (1 - L_0)^{-1} Lhat h_0,
and the Keller-family discontinuity experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import errors
from .density import GridDensity
from .lyverify import random_smooth_density
from .maps import keller_map
from .stats import fit_geometric
from .transfer import TransferContext, apply_transfer, transfer_fixed_point
from .ulam import build_ulam, invariant_vector

DEFAULT_DELTAS = tuple(10.0 ** (-e) for e in (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0))


def derivative_operator(ctx0, eps, w):
    """Apply the derivative of delta -> L_delta at 0 along direction eps.

    Lhat w = -L0(w eps'/T') - L0(eps w'/T') + L0(eps T'' w / T'^2); the three
    integrands are evaluated at the cached preimages in one pass. The output
    integrates to zero up to grid error since every L_delta preserves mass.
    """
    if ctx0.topology != "circle":
        raise errors.DomainError("the derivative operator needs a smooth circle map")
    ctx0._check(w)
    deps = eps.deriv(1)
    out = np.zeros(ctx0.n)
    for br in ctx0._branches:
        y, t1, t2 = br["y"], br["t1"], br["t2"]
        wy = np.asarray(w.eval_at(y), dtype=float)
        wpy = np.asarray(w.deriv_at(y), dtype=float)
        num = -wy * deps(y) - eps(y) * wpy + eps(y) * t2 * wy / t1
        out[br["idx"]] += num / (t1 * br["absdT"])
    return GridDensity(out, "circle")


@dataclass
class ResolventResult:
    density: GridDensity
    n_terms: int
    residual: float


def resolvent_apply(ctx0, g, tol=1e-10, max_terms=10_000):
    """Neumann series (1 - L0)^{-1} g = sum L0^i g for zero-average g.

    Terms are added until the running term's L1 norm drops below tol; the
    series diverges off the zero-average space, so nonzero averages are
    rejected.
    """
    if abs(g.integral()) > 1e-8:
        raise errors.DomainError("resolvent input must have zero average")
    total = g.values.copy()
    term = g
    n_terms = 0
    while term.l1_norm() >= tol:
        term = apply_transfer(ctx0, term)
        total = total + term.values
        n_terms += 1
        if n_terms > max_terms:
            raise errors.ConvergenceError(
                "Neumann series did not reach tolerance; insufficient mixing "
                "at this grid size", residual=term.l1_norm(), iterations=n_terms)
    return ResolventResult(GridDensity(total, ctx0.topology), n_terms, term.l1_norm())


@dataclass
class ResponseResult:
    response_density: GridDensity
    neumann_terms: int
    truncation_residual: float
    deltas: np.ndarray
    fd_errors: np.ndarray
    floor_limited: bool
    h_zero: GridDensity
    zero_mean_defect: float
    fd_errors_centered: np.ndarray | None = None


def linear_response(family, n=4096, tol=1e-8, deltas=DEFAULT_DELTAS, two_sided=False):
    """Response density hhat and finite-difference validation along a delta ladder.

    h_delta is computed by direct transfer iteration at the same grid (not
    Ulam) so the O(delta) response signal is not polluted by Ulam bias.
    fd_errors should decrease until the grid floor; the last rungs are
    flagged when floor-limited.
    """
    ctx0 = TransferContext(family.map_at(0.0), n)
    h0, _ = transfer_fixed_point(ctx0, tol=tol / 10.0)
    lhat = derivative_operator(ctx0, family.direction, h0)
    zero_mean_defect = abs(lhat.integral())
    lhat = lhat.zero_average()
    res = resolvent_apply(ctx0, lhat, tol=tol)
    hhat = res.density

    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    fd_errors = np.empty(deltas.size)
    centered = np.empty(deltas.size) if two_sided else None
    for i, d in enumerate(deltas):
        ctx_d = TransferContext(family.map_at(d), n)
        h_d, _ = transfer_fixed_point(ctx_d, tol=tol / 10.0)
        fd = (h_d.values - h0.values) / d
        fd_errors[i] = float(np.mean(np.abs(fd - hhat.values)))
        if two_sided:
            ctx_m = TransferContext(family.map_at(-d), n)
            h_m, _ = transfer_fixed_point(ctx_m, tol=tol / 10.0)
            fd2 = (h_d.values - h_m.values) / (2.0 * d)
            centered[i] = float(np.mean(np.abs(fd2 - hhat.values)))
    floor_limited = bool(np.any(np.diff(fd_errors) > 0))
    return ResponseResult(hhat, res.n_terms, res.residual, deltas, fd_errors,
                          floor_limited, h0, zero_mean_defect, centered)


@dataclass
class StabilityCurve:
    deltas: np.ndarray
    gaps: np.ndarray
    coef_dlogd: float
    coef_linear: float
    fit_residual: float
    max_gap: float
    uf2_ratios: np.ndarray = field(repr=False, default=None)
    uf2_spread: float = float("nan")


def fit_dlogd(deltas, gaps):
    """Least squares for gap ~ c1 * delta |log delta| + c2 * delta."""
    A = np.column_stack([deltas * np.abs(np.log(deltas)), deltas])
    coef, *_ = np.linalg.lstsq(A, gaps, rcond=None)
    resid = A @ coef - gaps
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(resid)))


def stability_curve(family, deltas=None, k=2 ** 14, n_probes=20, probe_grid=4096, seed=0):
    """Ulam invariant-density gaps along a delta ladder with a d|log d| + d fit.

    Also measures the strong-to-weak perturbation defect
    ||(L_delta - L_0) f||_1 / (delta ||f||_W11) on random smooth probes, which
    stays bounded across the ladder for families of this kind.
    """
    if deltas is None:
        deltas = 2.0 ** -np.arange(3, 11)
    deltas = np.asarray(deltas, dtype=float)
    h0 = invariant_vector(build_ulam(family.map_at(0.0), k))
    gaps = np.empty(deltas.size)
    for i, d in enumerate(deltas):
        h_d = invariant_vector(build_ulam(family.map_at(d), k))
        gaps[i] = float(np.mean(np.abs(h_d.levels - h0.levels)))
    c1, c2, resid = fit_dlogd(deltas, gaps)

    rng = np.random.default_rng(seed)
    ctx0 = TransferContext(family.map_at(0.0), probe_grid)
    probes = [random_smooth_density(rng, n=probe_grid) for _ in range(n_probes)]
    ratios = np.empty((deltas.size, n_probes))
    for i, d in enumerate(deltas):
        ctx_d = TransferContext(family.map_at(d), probe_grid)
        for j, f in enumerate(probes):
            diff = apply_transfer(ctx_d, f).values - apply_transfer(ctx0, f).values
            ratios[i, j] = float(np.mean(np.abs(diff))) / (d * f.w11_norm())
    # boundedness in delta, probe by probe: worst deviation from the
    # per-probe median ratio across the ladder
    med = np.median(ratios, axis=0)
    spread = float(np.max(np.maximum(ratios / med, med / np.maximum(ratios, 1e-300))))
    return StabilityCurve(deltas, gaps, c1, c2, resid, float(np.max(gaps)),
                          ratios, spread)


@dataclass
class LipschitzReport:
    deltas: np.ndarray
    ratios_w11: np.ndarray
    ratios_l1: np.ndarray
    formula_gap_rel: float


def lipschitz_stability(family, deltas=None, n=4096, tol=1e-9, formula_delta=1e-3):
    """Strong-norm difference quotients ||h_delta - h_0||_W11 / delta.

    Bounded ratios witness Lipschitz dependence. At formula_delta the direct
    gap is also compared with the resolvent formula
    (1 - L_delta)^{-1} (L_delta - L_0) h_0 computed by Neumann series.
    """
    if deltas is None:
        deltas = np.asarray([1e-1, 1e-2, 1e-3])
    deltas = np.asarray(deltas, dtype=float)
    ctx0 = TransferContext(family.map_at(0.0), n)
    h0, _ = transfer_fixed_point(ctx0, tol=tol)
    ratios_w11 = np.empty(deltas.size)
    ratios_l1 = np.empty(deltas.size)
    formula_gap = float("nan")
    for i, d in enumerate(deltas):
        ctx_d = TransferContext(family.map_at(d), n)
        h_d, _ = transfer_fixed_point(ctx_d, tol=tol)
        diff = GridDensity(h_d.values - h0.values, ctx0.topology)
        ratios_w11[i] = diff.w11_norm() / d
        ratios_l1[i] = diff.l1_norm() / d
        if abs(d - formula_delta) < 1e-15:
            pert = apply_transfer(ctx_d, h0).values - apply_transfer(ctx0, h0).values
            rhs = GridDensity(pert - pert.mean(), ctx0.topology)
            formula = resolvent_apply(ctx_d, rhs, tol=tol).density
            num = float(np.mean(np.abs(formula.values - diff.values)))
            den = max(diff.l1_norm(), 1e-300)
            formula_gap = num / den
    return LipschitzReport(deltas, ratios_w11, ratios_l1, formula_gap)


@dataclass
class KellerRecord:
    a: float
    b: float
    r: float
    window_mass: float
    dist_step_three_half: float
    dist_step_two: float
    iterations: int
    used_cesaro: bool


def default_keller_path(rungs=range(3, 9)):
    """Parameter ladder heading to (1/2, 1/2, 1/4) inside the trap regime
    1/2 < b <= 1 - 2r (here b = 1 - 2r exactly)."""
    path = []
    for m in rungs:
        b = 0.5 + 2.0 ** -m
        r = 0.25 - 2.0 ** -(m + 1)
        a = 0.5 + 2.0 ** -m
        path.append((a, b, r))
    return path


def _window_mass(vec, lo, hi):
    k = vec.k
    edges = np.arange(k + 1) / k
    overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)
    return float(np.sum(vec.levels * overlap))


def reference_step_levels(k, kind):
    """The two limit densities: 3/2 on [0,1/2) plus 1/2 on [1/2,1], or 2 on [0,1/2)."""
    half = k // 2
    levels = np.empty(k)
    if kind == "three_half":
        levels[:half], levels[half:] = 1.5, 0.5
    elif kind == "two":
        levels[:half], levels[half:] = 2.0, 0.0
    else:
        raise errors.DomainError(f"unknown reference {kind!r}")
    return levels


def keller_experiment(path=None, k=2 ** 13, inv_tol=1e-12):
    """Invariant vectors along a Keller parameter path.

    Reports the invariant mass inside the shrinking window [1-b, b] (heads to
    1, witnessing weak-* concentration at 1/2) and the L1 distance to the two
    reference step densities (stays large, witnessing L1 discontinuity).
    """
    if path is None:
        path = default_keller_path()
    ref32 = reference_step_levels(k, "three_half")
    ref2 = reference_step_levels(k, "two")
    records = []
    for a, b, r in path:
        if not 0.5 < b <= 1.0 - 2.0 * r + 1e-12:
            raise errors.DomainError(f"(a,b,r)=({a},{b},{r}) outside the trap regime")
        vec = invariant_vector(build_ulam(keller_map(a, b, r), k), tol=inv_tol)
        records.append(KellerRecord(
            a, b, r,
            _window_mass(vec, 1.0 - b, b),
            float(np.mean(np.abs(vec.levels - ref32))),
            float(np.mean(np.abs(vec.levels - ref2))),
            vec.iterations, vec.used_cesaro,
        ))
    return records
