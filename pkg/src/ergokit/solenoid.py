"""Disintegrated measures for contracted-fiber skew products.

A measure is stored as one discrete signed leaf measure per base cell; the
leaf ALREADY carries the marginal weight (it is the restriction of the
measure to the fiber over that cell, not a conditional probability). The
fiber is the interval [0, 1]: the contraction inequalities in play only use
the fiber contraction rate, and on the line the dual Lipschitz program has a
chain structure solvable exactly.

The leafwise weak norm is W10(m) = sup { int g dm : |g| <= 1, Lip(g) <= 1 },
computed exactly by dynamic programming over concave piecewise-linear value
functions (a sliding-window max preserves concavity, so each atom adds at
most two breakpoints).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .stats import fit_geometric

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-14
ATOM_CAP = 10_000
BIN_RES = 2.0 ** -20


@dataclass(frozen=True)
class DiscreteLeafMeasure:
    """Signed atomic measure on the fiber [0, 1]; support strictly increasing."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if s.shape != w.shape or s.ndim != 1:
            raise errors.DomainError("support and weights must be matching 1-d arrays")
        if s.size > 1 and np.any(np.diff(s) <= 0):
            raise errors.DomainError("support must be strictly increasing")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(w))):
            raise errors.DomainError("support and weights must be finite")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self):
        return self.support.size

    @property
    def total(self):
        return float(np.sum(self.weights))

    @property
    def is_empty(self):
        return self.support.size == 0

    def scaled(self, c):
        return DiscreteLeafMeasure(self.support, self.weights * c)


EMPTY_LEAF = DiscreteLeafMeasure(np.empty(0), np.empty(0))


def leaf_from_atoms(positions, weights, merge_tol=MERGE_TOL, weight_tol=WEIGHT_TOL):
    """Sort atoms, merge clusters closer than merge_tol, drop negligible weights."""
    pos = np.asarray(positions, dtype=float)
    wts = np.asarray(weights, dtype=float)
    if pos.size == 0:
        return EMPTY_LEAF
    order = np.argsort(pos, kind="stable")
    pos, wts = pos[order], wts[order]
    cluster = np.concatenate([[0], np.cumsum(np.diff(pos) > merge_tol)])
    n_clusters = int(cluster[-1]) + 1
    merged_w = np.zeros(n_clusters)
    np.add.at(merged_w, cluster, wts)
    merged_p = np.zeros(n_clusters)
    np.add.at(merged_p, cluster, pos * np.abs(wts))
    mass = np.zeros(n_clusters)
    np.add.at(mass, cluster, np.abs(wts))
    first = np.zeros(n_clusters)
    first[cluster[::-1]] = pos[::-1]  # fallback representative: first position
    with np.errstate(invalid="ignore"):
        centers = np.where(mass > 0, merged_p / np.where(mass > 0, mass, 1.0), first)
    keep = np.abs(merged_w) >= weight_tol
    return DiscreteLeafMeasure(centers[keep], merged_w[keep])


# ---------------------------------------------------------------------------
# exact W10 by concave-envelope dynamic programming


def _window_max(xs, vs, d):
    """Sliding-window max over [g-d, g+d] of a concave piecewise-linear
    function on [-1, 1]; concave again, with a flat top."""
    vstar = float(np.max(vs))
    at_max = np.nonzero(vs >= vstar - 1e-13 * (1.0 + abs(vstar)))[0]
    mlo, mhi = xs[at_max[0]], xs[at_max[-1]]
    left_cut, right_cut = mlo - d, mhi + d
    pts, vals = [], []
    if left_cut > -1.0:
        pts.append(-1.0)
        vals.append(float(np.interp(-1.0 + d, xs, vs)))
        inner = (xs > -1.0 + d) & (xs < mlo)
        pts.extend(xs[inner] - d)
        vals.extend(vs[inner])
    pts.append(max(left_cut, -1.0))
    vals.append(vstar)
    pts.append(min(right_cut, 1.0))
    vals.append(vstar)
    if right_cut < 1.0:
        inner = (xs > mhi) & (xs < 1.0 - d)
        pts.extend(xs[inner] + d)
        vals.extend(vs[inner])
        pts.append(1.0)
        vals.append(float(np.interp(1.0 - d, xs, vs)))
    pts = np.asarray(pts)
    vals = np.asarray(vals)
    order = np.argsort(pts, kind="stable")
    pts, vals = pts[order], vals[order]
    keep = np.concatenate([[True], np.diff(pts) > 1e-18])
    return pts[keep], vals[keep]


def w10_norm(m: DiscreteLeafMeasure):
    """Exact optimum of max sum w_i g_i s.t. |g_i| <= 1, |g_{i+1}-g_i| <= gap_i.

    Adjacent-gap constraints suffice on the line. The optimum over prefixes
    ending at a given g value is concave piecewise linear in g; each atom
    contributes a sliding-window max (inf-convolution with a box) followed by
    a linear term, both of which preserve concavity and at most two
    breakpoints.
    """
    if m.is_empty:
        return 0.0
    xs = np.array([-1.0, 1.0])
    vs = m.weights[0] * xs
    for i in range(1, m.n_atoms):
        d = m.support[i] - m.support[i - 1]
        xs, vs = _window_max(xs, vs, d)
        vs = vs + m.weights[i] * xs
    return float(np.max(vs))


# ---------------------------------------------------------------------------
# leaf pushforward


def push_leaf(fiber_map, m: DiscreteLeafMeasure, alpha):
    """Push atoms through a fiber contraction; weights carried, coincident
    images merged. The declared rate alpha is verified on the support."""
    if m.is_empty:
        return m
    pos = np.asarray(fiber_map(m.support), dtype=float)
    if m.n_atoms > 1:
        order = np.argsort(m.support)
        gaps_in = np.diff(m.support[order])
        gaps_out = np.abs(np.diff(pos[order]))
        if np.any(gaps_out > alpha * gaps_in + 1e-9):
            raise errors.DomainError("fiber map violates the declared contraction rate")
    return leaf_from_atoms(pos, m.weights)


# ---------------------------------------------------------------------------
# disintegrated measures over k base cells


@dataclass
class SolenoidMeasure:
    """k base cells; leaves[i] is the restriction over cell i (marginal-weighted)."""

    k: int
    leaves: list = field(repr=False)

    def __post_init__(self):
        if len(self.leaves) != self.k:
            raise errors.DomainError("need exactly one leaf per cell")

    @property
    def marginal(self):
        """Marginal density values per cell (= leaf totals)."""
        return np.array([leaf.total for leaf in self.leaves])

    @property
    def total_mass(self):
        return float(np.mean(self.marginal))

    def marginal_l1(self):
        return float(np.mean(np.abs(self.marginal)))

    def scaled(self, c):
        return SolenoidMeasure(self.k, [leaf.scaled(c) for leaf in self.leaves])

    def sub(self, other):
        if other.k != self.k:
            raise errors.GridMismatchError("cell counts differ")
        out = []
        for a, b in zip(self.leaves, other.leaves):
            out.append(leaf_from_atoms(
                np.concatenate([a.support, b.support]),
                np.concatenate([a.weights, -b.weights]),
                merge_tol=1e-15))
        return SolenoidMeasure(self.k, out)

    def pruned(self, cap=ATOM_CAP, bin_res=BIN_RES):
        out = []
        for leaf in self.leaves:
            res = bin_res
            while leaf.n_atoms > cap:
                # weight-preserving binning, coarsened until under the cap
                binned = np.round(leaf.support / res) * res
                leaf = leaf_from_atoms(binned, leaf.weights, merge_tol=res / 4)
                res *= 2.0
            out.append(leaf)
        return SolenoidMeasure(self.k, out)

    def to_json(self):
        return json.dumps({
            "k": self.k,
            "marginal": [float(v) for v in self.marginal],
            "leaves": [{"support": [float(s) for s in leaf.support],
                        "weights": [float(w) for w in leaf.weights]}
                       for leaf in self.leaves],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        leaves = [DiscreteLeafMeasure(np.asarray(L["support"], dtype=float),
                                      np.asarray(L["weights"], dtype=float))
                  for L in d["leaves"]]
        return cls(int(d["k"]), leaves)


def uniform_atoms(k, y, weight=1.0):
    """Uniform marginal with a single atom of the given weight at y per leaf."""
    leaf = DiscreteLeafMeasure(np.array([float(y)]), np.array([float(weight)]))
    return SolenoidMeasure(k, [leaf] * k)


def zero_measure(k):
    return SolenoidMeasure(k, [EMPTY_LEAF] * k)


def one_norm(mu: SolenoidMeasure):
    """(1/k) sum over cells of the leaf W10 norm."""
    return float(np.mean([w10_norm(leaf) for leaf in mu.leaves]))


def apply_solenoid_transfer(F, mu: SolenoidMeasure, cap=ATOM_CAP):
    """One transfer step of the skew product on a disintegrated measure.

    The output leaf over cell center gamma collects, for every base branch
    inverse y of gamma, the source leaf of the cell containing y pushed
    through the fiber map at y, weighted by 1/|T'(y)|.
    """
    k = mu.k
    centers = (np.arange(k) + 0.5) / k
    ys, dts = F.base.grid_preimages(centers)
    out = []
    for j in range(k):
        positions = []
        weights = []
        for b in range(F.base.degree):
            y = float(ys[b, j])
            src = mu.leaves[min(int(y * k), k - 1)]
            if src.is_empty:
                continue
            pushed = push_leaf(lambda t, y=y: F.fiber(y, t), src, F.alpha)
            positions.append(pushed.support)
            weights.append(pushed.weights / float(dts[b, j]))
        if positions:
            out.append(leaf_from_atoms(np.concatenate(positions), np.concatenate(weights)))
        else:
            out.append(EMPTY_LEAF)
    return SolenoidMeasure(k, out).pruned(cap=cap)


@dataclass
class SolenoidDecay:
    values: np.ndarray
    fitted_rate: float
    r_squared: float
    degenerate: bool
    step_margins: np.ndarray


def solenoid_equilibrium(F, mu0, nu0, N):
    """Decay of ||L^n (mu0 - nu0)||_"1" with the per-step norm inequality
    ||L mu||_"1" <= alpha ||mu||_"1" + (alpha + 1) ||phi||_1 checked along the way."""
    d = mu0.sub(nu0)
    values = np.empty(N + 1)
    values[0] = one_norm(d)
    margins = np.empty(N)
    for n in range(1, N + 1):
        rhs = F.alpha * one_norm(d) + (F.alpha + 1.0) * d.marginal_l1()
        d = apply_solenoid_transfer(F, d)
        values[n] = one_norm(d)
        margins[n - 1] = rhs - values[n]
    fit = fit_geometric(values)
    return SolenoidDecay(values, fit.rate, fit.r_squared, fit.degenerate, margins)


def solenoid_fixed_point(F, k, N, y0=0.5):
    """Iterate from the uniform marginal with unit atoms at y0.

    Returns (measure, one_norm increments, invariance defect at the end).
    """
    mu = uniform_atoms(k, y0)
    increments = []
    for _ in range(N):
        nxt = apply_solenoid_transfer(F, mu)
        increments.append(one_norm(nxt.sub(mu)))
        mu = nxt
    defect = one_norm(apply_solenoid_transfer(F, mu).sub(mu))
    return mu, increments, defect
