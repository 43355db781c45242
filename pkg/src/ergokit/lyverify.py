"""Lasota-Yorke constants from map data, and numerical verification.

Three norm pairs are covered: (W11, L1) for smooth circle maps, (BV, L1) for
piecewise expanding maps (with n-step escalation when the one-step factor
2/inf|T'| reaches 1), and the Lipschitz chain (Lip, sup) whose inner constant
M is only observable empirically.

Suprema and infima of derivative expressions come from dense scans (10^6
points) with a 1.001 safety factor on the Lipschitz-margin correction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .density import GridDensity, from_trig
from .maps import PiecewiseExpandingMap, SmoothCircleMap
from .transfer import TransferContext, apply_transfer
from .trig import TrigPoly

SCAN_POINTS = 1_000_000
SAFETY = 1.001


@dataclass
class LyConstants:
    """Contraction factor and additive constant of one Lasota-Yorke inequality.

    For (w11, l1) big_b is already the geometric-series ratio B/(1-alpha),
    so it doubles as the invariant-density norm bound. For (bv, l1) big_b is
    the raw one-step (or n-step) additive constant of the variation
    inequality. one_step_* hold the raw single-step pair when n_step > 1,
    m_bound records the empirical sup-norm iterate bound of the Lipschitz
    chain.
    """

    alpha: float
    big_b: float
    norm_pair: tuple
    n_step: int = 1
    one_step_lambda: float | None = None
    one_step_b: float | None = None
    m_bound: float | None = None
    refined_partition_min: float | None = None

    def invariant_bound(self):
        if self.norm_pair == ("w11", "l1"):
            return self.big_b
        return self.big_b / (1.0 - self.alpha)


def _circle_scan(mp, n=SCAN_POINTS):
    xs = np.arange(n) / n
    t1 = mp.deriv(xs, 1)
    t2 = mp.deriv(xs, 2)
    return xs, t1, t2


def compute_w11_constants(mp: SmoothCircleMap, scan_points=SCAN_POINTS):
    """alpha = max 1/|T'|, big_b = (sup|T''/T'^2| + 1)/(1 - alpha)."""
    _, t1, t2 = _circle_scan(mp, scan_points)
    h = 1.0 / scan_points
    # Lipschitz margins from exact coefficient bounds on the next derivative
    d2_sup = mp.perturbation.deriv(2).sup_bound()
    d3_sup = mp.perturbation.deriv(3).sup_bound()
    tmin = float(np.min(np.abs(t1))) - d2_sup * (h / 2) * SAFETY
    alpha = 1.0 / tmin
    if not alpha < 1.0:
        raise errors.DomainError("map not expanding enough for a one-step inequality")
    distortion = float(np.max(np.abs(t2 / t1 ** 2)))
    # d/dx (T''/T'^2) = T'''/T'^2 - 2 T''^2 / T'^3, bounded crudely
    ddist = d3_sup / tmin ** 2 + 2 * d2_sup ** 2 / tmin ** 3
    distortion += ddist * (h / 2) * SAFETY
    big_b = (distortion + 1.0) / (1.0 - alpha)
    return LyConstants(alpha=alpha, big_b=big_b, norm_pair=("w11", "l1"))


def _bv_scan(mp: PiecewiseExpandingMap, per_branch=4096):
    slope_floor = np.inf
    distortion = 0.0
    min_len = np.inf
    for br in mp.branches:
        xs = np.linspace(br.lo + 1e-12, br.hi - 1e-12, per_branch)
        t1 = br.deriv(xs, 1)
        t2 = br.deriv(xs, 2)
        slope_floor = min(slope_floor, float(np.min(np.abs(t1))))
        distortion = max(distortion, float(np.max(np.abs(t2 / t1 ** 2))))
        min_len = min(min_len, br.hi - br.lo)
    return slope_floor, distortion, min_len


def compute_bv_constants(mp: PiecewiseExpandingMap, max_n_step=6):
    """lambda = 2/inf|T'|, B = sup|T''/T'^2| + 2/inf|I_i|, escalating to T^n
    (with the refined partition of the iterate) while lambda >= 1."""
    floor1, dist1, len1 = _bv_scan(mp)
    lam1 = 2.0 / floor1
    b1 = dist1 + 2.0 / len1
    if lam1 < 1.0:
        return LyConstants(alpha=lam1, big_b=b1, norm_pair=("bv", "l1"),
                           one_step_lambda=lam1, one_step_b=b1,
                           refined_partition_min=len1)
    for m in range(2, max_n_step + 1):
        it = mp.iterate(m)
        floor_m, dist_m, len_m = _bv_scan(it)
        if 2.0 / floor_m < 1.0:
            return LyConstants(alpha=2.0 / floor_m, big_b=dist_m + 2.0 / len_m,
                               norm_pair=("bv", "l1"), n_step=m,
                               one_step_lambda=lam1, one_step_b=b1,
                               refined_partition_min=len_m)
    raise errors.NoUniformLyError(
        f"no uniform Lasota-Yorke inequality within {max_n_step} iterates "
        f"(one-step slope floor {floor1:.4f})")


def _iterate_distortion(mp, n1, scan_points=SCAN_POINTS // 10):
    """sup |(T^n1)'' / ((T^n1)')^2| by chain rule on a dense scan."""
    xs = np.arange(scan_points) / scan_points
    t1 = np.ones_like(xs)
    t2 = np.zeros_like(xs)
    z = xs
    for _ in range(n1):
        dz1 = mp.deriv(z, 1)
        dz2 = mp.deriv(z, 2)
        t2 = dz2 * t1 ** 2 + dz1 * t2
        t1 = dz1 * t1
        z = mp.value(z)
    return float(np.max(np.abs(t2 / t1 ** 2)))


def compute_lip_constants(mp: SmoothCircleMap, n_grid=4096, horizon=40):
    """Empirical (Lip, sup) chain: M = sup_n ||L^n 1||_inf measured over a
    horizon, n_step the first iterate n1 with alpha^n1 M < 1, big_b the
    per-block additive constant M (distortion(T^n1) + 1)."""
    ctx = TransferContext(mp, n_grid)
    alpha = 1.0 / mp.expansion_floor
    f = GridDensity(np.ones(n_grid), "circle")
    m_bound = 1.0
    for _ in range(horizon):
        f = apply_transfer(ctx, f)
        m_bound = max(m_bound, f.sup_norm())
    n1 = 1
    while alpha ** n1 * m_bound >= 1.0:
        n1 += 1
        if n1 > 200:
            raise errors.NoUniformLyError("could not find n1 with alpha^n1 M < 1")
    lam = alpha ** n1 * m_bound
    dist_block = _iterate_distortion(mp, n1)
    dist_one = _iterate_distortion(mp, 1)
    return LyConstants(alpha=lam, big_b=m_bound * (dist_block + 1.0),
                       norm_pair=("lip", "sup"), n_step=n1,
                       one_step_lambda=alpha * m_bound,
                       one_step_b=m_bound * (dist_one + 1.0),
                       m_bound=m_bound)


def _rhs_bound(constants, n, strong0, weak0):
    """Upper bound for strong(L^n f) implied by the stored constants."""
    pair = constants.norm_pair
    if pair == ("w11", "l1"):
        return constants.alpha ** n * strong0 + constants.big_b * weak0
    if pair == ("bv", "l1"):
        m = constants.n_step
        if m == 1:
            lam, b = constants.alpha, constants.big_b
            return lam ** n * strong0 + (b + 1.0) / (1.0 - lam) * weak0
        lam1 = constants.one_step_lambda
        b1n = constants.one_step_b + 1.0
        lam_m, b_mn = constants.alpha, constants.big_b + 1.0
        q, r = divmod(n, m)
        # single steps first, then whole blocks of the m-step inequality
        head_strong = lam1 ** r * strong0 + b1n * sum(lam1 ** j for j in range(r)) * weak0
        return lam_m ** q * head_strong + b_mn / (1.0 - lam_m) * weak0
    if pair == ("lip", "sup"):
        m = constants.n_step
        M = constants.m_bound
        q, r = divmod(n, m)
        lam1 = constants.one_step_lambda  # alpha * M per single step
        head = lam1 ** r * strong0 + constants.one_step_b * M * sum(
            lam1 ** j for j in range(r)) * weak0
        return constants.alpha ** q * head + constants.big_b * M / (1.0 - constants.alpha) * weak0
    raise errors.DomainError(f"unknown norm pair {pair}")


def _norms_for_pair(pair, f):
    if pair == ("w11", "l1"):
        return f.w11_norm(), f.l1_norm()
    if pair == ("bv", "l1"):
        return f.variation() + f.l1_norm(), f.l1_norm()
    if pair == ("lip", "sup"):
        return f.lip_norm(), f.sup_norm()
    raise errors.DomainError(f"unknown norm pair {pair}")


def random_smooth_density(rng, max_mode=6, n=4096, topology="circle"):
    """Positive trig-polynomial density with random low modes."""
    sin_terms = []
    cos_terms = []
    for k in range(1, max_mode + 1):
        sin_terms.append((k, rng.normal() / k ** 2))
        cos_terms.append((k, rng.normal() / k ** 2))
    p = TrigPoly(0.0, tuple(sin_terms), tuple(cos_terms))
    lift = p.sup_bound() + 0.05
    return from_trig(TrigPoly(lift, p.sin_terms, p.cos_terms), n, topology)


@dataclass
class VerifyReport:
    constants: LyConstants
    min_slack: float
    slack_tolerance: float
    passed: bool
    trials: int
    n_max: int
    seed: int
    slacks: np.ndarray = field(repr=False, default=None)

    def to_json(self, map_id="map"):
        return json.dumps({
            "map": map_id,
            "norm_pair": list(self.constants.norm_pair),
            "alpha": self.constants.alpha,
            "big_b": self.constants.big_b,
            "n_step": self.constants.n_step,
            "min_slack": self.min_slack,
            "passed": self.passed,
            "trials": self.trials,
            "n_max": self.n_max,
            "seed": self.seed,
        }, sort_keys=True)


def verify_ly(mp, constants, trials=50, n_max=20, n_grid=4096, seed=0):
    """Check strong(L^n f) <= bound(n, f) on random densities for all n <= n_max.

    Negative slack beyond -1e-6 * strong(f) counts as a failed verification
    (reported, not raised); the tolerance absorbs grid derivative error.
    """
    from .ulam import random_step_levels

    rng = np.random.default_rng(seed)
    ctx = TransferContext(mp, n_grid)
    pair = constants.norm_pair
    slacks = []
    for _ in range(trials):
        if pair == ("bv", "l1"):
            levels = random_step_levels(n_grid, rng, n_jumps=int(rng.integers(3, 12)))
            f = GridDensity(levels, ctx.topology)
        else:
            f = random_smooth_density(rng, n=n_grid, topology=ctx.topology)
        strong0, weak0 = _norms_for_pair(pair, f)
        g = f
        for n in range(1, n_max + 1):
            g = apply_transfer(ctx, g)
            strong_n, _ = _norms_for_pair(pair, g)
            bound = _rhs_bound(constants, n, strong0, weak0)
            slacks.append((bound - strong_n) / max(strong0, 1e-300))
    slacks = np.asarray(slacks)
    tol = 1e-6
    min_slack = float(np.min(slacks))
    return VerifyReport(constants, min_slack, tol, bool(min_slack >= -tol),
                        trials, n_max, seed, slacks)


def uniform_family_report(family, deltas, trials=10, n_max=10, n_grid=2048, seed=0):
    """Empirical uniform-family checks: one set of constants valid across
    the delta ladder (UF1) and no weak-norm expansion (UF4)."""
    alphas, bigbs = [], []
    for d in deltas:
        c = compute_w11_constants(family.map_at(d), scan_points=SCAN_POINTS // 10)
        alphas.append(c.alpha)
        bigbs.append(c.big_b)
    uniform = LyConstants(alpha=max(alphas), big_b=max(bigbs), norm_pair=("w11", "l1"))
    reports = {}
    weak_ok = True
    rng = np.random.default_rng(seed)
    for d in deltas:
        mp = family.map_at(d)
        reports[d] = verify_ly(mp, uniform, trials=trials, n_max=n_max,
                               n_grid=n_grid, seed=int(rng.integers(2 ** 31)))
        ctx = TransferContext(mp, n_grid)
        g = random_smooth_density(rng, n=n_grid)
        base = g.l1_norm()
        for _ in range(n_max):
            g = apply_transfer(ctx, g)
            if g.l1_norm() > base + 1e-6:
                weak_ok = False
    return {"constants": uniform, "per_delta": reports, "weak_norm_bounded": weak_ok}
