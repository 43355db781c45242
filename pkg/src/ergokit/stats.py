"""Empirical statistics: equilibrium decay, correlations, Birkhoff averages, CLT.

Decay series are fitted log-linearly over an auto-selected window; a rate
claim is refused when r^2 < 0.9. Circle-map trajectories run on a 128-bit
fixed-point state (two uint64 limbs) so that dyadic maps do not collapse to 0
in floating point; interval maps use plain float64 orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .density import GridDensity
from .maps import PiecewiseExpandingMap, SmoothCircleMap
from .transfer import apply_transfer
from .ulam import build_ulam, invariant_vector

# ---------------------------------------------------------------------------
# geometric rate fitting


@dataclass
class RateFit:
    rate: float
    prefactor: float
    window: tuple | None
    r_squared: float
    degenerate: bool


def fit_geometric(values, lower=1e-10, upper_frac=0.5, knee_factor=2.0):
    """Least-squares geometric fit of a decay series.

    The window keeps indices n >= 1 with value in [lower, upper_frac*value_0],
    truncated at the first increase and at a noise knee where the step ratio
    jumps above knee_factor times the median of the earlier ratios.
    """
    values = np.asarray(values, dtype=float)
    v0 = values[0] if values.size else 0.0
    if values.size < 3 or np.all(values[2:] < 1e-12):
        return RateFit(0.0, 0.0, None, 0.0, True)
    idx = [i for i in range(1, values.size)
           if lower <= values[i] <= upper_frac * v0]
    if len(idx) < 3:
        return RateFit(0.0, 0.0, None, 0.0, True)
    # contiguous run from the first admissible index
    run = [idx[0]]
    for i in idx[1:]:
        if i == run[-1] + 1 and values[i] < values[i - 1]:
            run.append(i)
        else:
            break
    ratios = [values[i] / values[i - 1] for i in run if values[i - 1] > 0]
    if len(ratios) >= 3:
        med = float(np.median(ratios[:max(2, len(ratios) // 2)]))
        for j in range(1, len(ratios)):
            if ratios[j] > knee_factor * med:
                run = run[:j + 1]
                break
    if len(run) < 3:
        return RateFit(0.0, 0.0, None, 0.0, True)
    ns = np.asarray(run, dtype=float)
    logs = np.log(values[run])
    slope, intercept = np.polyfit(ns, logs, 1)
    pred = slope * ns + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return RateFit(float(np.exp(slope)), float(np.exp(intercept)),
                   (run[0], run[-1]), r2, False)


# ---------------------------------------------------------------------------
# convergence to equilibrium and correlation integrals


@dataclass
class DecaySeries:
    values: np.ndarray
    norm: str
    fitted_rate: float
    fitted_prefactor: float
    fit_window: tuple | None
    r_squared: float
    degenerate: bool


def equilibrium_decay(ctx, g, N, norm="l1", project=False):
    """Series ||L^n g||, n = 0..N, for a zero-average density g, with rate fit.

    Callers must either pass zero-average g or set project=True.
    """
    if abs(g.integral()) > 1e-10:
        if not project:
            raise errors.DomainError(
                "probe has nonzero average; pass project=True to subtract the mean")
        g = g.zero_average()
    norm_fn = {"l1": GridDensity.l1_norm, "w11": GridDensity.w11_norm}[norm]
    values = np.empty(N + 1)
    values[0] = norm_fn(g)
    for n in range(1, N + 1):
        g = apply_transfer(ctx, g)
        values[n] = norm_fn(g)
    fit = fit_geometric(values)
    return DecaySeries(values, norm, fit.rate, fit.prefactor, fit.window,
                       fit.r_squared, fit.degenerate)


def correlation_integrals(ctx, psi, g, N, mode="lebesgue", h=None):
    """Correlation series via the duality int psi o T^n . phi dm = int psi . L^n phi dm.

    lebesgue mode: int psi o T^n g dm - int g dm * int psi dmu.
    invariant mode: the mu-correlation of psi and g through the h-weighted density.
    No trajectory sampling is involved.
    """
    psi_vals = np.asarray(psi.eval_at(ctx.x), dtype=float)
    if mode == "lebesgue":
        phi = g
        if abs(g.integral()) > 1e-12:
            if h is None:
                raise errors.DomainError("lebesgue-mode centering needs the invariant density h")
            center = g.integral() * float(np.mean(psi_vals * h.values))
        else:
            center = 0.0
    elif mode == "invariant":
        if h is None:
            raise errors.DomainError("invariant mode needs the invariant density h")
        phi = GridDensity(np.asarray(g.eval_at(ctx.x)) * h.values, ctx.topology)
        mean_g = float(np.mean(np.asarray(g.eval_at(ctx.x)) * h.values))
        mean_psi = float(np.mean(psi_vals * h.values))
        center = mean_g * mean_psi
    else:
        raise errors.DomainError(f"unknown mode {mode!r}")
    out = np.empty(N + 1)
    cur = phi
    out[0] = float(np.mean(psi_vals * np.asarray(cur.eval_at(ctx.x)))) - center
    for n in range(1, N + 1):
        cur = apply_transfer(ctx, cur)
        out[n] = float(np.mean(psi_vals * cur.values)) - center
    return out


# ---------------------------------------------------------------------------
# trajectory simulation

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SCALE64 = 2.0 ** 64


class CircleOrbits:
    """Ensemble of circle-map orbits on a 128-bit fixed-point state.

    The state is an integer m = hi*2^64 + lo representing x = m / 2^128; the
    linear part of the map acts exactly on m, the smooth perturbation is
    injected at 2^-64 resolution. Pure linear maps (p = 0) evolve exactly.
    """

    def __init__(self, mp: SmoothCircleMap, n_starts, rng=None, x0=None):
        self.map = mp
        if mp.perturbation.sup_bound() > 0.45:
            raise errors.DomainError("perturbation too large for fixed-point stepping")
        self._has_pert = not mp.perturbation.is_zero
        if x0 is not None:
            xs = np.atleast_1d(np.asarray(x0, dtype=float))
            self.hi = (np.mod(xs, 1.0) * _SCALE64).astype(np.uint64)
            self.lo = np.zeros_like(self.hi)
        else:
            self.hi = rng.integers(0, 2 ** 64, size=n_starts, dtype=np.uint64)
            self.lo = rng.integers(0, 2 ** 64, size=n_starts, dtype=np.uint64)

    @property
    def x(self):
        return self.hi.astype(float) / _SCALE64

    def step(self):
        d = np.uint64(self.map.degree)
        a = self.lo >> _SHIFT32
        b = self.lo & _MASK32
        t = d * b
        u = d * a + (t >> _SHIFT32)
        lo = ((u & _MASK32) << _SHIFT32) | (t & _MASK32)
        hi = d * self.hi + (u >> _SHIFT32)
        if self._has_pert:
            q = np.round(self.map.perturbation(self.x) * _SCALE64)
            hi = hi + q.astype(np.int64).astype(np.uint64)
        self.hi, self.lo = hi, lo


class IntervalOrbits:
    """Plain float64 ensemble for piecewise interval maps."""

    def __init__(self, mp: PiecewiseExpandingMap, n_starts, rng=None, x0=None):
        self.map = mp
        if x0 is not None:
            self.x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        else:
            self.x = rng.uniform(0.0, 1.0, size=n_starts)

    def step(self):
        self.x = np.minimum(self.map.value(self.x), np.nextafter(1.0, 0.0))


def make_orbits(mp, n_starts, rng=None, x0=None):
    if isinstance(mp, SmoothCircleMap):
        return CircleOrbits(mp, n_starts, rng, x0)
    return IntervalOrbits(mp, n_starts, rng, x0)


def birkhoff_average(mp, f, x0, n):
    """(1/n) sum_{k<n} f(T^k x0) along a single simulated orbit."""
    if n < 1:
        raise errors.DomainError("n must be >= 1")
    orb = make_orbits(mp, 1, x0=x0)
    acc = 0.0
    for _ in range(n):
        acc += float(np.sum(f(orb.x)))
        orb.step()
    return acc / n


def birkhoff_ensemble(mp, f, n_starts, n, seed=0):
    """Birkhoff averages over Lebesgue-random starts; returns the per-start array."""
    rng = np.random.default_rng(seed)
    orb = make_orbits(mp, n_starts, rng=rng)
    acc = np.zeros(n_starts)
    for _ in range(n):
        acc += f(orb.x)
        orb.step()
    return acc / n


# ---------------------------------------------------------------------------
# central limit check


@dataclass
class CltResult:
    sample_count: int
    horizon: int
    sigma_hat: float
    gk_sigma: float
    ks_statistic: float
    mean_f: float
    degenerate: bool
    sums: np.ndarray = field(repr=False, default=None)


def green_kubo_sigma(ctx, f, h, kmax=200, tol=1e-8):
    """sigma^2 = int fbar^2 dmu + 2 sum_k int fbar . fbar o T^k dmu, truncated
    when a term drops below tol or k reaches kmax."""
    fx = np.asarray(f(ctx.x), dtype=float)
    mean_f = float(np.mean(fx * h.values))
    fbar = fx - mean_f
    sigma2 = float(np.mean(fbar ** 2 * h.values))
    cur = GridDensity(fbar * h.values, ctx.topology)
    terms = 0
    for _ in range(kmax):
        cur = apply_transfer(ctx, cur)
        term = float(np.mean(fbar * cur.values))
        sigma2 += 2.0 * term
        terms += 1
        if abs(term) < tol:
            break
    return math.sqrt(max(sigma2, 0.0)), terms, mean_f


def _ks_statistic(samples, sigma):
    s = np.sort(samples)
    n = s.size
    cdf = 0.5 * (1.0 + np.vectorize(math.erf)(s / (sigma * math.sqrt(2.0))))
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(np.max(upper), np.max(lower)))


def clt_check(mp, f, sample_count, n, seed=0, k_h=4096, n_grid=4096):
    """Normalized Birkhoff sums over Lebesgue-random starts vs N(0, sigma^2).

    sigma_hat is the empirical standard deviation, gk_sigma the Green-Kubo
    estimate through the transfer operator; ks_statistic compares the sample
    to the fitted Gaussian. sigma_hat < 1e-6 flags a suspected coboundary.
    """
    from .transfer import TransferContext

    ctx = TransferContext(mp, n_grid)
    h = invariant_vector(build_ulam(mp, k_h)).to_density(ctx.topology)
    gk_sigma, _, mean_f = green_kubo_sigma(ctx, f, h)

    rng = np.random.default_rng(seed)
    orb = make_orbits(mp, sample_count, rng=rng)
    acc = np.zeros(sample_count)
    for _ in range(n):
        acc += f(orb.x) - mean_f
        orb.step()
    sums = acc / math.sqrt(n)
    sigma_hat = float(np.std(sums, ddof=1))
    if sigma_hat < 1e-6:
        return CltResult(sample_count, n, sigma_hat, gk_sigma, float("nan"),
                         mean_f, True, sums)
    ks = _ks_statistic(sums, sigma_hat)
    return CltResult(sample_count, n, sigma_hat, gk_sigma, ks, mean_f, False, sums)


def ks_critical_value(sample_count, level=0.01):
    """Asymptotic Kolmogorov-Smirnov critical value c(level)/sqrt(n)."""
    coeff = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}[level]
    return coeff / math.sqrt(sample_count)
