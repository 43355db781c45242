"""Map families under study.

Smooth expanding circle maps x -> d*x + p(x) mod 1, piecewise expanding
interval maps with analytic branches, Keller's three-parameter W family,
contracted-fiber skew products over an expanding base, and one-parameter
perturbation families T_delta = T_0 + delta*eps.

All maps expose exact derivatives and bracketed-Newton branch inverses;
everything is immutable after construction.
"""

from __future__ import annotations

import math

import numpy as np

from . import errors
from .trig import TrigPoly, ZERO

ROOT_TOL = 1e-13
NEWTON_MAX_ITER = 60
EXPANSION_SCAN_POINTS = 10_000


def wrap01(x):
    """Canonical reduction of circle coordinates into [0, 1).

    np.mod can return exactly 1.0 for tiny negative inputs; fold it back.
    """
    out = np.mod(x, 1.0)
    return np.where(out == 1.0, 0.0, out) if isinstance(out, np.ndarray) else (
        0.0 if out == 1.0 else out)


def _bracketed_newton(fn, dfn, lo, hi, target, branch=None):
    """Solve fn(y) = target on [lo, hi] for a monotone fn, vectorized.

    Newton steps are clamped into a shrinking sign bracket, so convergence is
    guaranteed; linear branches converge in one step.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    increasing = fn(np.atleast_1d(hi.reshape(-1)[:1]))[0] >= fn(np.atleast_1d(lo.reshape(-1)[:1]))[0]

    y = 0.5 * (lo + hi)
    resid = fn(y) - target
    for _ in range(NEWTON_MAX_ITER):
        if np.max(np.abs(resid)) <= ROOT_TOL:
            break
        high_side = (resid > 0) == increasing
        hi = np.where(high_side, y, hi)
        lo = np.where(high_side, lo, y)
        step = resid / dfn(y)
        y_new = y - step
        bad = ~np.isfinite(y_new) | (y_new < lo) | (y_new > hi)
        y_new = np.where(bad, 0.5 * (lo + hi), y_new)
        y = y_new
        resid = fn(y) - target
    else:
        worst = float(np.max(np.abs(resid)))
        if worst > 1e3 * ROOT_TOL:
            raise errors.RootFindingError(
                f"branch inverse did not converge (residual {worst:.3e})",
                branch=branch,
                residual=worst,
            )
    return y


class SmoothCircleMap:
    """x -> degree*x + perturbation(x) mod 1 with inf |T'| > 1."""

    def __init__(self, degree, perturbation=ZERO, expansion_floor=None):
        if int(degree) != degree or degree < 2:
            raise errors.DomainError("degree must be an integer >= 2")
        self.degree = int(degree)
        self.perturbation = perturbation
        self._d1 = perturbation.deriv(1)
        self._d2 = perturbation.deriv(2)
        self._d3 = perturbation.deriv(3)
        if expansion_floor is None:
            expansion_floor = self._certify_expansion()
        if not expansion_floor > 1.0:
            raise errors.DomainError(
                f"map is not uniformly expanding (certified floor {expansion_floor:.6g})"
            )
        self.expansion_floor = float(expansion_floor)

    def _certify_expansion(self):
        # dense sample of |T'| minus a Lipschitz margin from the |T''| bound
        xs = np.arange(EXPANSION_SCAN_POINTS) / EXPANSION_SCAN_POINTS
        t1 = np.abs(self.deriv(xs, 1))
        margin = self._d2.sup_bound() * (0.5 / EXPANSION_SCAN_POINTS) * 1.001
        return float(np.min(t1) - margin)

    def lift(self, x):
        """Lift to the real line: degree*x + p(x), strictly increasing."""
        x = np.asarray(x, dtype=float)
        return self.degree * x + self.perturbation(x)

    def value(self, x):
        return wrap01(self.lift(x))

    def deriv(self, x, order=1):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return self.degree + self._d1(x)
        if order == 2:
            return self._d2(x)
        if order == 3:
            return self._d3(x)
        raise errors.DomainError(f"derivative order {order} not supported")

    def grid_preimages(self, xs):
        """All preimages of the points xs, as (degree, len(xs)) arrays (y, |T'(y)|)."""
        xs = np.asarray(xs, dtype=float)
        l0 = float(self.lift(0.0))
        s0 = np.ceil(l0 - xs)
        ys = np.empty((self.degree, xs.size))
        dts = np.empty_like(ys)
        for b in range(self.degree):
            target = xs + s0 + b
            y = _bracketed_newton(self.lift, lambda u: self.deriv(u, 1), 0.0, 1.0, target, branch=b)
            ys[b] = wrap01(np.where(y >= 1.0, y - 1.0, y))
            dts[b] = np.abs(self.deriv(ys[b], 1))
        return ys, dts

    def branch_inverses(self, x):
        """Sorted (preimage, |T'(preimage)|) pairs for one point x in [0, 1)."""
        if not 0.0 <= x < 1.0:
            raise errors.DomainError("x must lie in [0, 1)")
        ys, dts = self.grid_preimages(np.array([x]))
        pairs = sorted((float(ys[b, 0]), float(dts[b, 0])) for b in range(self.degree))
        return pairs

    def as_piecewise(self):
        """View the circle map as a piecewise expanding interval map.

        Branch cuts sit where the lift crosses integers; each branch is the
        lift minus its integer offset.
        """
        l0 = float(self.lift(0.0))
        first = math.ceil(l0) if l0 != math.ceil(l0) else int(l0) + 1
        cuts = [0.0]
        offsets = []
        m = first
        while m < l0 + self.degree:
            y = _bracketed_newton(self.lift, lambda u: self.deriv(u, 1), 0.0, 1.0,
                                  np.array([float(m)]))
            cuts.append(float(y[0]))
            m += 1
        cuts.append(1.0)
        cuts = sorted(set(cuts))
        branches = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            off = math.floor(self.lift(0.5 * (lo + hi)))
            branches.append(FuncBranch(
                lo, hi,
                lambda u, off=off: self.lift(u) - off,
                lambda u: self.deriv(u, 1),
                lambda u: self.deriv(u, 2),
            ))
        return PiecewiseExpandingMap(np.array(cuts), branches)

    def to_config(self):
        return {"family": "circle", "degree": self.degree,
                "perturbation": self.perturbation.to_config()}


class LinearBranch:
    """Affine branch through (x0, y0) and (x1, y1)."""

    def __init__(self, x0, x1, y0, y1):
        self.lo, self.hi = float(x0), float(x1)
        self.slope = (y1 - y0) / (x1 - x0)
        self.intercept = y0 - self.slope * x0

    def value(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def deriv(self, x, order=1):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return np.full_like(x, self.slope)
        return np.zeros_like(x)


class FuncBranch:
    """Branch backed by analytic callables for value, first and second derivative."""

    def __init__(self, lo, hi, f, df, d2f):
        self.lo, self.hi = float(lo), float(hi)
        self._f, self._df, self._d2f = f, df, d2f

    def value(self, x):
        return self._f(np.asarray(x, dtype=float))

    def deriv(self, x, order=1):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return self._df(x)
        if order == 2:
            return self._d2f(x)
        raise errors.DomainError(f"derivative order {order} not supported")


class ComposedBranch:
    """outer(inner(x)) restricted to [lo, hi], derivatives by the chain rule."""

    def __init__(self, outer, inner, lo, hi):
        self.outer, self.inner = outer, inner
        self.lo, self.hi = float(lo), float(hi)

    def _mid(self, x):
        u = self.inner.value(x)
        return np.clip(u, self.outer.lo, self.outer.hi)

    def value(self, x):
        return self.outer.value(self._mid(x))

    def deriv(self, x, order=1):
        u = self._mid(x)
        di1 = self.inner.deriv(x, 1)
        do1 = self.outer.deriv(u, 1)
        if order == 1:
            return do1 * di1
        if order == 2:
            return self.outer.deriv(u, 2) * di1 ** 2 + do1 * self.inner.deriv(x, 2)
        raise errors.DomainError(f"derivative order {order} not supported")


class PiecewiseExpandingMap:
    """Interval map with finitely many monotone C^2 branches, inf |T'| > 1.

    Cells are half-open [d_i, d_{i+1}): a breakpoint belongs to the branch on
    its right.
    """

    SLOPE_SCAN = 512

    def __init__(self, breakpoints, branches, _validate=True):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.branches = list(branches)
        if len(self.branches) != len(self.breakpoints) - 1:
            raise errors.DomainError("need exactly one branch per interval")
        if abs(self.breakpoints[0]) > 1e-15 or abs(self.breakpoints[-1] - 1.0) > 1e-15:
            raise errors.DomainError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise errors.DomainError("breakpoints must be strictly increasing")
        self._images = []
        for i, br in enumerate(self.branches):
            va, vb = float(br.value(br.lo)), float(br.value(br.hi))
            self._images.append((min(va, vb), max(va, vb), vb >= va))
            if _validate:
                xs = np.linspace(br.lo, br.hi, self.SLOPE_SCAN)
                d1 = br.deriv(xs, 1)
                if np.min(np.abs(d1)) <= 1.0:
                    raise errors.DomainError(f"branch {i} is not uniformly expanding")
                if np.max(d1) * np.min(d1) < 0:
                    raise errors.DomainError(f"branch {i} is not monotone")

    @property
    def n_branches(self):
        return len(self.branches)

    def branch_index(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, self.n_branches - 1)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x >= 1.0):
            raise errors.DomainError("x must lie in [0, 1)")
        idx = self.branch_index(x)
        out = np.empty_like(x, dtype=float)
        for i, br in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = br.value(x[m])
        return out

    def deriv(self, x, order=1):
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x, dtype=float)
        for i, br in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = br.deriv(x[m], order)
        return out

    def branch_preimages(self, xs, branch):
        """Preimages of xs under one branch: (mask, y, |T'|) with mask = xs in image."""
        xs = np.asarray(xs, dtype=float)
        br = self.branches[branch]
        lo_im, hi_im, _ = self._images[branch]
        mask = (xs >= lo_im - 1e-12) & (xs <= hi_im + 1e-12)
        if not np.any(mask):
            return mask, np.empty(0), np.empty(0)
        target = np.clip(xs[mask], lo_im, hi_im)
        y = _bracketed_newton(br.value, lambda u: br.deriv(u, 1), br.lo, br.hi,
                              target, branch=branch)
        return mask, y, np.abs(br.deriv(y, 1))

    def branch_inverses(self, x):
        """Sorted (preimage, |T'(preimage)|) pairs over branches whose image contains x."""
        if not 0.0 <= x < 1.0:
            raise errors.DomainError("x must lie in [0, 1)")
        pairs = []
        for b in range(self.n_branches):
            mask, y, dt = self.branch_preimages(np.array([x]), b)
            if mask[0]:
                pairs.append((float(y[0]), float(dt[0])))
        return sorted(pairs)

    def iterate(self, n):
        """The n-fold composition as a new piecewise expanding map with exact branches."""
        result = self
        for _ in range(n - 1):
            result = _compose(self, result)
        return result

    def min_slope(self):
        worst = math.inf
        for br in self.branches:
            xs = np.linspace(br.lo, br.hi, self.SLOPE_SCAN)
            worst = min(worst, float(np.min(np.abs(br.deriv(xs, 1)))))
        return worst

    def to_config(self):
        return {"family": "piecewise", "breakpoints": [float(b) for b in self.breakpoints]}


def _compose(outer, inner):
    """outer after inner, branches refined through inner's branch inverses."""
    cuts = set()
    branches = []
    for i_idx, ib in enumerate(inner.branches):
        lo_im, hi_im, increasing = inner._images[i_idx]
        for ob in outer.branches:
            a = max(lo_im, ob.lo)
            b = min(hi_im, ob.hi)
            if b - a < 1e-13:
                continue
            ya = _bracketed_newton(ib.value, lambda u: ib.deriv(u, 1), ib.lo, ib.hi,
                                   np.array([a]))[0]
            yb = _bracketed_newton(ib.value, lambda u: ib.deriv(u, 1), ib.lo, ib.hi,
                                   np.array([b]))[0]
            lo, hi = (ya, yb) if increasing else (yb, ya)
            if hi - lo < 1e-13:
                continue
            branches.append(ComposedBranch(ob, ib, lo, hi))
            cuts.add(round(lo, 15))
            cuts.add(round(hi, 15))
    cuts.add(0.0)
    cuts.add(1.0)
    pts = sorted(cuts)
    pts = [p for i, p in enumerate(pts) if i == 0 or p - pts[i - 1] > 1e-13]
    if pts[-1] != 1.0:
        pts[-1] = 1.0
    branches.sort(key=lambda br: br.lo)
    return PiecewiseExpandingMap(np.array(pts), branches, _validate=False)


class KellerParams:
    """Parameters (a, b, r) of the continuous piecewise linear W family.

    W rises from 0 to a on [0, r] reversed, runs 0 to b on [r, 1/2], and is
    mirror symmetric about x = 1/2; slopes are a/r and 2b/(1-2r).
    """

    def __init__(self, a, b, r):
        if not 0.0 < r < 0.5:
            raise errors.DomainError("need 0 < r < 1/2")
        if not (0.0 < a <= 1.0 and 0.0 < b <= 1.0):
            raise errors.DomainError("need a, b in (0, 1]")
        if a / r <= 1.0 or 2.0 * b / (1.0 - 2.0 * r) <= 1.0:
            raise errors.DomainError("slopes a/r and 2b/(1-2r) must exceed 1")
        self.a, self.b, self.r = float(a), float(b), float(r)

    def build(self):
        a, b, r = self.a, self.b, self.r
        branches = [
            LinearBranch(0.0, r, a, 0.0),
            LinearBranch(r, 0.5, 0.0, b),
            LinearBranch(0.5, 1.0 - r, b, 0.0),
            LinearBranch(1.0 - r, 1.0, 0.0, a),
        ]
        m = PiecewiseExpandingMap(np.array([0.0, r, 0.5, 1.0 - r, 1.0]), branches)
        m.keller_params = self
        return m


def keller_map(a, b, r):
    return KellerParams(a, b, r).build()


class AffineFiber:
    """Fiber map G(x, y) = contraction*y + x_coeff*x + offset on [0, 1]."""

    def __init__(self, contraction, x_coeff=0.0, offset=0.0):
        if not abs(contraction) < 1.0:
            raise errors.DomainError("|contraction| must be < 1")
        self.contraction = float(contraction)
        self.x_coeff = float(x_coeff)
        self.offset = float(offset)
        corners = [self(x, y) for x in (0.0, 1.0) for y in (0.0, 1.0)]
        if min(corners) < -1e-12 or max(corners) > 1.0 + 1e-12:
            raise errors.DomainError("fiber map must send [0,1]^2 into [0,1]")
        self.alpha = abs(self.contraction)
        self.dGdx_bound = abs(self.x_coeff)

    def __call__(self, x, y):
        return self.contraction * np.asarray(y, dtype=float) + self.x_coeff * x + self.offset

    def to_config(self):
        return {"contraction": self.contraction, "x_coeff": self.x_coeff,
                "offset": self.offset}


class SolenoidMap:
    """Skew product F(x, y) = (T(x), G(x, y)) with expanding base and contracted fiber."""

    CONTRACTION_GRID = 32

    def __init__(self, base, fiber):
        self.base = base
        self.fiber = fiber
        self.alpha = fiber.alpha
        self.dGdx_bound = fiber.dGdx_bound
        xs = np.linspace(0.0, 1.0 - 1e-9, self.CONTRACTION_GRID)
        ys = np.linspace(0.0, 1.0, self.CONTRACTION_GRID)
        for x in xs:
            g = np.asarray(fiber(x, ys))
            gaps = np.abs(np.diff(g))
            if np.any(gaps > self.alpha * np.diff(ys) + 1e-9):
                raise errors.DomainError("fiber map violates the declared contraction rate")


class PerturbationFamily:
    """One-parameter family T_delta = T_0 + delta*eps (mod 1 on the circle)."""

    def __init__(self, base_map, direction):
        self.base_map = base_map
        self.direction = direction
        # C^2 distance of T_delta from T_0 is at most this constant times delta
        self.c2_bound = direction.c_norm_bound(2)

    def map_at(self, delta):
        if delta == 0.0:
            return self.base_map
        if isinstance(self.base_map, SmoothCircleMap):
            pert = self.base_map.perturbation.plus(self.direction.scaled(delta))
            return SmoothCircleMap(self.base_map.degree, pert)
        base = self.base_map
        eps = self.direction
        branches = []
        for br in base.branches:
            branches.append(FuncBranch(
                br.lo, br.hi,
                lambda u, br=br: br.value(u) + delta * eps(u),
                lambda u, br=br: br.deriv(u, 1) + delta * eps.deriv(1)(u),
                lambda u, br=br: br.deriv(u, 2) + delta * eps.deriv(2)(u),
            ))
        return PiecewiseExpandingMap(base.breakpoints, branches)


def map_from_config(cfg):
    """Build a map from a plain-dict description (the CLI config format)."""
    family = cfg.get("family")
    if family == "circle":
        pert = TrigPoly.from_config(cfg.get("perturbation", {}))
        return SmoothCircleMap(int(cfg["degree"]), pert)
    if family == "keller":
        return keller_map(float(cfg["a"]), float(cfg["b"]), float(cfg["r"]))
    if family == "piecewise_linear":
        bps = [float(v) for v in cfg["breakpoints"]]
        vals = cfg["branch_values"]
        branches = [LinearBranch(bps[i], bps[i + 1], float(v0), float(v1))
                    for i, (v0, v1) in enumerate(vals)]
        return PiecewiseExpandingMap(np.array(bps), branches)
    raise errors.DomainError(f"unknown map family {family!r}")
