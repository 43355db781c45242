"""Pointwise transfer-operator application through branch inverses.

[Lf](x) = sum over preimages y of f(y) / |T'(y)|, evaluated at every grid
node. The operator is positive, preserves the integral and is a weak L1
contraction; those contracts are exercised by the test suite.
"""

from __future__ import annotations

import numpy as np

from . import errors
from .density import CIRCLE, INTERVAL, GridDensity
from .maps import PiecewiseExpandingMap, SmoothCircleMap


class TransferContext:
    """A map plus cached branch inverses of all grid nodes.

    Read-only after construction; every output node is independent, so
    applications parallelize trivially.
    """

    def __init__(self, mp, n):
        self.map = mp
        self.n = int(n)
        if isinstance(mp, SmoothCircleMap):
            self.topology = CIRCLE
            self.x = np.arange(self.n) / self.n
            ys, dts = mp.grid_preimages(self.x)
            full = np.arange(self.n)
            self._branches = []
            for b in range(mp.degree):
                y = ys[b]
                self._branches.append({
                    "idx": full, "y": y, "absdT": dts[b],
                    "t1": mp.deriv(y, 1), "t2": mp.deriv(y, 2),
                })
        elif isinstance(mp, PiecewiseExpandingMap):
            self.topology = INTERVAL
            self.x = (np.arange(self.n) + 0.5) / self.n
            self._branches = []
            for b in range(mp.n_branches):
                mask, y, dt = mp.branch_preimages(self.x, b)
                if y.size == 0:
                    continue
                self._branches.append({
                    "idx": np.nonzero(mask)[0], "y": y, "absdT": dt,
                    "t1": None, "t2": None,
                })
        else:
            raise errors.DomainError("unsupported map type")
        self.Tx = mp.value(self.x)

    def _check(self, f):
        if f.n != self.n or f.topology != self.topology:
            raise errors.GridMismatchError(
                f"density on ({f.n}, {f.topology}) does not match context "
                f"({self.n}, {self.topology})")

    def apply_integrand(self, g_of_y):
        """sum over preimages of g(y)/|T'(y)| for a callable g; returns raw values."""
        out = np.zeros(self.n)
        for br in self._branches:
            out[br["idx"]] += np.asarray(g_of_y(br["y"]), dtype=float) / br["absdT"]
        return out


def apply_transfer(ctx, f):
    """Push a density forward one step."""
    ctx._check(f)
    return GridDensity(ctx.apply_integrand(f.eval_at), ctx.topology)


def apply_transfer_derivative(ctx, f):
    """Derivative of Lf from the exact formula L(f'/T') - L(f T''/T'^2).

    Needs global smoothness, so only circle maps are supported; f supplies a
    derivative channel (analytic or finite differences).
    """
    if ctx.topology != CIRCLE:
        raise errors.DomainError("the derivative transfer formula needs a smooth circle map")
    ctx._check(f)
    out = np.zeros(ctx.n)
    for br in ctx._branches:
        y, t1 = br["y"], br["t1"]
        integrand = f.deriv_at(y) / t1 - f.eval_at(y) * br["t2"] / t1 ** 2
        out[br["idx"]] += integrand / br["absdT"]
    return GridDensity(out, CIRCLE)


def duality_residual(ctx, f, g):
    """| int g . Lf dm  -  int (g o T) . f dm |, both by grid quadrature."""
    ctx._check(f)
    ctx._check(g)
    lf = ctx.apply_integrand(f.eval_at)
    lhs = float(np.mean(np.asarray(g.eval_at(ctx.x), dtype=float) * lf))
    rhs = float(np.mean(np.asarray(g.eval_at(ctx.Tx), dtype=float)
                        * np.asarray(f.eval_at(ctx.x), dtype=float)))
    return abs(lhs - rhs)


def transfer_fixed_point(ctx, tol=1e-8, max_iter=500, start=None):
    """Iterate L from the uniform density until L1 increments fall below tol.

    Returns (density, increments). The Cauchy increments shrink geometrically
    for mixing maps; ConvergenceError carries the last increment otherwise.
    """
    if start is None:
        f = GridDensity(np.ones(ctx.n), ctx.topology,
                        fn=lambda y: np.ones_like(np.asarray(y, dtype=float)),
                        dfn=lambda y: np.zeros_like(np.asarray(y, dtype=float)))
    else:
        f = start
    increments = []
    for _ in range(max_iter):
        nxt = apply_transfer(ctx, f)
        inc = float(np.mean(np.abs(nxt.values - f.values)))
        increments.append(inc)
        f = nxt
        if inc < tol:
            return f, increments
    raise errors.ConvergenceError("transfer iteration did not reach tolerance",
                                  residual=increments[-1], iterations=max_iter)
