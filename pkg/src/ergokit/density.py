"""Grid densities and the norms used throughout: L1, W^{1,1}, sup, Lipschitz, BV.

A GridDensity stores samples on a uniform grid (node points i/n on the circle,
cell midpoints on the interval) with weight 1/n, optionally together with
analytic evaluation channels. Off-grid evaluation uses the analytic channel
when present and linear interpolation otherwise, which keeps positivity and
L1 bounds.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass

import numpy as np

from . import errors

CIRCLE = "circle"
INTERVAL = "interval"


class GridDensity:
    """Density sampled on a uniform periodic or half-open grid.

    values are treated as an immutable snapshot. fn / dfn / d2fn are optional
    analytic channels; dvalues / d2values optional derivative grids.
    """

    def __init__(self, values, topology=CIRCLE, fn=None, dfn=None, d2fn=None,
                 dvalues=None, d2values=None):
        if topology not in (CIRCLE, INTERVAL):
            raise errors.DomainError(f"unknown topology {topology!r}")
        self.values = np.array(values, dtype=float)
        self.values.setflags(write=False)
        self.topology = topology
        self.fn, self.dfn, self.d2fn = fn, dfn, d2fn
        self.dvalues = None if dvalues is None else np.asarray(dvalues, dtype=float)
        self.d2values = None if d2values is None else np.asarray(d2values, dtype=float)

    @property
    def n(self):
        return self.values.size

    @property
    def x(self):
        """Sample points: i/n on the circle, cell midpoints on the interval."""
        n = self.n
        if self.topology == CIRCLE:
            return np.arange(n) / n
        return (np.arange(n) + 0.5) / n

    def _interp(self, vals, y):
        y = np.asarray(y, dtype=float)
        n = self.n
        if self.topology == CIRCLE:
            t = np.mod(y, 1.0) * n
            idx = np.floor(t).astype(int) % n
            frac = t - np.floor(t)
            return (1.0 - frac) * vals[idx] + frac * vals[(idx + 1) % n]
        t = y * n - 0.5
        idx = np.clip(np.floor(t).astype(int), 0, n - 2)
        frac = np.clip(t - idx, 0.0, 1.0)
        return (1.0 - frac) * vals[idx] + frac * vals[idx + 1]

    def eval_at(self, y):
        """Channel-aware point evaluation (analytic if available, else linear)."""
        if self.fn is not None:
            return np.asarray(self.fn(np.asarray(y, dtype=float)), dtype=float)
        return self._interp(self.values, y)

    def grad(self):
        """First-derivative grid: periodic central differences on the circle,
        one-sided at interval ends."""
        if self.dvalues is not None:
            return self.dvalues
        n = self.n
        if self.topology == CIRCLE:
            return (np.roll(self.values, -1) - np.roll(self.values, 1)) * (n / 2.0)
        return np.gradient(self.values, 1.0 / n)

    def deriv_at(self, y):
        if self.dfn is not None:
            return np.asarray(self.dfn(np.asarray(y, dtype=float)), dtype=float)
        return self._interp(self.grad(), y)

    def l1_norm(self):
        return float(np.mean(np.abs(self.values)))

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def w11_norm(self):
        return self.l1_norm() + float(np.mean(np.abs(self.grad())))

    def lip_norm(self):
        return self.sup_norm() + float(np.max(np.abs(self.grad())))

    def variation(self):
        """Total variation over the grid order; the circle variant closes the loop."""
        diffs = np.abs(np.diff(self.values))
        total = float(np.sum(diffs))
        if self.topology == CIRCLE:
            total += float(abs(self.values[0] - self.values[-1]))
        return total

    def integral(self):
        return float(np.mean(self.values))

    def with_values(self, values):
        """Same-grid density holding new plain values (no channels)."""
        return GridDensity(values, self.topology)

    def zero_average(self):
        """Project onto zero mean; idempotent, channels shifted consistently."""
        mean = self.integral()
        fn = None
        if self.fn is not None:
            base = self.fn
            fn = lambda y: np.asarray(base(y), dtype=float) - mean
        return GridDensity(self.values - mean, self.topology, fn=fn, dfn=self.dfn,
                           d2fn=self.d2fn, dvalues=self.dvalues, d2values=self.d2values)


def l1_norm(f):
    return f.l1_norm()


def w11_norm(f):
    return f.w11_norm()


def sup_norm(f):
    return f.sup_norm()


def lip_norm(f):
    return f.lip_norm()


def bv_variation(f):
    return f.variation()


def zero_average_project(f):
    return f.zero_average()


@dataclass(frozen=True)
class NormReport:
    l1: float
    w11: float
    sup: float
    variation: float
    lip: float


def norm_report(f):
    return NormReport(f.l1_norm(), f.w11_norm(), f.sup_norm(), f.variation(), f.lip_norm())


def from_function(fn, n, topology=CIRCLE, dfn=None, d2fn=None):
    """Sample a callable on the grid, keeping it as the analytic channel."""
    g = GridDensity(np.zeros(n), topology)
    vals = np.asarray(fn(g.x), dtype=float)
    return GridDensity(vals, topology, fn=fn, dfn=dfn, d2fn=d2fn)


def from_trig(poly, n, topology=CIRCLE):
    """Grid density from a trig polynomial with exact derivative channels."""
    d1, d2 = poly.deriv(1), poly.deriv(2)
    return from_function(poly, n, topology, dfn=d1, d2fn=d2)


def constant(c, n, topology=CIRCLE):
    return from_function(lambda y: np.full_like(np.asarray(y, dtype=float), float(c)),
                         n, topology,
                         dfn=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
                         d2fn=lambda y: np.zeros_like(np.asarray(y, dtype=float)))


def make_step(breaks, levels, n, topology=INTERVAL):
    """Step density with jumps snapped to the nearest grid boundary.

    breaks are interior jump locations (0 and 1 implied); levels has one entry
    per segment. Returns (density, snapped_breaks, max_snap_distance).
    """
    breaks = list(breaks)
    levels = list(levels)
    if len(levels) != len(breaks) + 1:
        raise errors.DomainError("need one level per segment")
    snapped = [round(b * n) / n for b in breaks]
    max_snap = max((abs(s - b) for s, b in zip(snapped, breaks)), default=0.0)
    edges = np.array([0.0] + snapped + [1.0])
    if np.any(np.diff(edges) < 0):
        raise errors.DomainError("breaks must be sorted in [0, 1]")
    g = GridDensity(np.zeros(n), topology)
    seg = np.searchsorted(edges, g.x, side="right") - 1
    seg = np.clip(seg, 0, len(levels) - 1)
    vals = np.asarray(levels, dtype=float)[seg]
    return GridDensity(vals, topology), snapped, max_snap


def to_csv(f, path):
    """Write (x, value) columns; floats carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["x", "value"])
        for x, v in zip(f.x, f.values):
            w.writerow([f"{x:.17g}", f"{v:.17g}"])


def from_csv(path, topology=None):
    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    if rows[0][0] != "x":
        raise errors.DomainError("expected an 'x,value' header")
    xs = np.array([float(r[0]) for r in rows[1:]])
    vals = np.array([float(r[1]) for r in rows[1:]])
    if topology is None:
        topology = CIRCLE if xs.size and xs[0] == 0.0 else INTERVAL
    return GridDensity(vals, topology)
