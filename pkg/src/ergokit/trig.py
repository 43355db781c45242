"""Trigonometric polynomials with exact derivatives of every order.

All smooth circle-map perturbations and smooth test densities in the toolkit
are trig polynomials, so derivatives and sup bounds come from coefficients
instead of numerics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TrigPoly:
    """const + sum a_k sin(2 pi k x) + sum b_k cos(2 pi k x)."""

    const: float = 0.0
    sin_terms: tuple = field(default_factory=tuple)  # ((k, a_k), ...)
    cos_terms: tuple = field(default_factory=tuple)

    def __call__(self, x):
        out = np.full_like(np.asarray(x, dtype=float), self.const)
        for k, a in self.sin_terms:
            out = out + a * np.sin(TWO_PI * k * np.asarray(x, dtype=float))
        for k, b in self.cos_terms:
            out = out + b * np.cos(TWO_PI * k * np.asarray(x, dtype=float))
        return out

    def deriv(self, order=1):
        """Exact derivative, again a TrigPoly."""
        p = self
        for _ in range(order):
            new_sin = tuple((k, -b * TWO_PI * k) for k, b in p.cos_terms)
            new_cos = tuple((k, a * TWO_PI * k) for k, a in p.sin_terms)
            p = TrigPoly(0.0, new_sin, new_cos)
        return p

    def sup_bound(self):
        """Coefficient bound on sup |p|; exact only for single-term polys."""
        return (
            abs(self.const)
            + sum(abs(a) for _, a in self.sin_terms)
            + sum(abs(b) for _, b in self.cos_terms)
        )

    def c_norm_bound(self, order):
        """Bound on the C^order norm, sum of sup bounds of derivatives."""
        return sum(self.deriv(j).sup_bound() for j in range(order + 1))

    def scaled(self, c):
        return TrigPoly(
            self.const * c,
            tuple((k, a * c) for k, a in self.sin_terms),
            tuple((k, b * c) for k, b in self.cos_terms),
        )

    def plus(self, other):
        sin = dict(self.sin_terms)
        for k, a in other.sin_terms:
            sin[k] = sin.get(k, 0.0) + a
        cos = dict(self.cos_terms)
        for k, b in other.cos_terms:
            cos[k] = cos.get(k, 0.0) + b
        return TrigPoly(
            self.const + other.const,
            tuple(sorted(sin.items())),
            tuple(sorted(cos.items())),
        )

    @property
    def is_zero(self):
        return (
            self.const == 0.0
            and all(a == 0.0 for _, a in self.sin_terms)
            and all(b == 0.0 for _, b in self.cos_terms)
        )

    def to_config(self):
        return {
            "const": self.const,
            "sin": [[int(k), float(a)] for k, a in self.sin_terms],
            "cos": [[int(k), float(b)] for k, b in self.cos_terms],
        }

    @classmethod
    def from_config(cls, cfg):
        return cls(
            float(cfg.get("const", 0.0)),
            tuple((int(k), float(a)) for k, a in cfg.get("sin", [])),
            tuple((int(k), float(b)) for k, b in cfg.get("cos", [])),
        )


ZERO = TrigPoly()


def sin_mode(k, amplitude=1.0):
    return TrigPoly(0.0, ((k, amplitude),), ())


def cos_mode(k, amplitude=1.0):
    return TrigPoly(0.0, (), ((k, amplitude),))


def default_direction():
    """Default perturbation direction sin(2 pi x) / (2 pi); configuration, not ground truth."""
    return sin_mode(1, 1.0 / TWO_PI)
