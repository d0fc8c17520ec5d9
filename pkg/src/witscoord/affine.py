"""Closed-form costs of linear policies ``u1 = a * x0`` with the linear MMSE decoder."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .envelope import convex_envelope
from .model import CostPair, ModelParams


@dataclass(frozen=True)
class AffinePolicy:
    # No intercept: for a zero-mean source an offset only adds input power.
    a: float

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ValueError(f"gain must be finite, got {self.a!r}")


def affine_costs(p: AffinePolicy, m: ModelParams) -> CostPair:
    """P = a^2 Q and S = var(x1) N / (var(x1) + N) with var(x1) = (1 + a)^2 Q."""
    var_x1 = (1.0 + p.a) ** 2 * m.Q
    return CostPair(p.a**2 * m.Q, var_x1 * m.N / (var_x1 + m.N))


def mmse_gain(p: AffinePolicy, m: ModelParams) -> float:
    """Decoder gain k in ``u2 = k * y1``."""
    var_x1 = (1.0 + p.a) ** 2 * m.Q
    return var_x1 / (var_x1 + m.N)


def timeshare_affine(p1: AffinePolicy, p2: AffinePolicy, theta: float, m: ModelParams) -> CostPair:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    c1, c2 = affine_costs(p1, m), affine_costs(p2, m)
    return CostPair(theta * c1.P + (1 - theta) * c2.P, theta * c1.S + (1 - theta) * c2.S)


@dataclass(frozen=True)
class AffineCurve:
    gains: tuple[float, ...]
    points: tuple[CostPair, ...]
    envelope: tuple[CostPair, ...]


def gaussian_frontier_sample(m: ModelParams, a_grid) -> AffineCurve:
    gains = tuple(float(a) for a in a_grid)
    if not gains:
        raise ValueError("a_grid is empty")
    pts = tuple(affine_costs(AffinePolicy(a), m) for a in gains)
    return AffineCurve(gains, pts, tuple(convex_envelope(list(pts))))
