"""Gaussian problem instance and its discretization onto finite grids.

The first controller sees the source ``x0 ~ N(0, Q)`` and plays ``u1``; the
state becomes ``x1 = x0 + u1`` and the second controller observes
``y1 = x1 + z1`` with ``z1 ~ N(0, N)``. ``x1`` never gets its own axis: it
is always recovered as ``x0 + u1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import InvalidGridError, InvalidPmfError, SchemaError
from .measures import JointPmf

AXIS_LABELS = ("X0", "U1", "Y1", "U2", "T", "W1")
ROW_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    Q: float
    N: float

    def __post_init__(self):
        for name in ("Q", "N"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, name, float(v))


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing quantizer points for one axis."""

    points: np.ndarray
    label: str

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise InvalidGridError(f"grid {self.label!r} needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidGridError(f"grid {self.label!r} has non-finite points")
        if np.any(np.diff(pts) <= 0):
            raise InvalidGridError(f"grid {self.label!r} is not strictly increasing")
        if self.label not in AXIS_LABELS:
            raise InvalidGridError(f"unknown axis label {self.label!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.label == other.label
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return hash((self.label, self.points.tobytes()))

    @classmethod
    def uniform(cls, label: str, n: int, half_width: float) -> "Grid":
        return cls(np.linspace(-half_width, half_width, n), label)

    @property
    def edges(self) -> np.ndarray:
        """Interior bin edges (midpoints); the outer bins run to +-inf."""
        return 0.5 * (self.points[1:] + self.points[:-1])

    def quantize(self, values) -> np.ndarray:
        """Index of the nearest grid point; out-of-range values clamp to the ends."""
        return np.searchsorted(self.edges, values, side="left")

    def to_dict(self) -> dict:
        return {"label": self.label, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(np.asarray(d["points"], dtype=float), d["label"])


@dataclass(frozen=True)
class CostPair:
    P: float
    S: float

    def __post_init__(self):
        for name in ("P", "S"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            # cancellation in sums of squares can leave -1e-17 style residue
            if v < 0:
                if v < -1e-12:
                    raise ValueError(f"{name} must be >= 0, got {v!r}")
                v = 0.0
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, float]:
        return (self.P, self.S)


def _binned_gaussian(edges: np.ndarray, mean, std: float) -> np.ndarray:
    """Gaussian mass of each bin; last axis indexes bins.

    Upper-tail bins are computed from the survival function so that mirrored
    bins get bitwise-identical mass.
    """
    mean = np.asarray(mean, dtype=float)[..., None]
    a = np.concatenate(([-np.inf], edges))
    b = np.concatenate((edges, [np.inf]))
    za = (a - mean) / std
    zb = (b - mean) / std
    upper = za >= 0
    lower = zb <= 0
    mid = ~(upper | lower)
    out = np.empty(np.broadcast_shapes(za.shape, zb.shape))
    za, zb = np.broadcast_to(za, out.shape), np.broadcast_to(zb, out.shape)
    out[upper] = norm.sf(za[upper]) - norm.sf(zb[upper])
    out[lower] = norm.cdf(zb[lower]) - norm.cdf(za[lower])
    out[mid] = 1.0 - norm.cdf(za[mid]) - norm.sf(zb[mid])
    return np.clip(out, 0.0, None)


def build_source_pmf(params: ModelParams, grid: Grid) -> np.ndarray:
    """Mass of N(0, Q) falling in each quantizer bin of ``grid``."""
    if not isinstance(grid, Grid):
        grid = Grid(grid, "X0")
    return _binned_gaussian(grid.edges, 0.0, math.sqrt(params.Q))


def build_channel_kernel(
    params: ModelParams, x0_grid: Grid, u1_grid: Grid, y1_grid: Grid
) -> np.ndarray:
    """Kernel ``K[i, j, k] = P(y1 in bin k | x0 = x0_grid[i], u1 = u1_grid[j])``."""
    for g in (x0_grid, u1_grid, y1_grid):
        if not isinstance(g, Grid):
            raise InvalidGridError("channel kernel needs Grid objects")
    x1 = x0_grid.points[:, None] + u1_grid.points[None, :]
    return _binned_gaussian(y1_grid.edges, x1, math.sqrt(params.N))


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    params: ModelParams
    x0_grid: Grid
    u1_grid: Grid
    y1_grid: Grid
    u2_grid: Grid
    source_pmf: np.ndarray
    channel_kernel: np.ndarray

    def __post_init__(self):
        sizes = (len(self.x0_grid), len(self.u1_grid), len(self.y1_grid))
        src = np.asarray(self.source_pmf, dtype=float)
        ker = np.asarray(self.channel_kernel, dtype=float)
        if src.shape != sizes[:1] or ker.shape != sizes:
            raise SchemaError("source pmf / channel kernel shapes do not match grids")
        if np.any(src < 0) or np.any(ker < 0):
            raise InvalidPmfError("negative probability")
        if abs(src.sum() - 1) > ROW_TOL or np.max(np.abs(ker.sum(-1) - 1)) > ROW_TOL:
            raise InvalidPmfError("source pmf or kernel rows do not sum to 1")
        src.setflags(write=False)
        ker.setflags(write=False)
        object.__setattr__(self, "source_pmf", src)
        object.__setattr__(self, "channel_kernel", ker)

    @classmethod
    def build(
        cls,
        params: ModelParams,
        n_points: int = 64,
        span: float = 4.0,
        u2_points: int | None = None,
    ) -> "DiscreteModel":
        """Default discretization.

        X0 and Y1 get ``n_points`` uniform points. U1 is the mirror image of the
        X0 grid (so zero-forcing is exact) plus the origin. U2 covers the
        reachable range of x1 = x0 + u1, where every conditional mean of X1
        lies, and also contains the origin. Hence U1/U2 carry one extra point
        when ``n_points`` is even.
        """
        sq, sn = math.sqrt(params.Q), math.sqrt(params.N)
        x0 = Grid.uniform("X0", n_points, span * sq)
        u1 = Grid(np.union1d(-x0.points[::-1], [0.0]), "U1")
        y_half = 2 * span * sq + span * sn
        y1 = Grid.uniform("Y1", n_points, y_half)
        m = u2_points or n_points
        u2 = Grid.uniform("U2", m if m % 2 else m + 1, 2 * span * sq)
        return cls.from_grids(params, x0, u1, y1, u2)

    @classmethod
    def from_grids(cls, params: ModelParams, x0: Grid, u1: Grid, y1: Grid, u2: Grid):
        return cls(
            params,
            x0,
            u1,
            y1,
            u2,
            build_source_pmf(params, x0),
            build_channel_kernel(params, x0, u1, y1),
        )

    @property
    def x1_values(self) -> np.ndarray:
        """``x0 + u1`` on the (X0, U1) grid."""
        return self.x0_grid.points[:, None] + self.u1_grid.points[None, :]

    def grids(self) -> dict[str, Grid]:
        return {g.label: g for g in (self.x0_grid, self.u1_grid, self.y1_grid, self.u2_grid)}


def cost_pair_from_joint(joint: JointPmf, model: DiscreteModel) -> CostPair:
    """Expected input power and estimation error of a joint over (X0, ..., U1, ..., U2)."""
    m = joint.marginal(("X0", "U1", "U2"))
    if m.shape != (len(model.x0_grid), len(model.u1_grid), len(model.u2_grid)):
        raise SchemaError(f"joint axis sizes {m.shape} do not match model grids")
    u1 = model.u1_grid.points
    u2 = model.u2_grid.points
    P = float(np.einsum("iju,j->", m, u1**2))
    err = model.x1_values[:, :, None] - u2[None, None, :]
    S = float(np.sum(m * err**2))
    return CostPair(P, S)
