"""Binary toy system: a time-shared joint type no single (alpha, beta) can produce.

Source ``x0 ~ Bern(1/2)``; the encoder flips it with probability alpha,
``u1 = x0 xor Bern(alpha)``; the channel is noiseless; the decoder flips
``u1`` with probability beta, ``u2 = u1 xor Bern(beta)``. Tables are indexed
``p[x0, u1, u2]``.

Why the even mixture of (0, 0) and (1, 1) is out of reach: it puts
u2 = x0 with probability 1, which needs the two flips to agree almost surely,
i.e. ``alpha*beta + (1-alpha)*(1-beta) = 1``. That forces alpha = beta in
{0, 1}, where u1 is a deterministic function of x0, whereas the mixture has
u1 independent of x0. The scan in :func:`nearest_single_shot_distance`
measures how far the family stays from the target.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidPmfError


@dataclass(frozen=True)
class BinaryDesign:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def _family(alpha, beta) -> np.ndarray:
    """Vectorized tables; trailing axes are (x0, u1, u2)."""
    alpha = np.asarray(alpha, dtype=float)[..., None, None, None]
    beta = np.asarray(beta, dtype=float)[..., None, None, None]
    x0, u1, u2 = np.indices((2, 2, 2))
    enc = np.where(u1 != x0, alpha, 1.0 - alpha)
    dec = np.where(u2 != u1, beta, 1.0 - beta)
    return 0.5 * enc * dec


def joint_from_alpha_beta(d: BinaryDesign) -> np.ndarray:
    return _family(d.alpha, d.beta)


def timeshare_mixture(d1: BinaryDesign, d2: BinaryDesign, theta: float) -> np.ndarray:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    return theta * joint_from_alpha_beta(d1) + (1.0 - theta) * joint_from_alpha_beta(d2)


FIG5_TARGET = np.array(
    [[[0.25, 0.0], [0.25, 0.0]],
     [[0.0, 0.25], [0.0, 0.25]]]
)


def nearest_single_shot_distance(target, grid_step: float) -> tuple[float, tuple[float, float]]:
    """Minimum L1 distance from ``target`` to the (alpha, beta) family over a square grid."""
    if not 0.0 < grid_step <= 0.5:
        raise ValueError(f"grid_step must lie in (0, 0.5], got {grid_step}")
    target = np.asarray(target, dtype=float)
    if target.shape != (2, 2, 2):
        raise InvalidPmfError(f"target must be a 2x2x2 table, got {target.shape}")
    n = int(round(1.0 / grid_step))
    vals = np.linspace(0.0, 1.0, n + 1)
    best, arg = np.inf, (0.0, 0.0)
    # one alpha row at a time keeps memory at O(n)
    for a in vals:
        dist = np.abs(_family(np.full_like(vals, a), vals) - target).sum(axis=(1, 2, 3))
        k = int(np.argmin(dist))
        if dist[k] < best:
            best, arg = float(dist[k]), (float(a), float(vals[k]))
    return best, arg


def simulate_alternating(n: int, designs=(BinaryDesign(0, 0), BinaryDesign(1, 1)),
                         seed: int = 0, typical_source: bool = True) -> np.ndarray:
    """Empirical type of ``(x0, u1, u2)`` when symbol t uses ``designs[t % 2]``.

    With ``typical_source`` the source is the sequence 0,0,1,1,... so every
    (t mod 2, x0) pair has exact frequency 1/4 when 4 divides n; otherwise x0
    is drawn i.i.d. Bern(1/2).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(n) % 2
    x0 = (np.arange(n) // 2) % 2 if typical_source else rng.integers(0, 2, n)
    alpha = np.array([d.alpha for d in designs])[t]
    beta = np.array([d.beta for d in designs])[t]
    u1 = x0 ^ (rng.random(n) < alpha)
    u2 = u1 ^ (rng.random(n) < beta)
    counts = np.zeros((2, 2, 2))
    np.add.at(counts, (x0, u1, u2), 1.0)
    return counts / n


@dataclass
class InfeasibilityReport:
    target: list
    mixture: list
    fact_a: bool
    min_distance: float
    argmin: tuple
    grid_step: float
    fact_b: bool
    n: int
    empirical_type: list
    type_l1: float
    fact_c: bool
    iid_source_type_l1: float

    @property
    def passed(self) -> bool:
        return self.fact_a and self.fact_b and self.fact_c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def text(self) -> str:
        a, b = self.argmin
        lines = [
            "Binary time-sharing example",
            f"(a) mixture of (0,0) and (1,1) at theta=1/2 equals the target table: {self.fact_a}",
            f"(b) closest single (alpha, beta) on a {self.grid_step} grid: ({a:.3f}, {b:.3f}), "
            f"L1 distance {self.min_distance:.4f} > 0.1: {self.fact_b}",
            f"(c) alternating (0,0)/(1,1) over n={self.n}: type L1 error {self.type_l1:.2e} "
            f"<= 2/n: {self.fact_c} (i.i.d. source: {self.iid_source_type_l1:.3e})",
            "Argument: the target has u2 = x0 surely, so both flips must agree surely, which",
            "forces alpha = beta in {0, 1}; there u1 is a function of x0, but in the target u1",
            "is independent of x0.",
        ]
        return "\n".join(lines)


def verify_infeasibility_report(n: int = 1000, grid_step: float = 0.001, seed: int = 0) -> InfeasibilityReport:
    d00, d11 = BinaryDesign(0.0, 0.0), BinaryDesign(1.0, 1.0)
    mix = timeshare_mixture(d00, d11, 0.5)
    dist, arg = nearest_single_shot_distance(mix, grid_step)
    emp = simulate_alternating(n, (d00, d11), seed=seed)
    l1 = float(np.abs(emp - mix).sum())
    iid = simulate_alternating(n, (d00, d11), seed=seed, typical_source=False)
    return InfeasibilityReport(
        target=FIG5_TARGET.tolist(),
        mixture=mix.tolist(),
        fact_a=bool(np.array_equal(mix, FIG5_TARGET)),
        min_distance=dist,
        argmin=arg,
        grid_step=grid_step,
        fact_b=dist > 0.1,
        n=n,
        empirical_type=emp.tolist(),
        type_l1=l1,
        fact_c=l1 <= 2.0 / n,
        iid_source_type_l1=float(np.abs(iid - mix).sum()),
    )
