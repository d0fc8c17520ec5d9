"""Monte Carlo execution of stationary symbol-by-symbol control designs.

The encoder and decoder kernels live on the quantizer grids of a
:class:`~witscoord.model.DiscreteModel`. Two sampling modes exist:

``continuous``
    x0 and z1 are drawn from the true Gaussians; x0 and y1 are quantized only
    to look up kernel rows, and costs use the continuous x0. Discretization
    error shows up in the costs.
``lattice``
    x0 is replaced by its grid point before forming x1 = x0 + u1. The symbol
    process then has exactly the law of the assembled discrete joint, so
    empirical costs are unbiased for ``cost_pair_from_joint``.

Every run draws the same four streams from its seed, in the same order
(source, noise, encoder uniforms, decoder uniforms), whatever the scenario.
A feedback policy that ignores y1_prev therefore reproduces the
no-feedback trajectory bit for bit.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .designs import CausalDesign, point_mass_rows
from .envelope import envelope_slope, envelope_value
from .model import CostPair, DiscreteModel


class Scenario(str, enum.Enum):
    CAUSAL = "CausalCausal"
    FEEDBACK = "CausalCausalFeedback"
    GENIE = "CausalCausalFeedbackGenie"


def make_tshare_sequence(pT, n: int) -> np.ndarray:
    """Exact-type time-sharing sequence.

    Counts are ``round(n * pT)`` fixed up by the largest-remainder rule so they
    sum to ``n``; symbols are then emitted round-robin among those with
    remaining count.
    """
    pT = np.asarray(pT, dtype=float)
    if n < pT.size:
        raise ValueError(f"n={n} shorter than the alphabet ({pT.size})")
    raw = n * pT
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.lexsort((np.arange(pT.size), -(raw - counts)))
    counts[order[:short]] += 1
    seq = np.empty(n, dtype=np.int64)
    left = counts.copy()
    k = 0
    while k < n:
        for t in range(pT.size):
            if left[t] > 0:
                seq[k] = t
                left[t] -= 1
                k += 1
    return seq


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Per-symbol kernels with optional feedback and genie inputs.

    ``enc[x0, t, y1_prev, u1]`` and ``dec[t, y1, x0_prev, u2]``; the last
    y1_prev slot (index ``ny1``) and last x0_prev slot (index ``nx0``) stand for
    "nothing observed yet" and are also used when the scenario withholds that
    input.
    """

    pT: np.ndarray
    enc: np.ndarray
    dec: np.ndarray

    @classmethod
    def from_design(cls, design: CausalDesign, model: DiscreteModel) -> "StationaryPolicy":
        design.check_model(model)
        nx, nt, nu1 = design.enc.shape
        ny, nu2 = design.dec.shape[1:]
        enc = np.broadcast_to(design.enc[:, :, None, :], (nx, nt, ny + 1, nu1))
        dec = np.broadcast_to(design.dec[:, :, None, :], (nt, ny, nx + 1, nu2))
        return cls(design.pT, enc, dec)

    def with_feedback_encoder(self, enc_fb: np.ndarray) -> "StationaryPolicy":
        """Replace the encoder by ``enc_fb[x0, t, y1_prev, u1]`` (ny1 + 1 slots)."""
        return StationaryPolicy(self.pT, enc_fb, self.dec)

    def with_genie_decoder(self, dec_g: np.ndarray) -> "StationaryPolicy":
        """Replace the decoder by ``dec_g[t, y1, x0_prev, u2]`` (nx0 + 1 slots)."""
        return StationaryPolicy(self.pT, self.enc, dec_g)


@dataclass
class Trajectory:
    t: np.ndarray
    tshare: np.ndarray
    x0: np.ndarray
    u1: np.ndarray
    x1: np.ndarray
    y1: np.ndarray
    u2: np.ndarray
    x0_idx: np.ndarray
    u1_idx: np.ndarray
    y1_idx: np.ndarray
    u2_idx: np.ndarray

    def rows(self) -> np.ndarray:
        """(n, 6) float64 rows: t, x0, u1, x1, y1, u2."""
        return np.column_stack(
            [self.t.astype(float), self.x0, self.u1, self.x1, self.y1, self.u2]
        ).astype("<f8")

    def dump(self, fh) -> None:
        fh.write(self.rows().tobytes())


@dataclass
class BlockResult:
    trajectory: Trajectory
    c_P: float
    c_S: float
    se_P: float
    se_S: float

    @property
    def cost(self) -> CostPair:
        return CostPair(self.c_P, self.c_S)


def _draws(model: DiscreteModel, n: int, seed: int):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(0.0, math.sqrt(model.params.Q), n)
    z = rng.normal(0.0, math.sqrt(model.params.N), n)
    ue = rng.random(n)
    ud = rng.random(n)
    return x0, z, ue, ud


def _sample(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row of ``cum`` (rows are cumulative pmfs)."""
    idx = (cum < (u * cum[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


def run_block(policy: StationaryPolicy, scenario: Scenario, model: DiscreteModel, n: int,
              seed: int, mode: str = "continuous") -> BlockResult:
    if n <= 0:
        raise ValueError(f"block length must be positive, got {n}")
    if mode not in ("continuous", "lattice"):
        raise ValueError(f"unknown mode {mode!r}")
    scenario = Scenario(scenario)
    nx, ny = len(model.x0_grid), len(model.y1_grid)
    x0c, z, ue, ud = _draws(model, n, seed)
    x0i = model.x0_grid.quantize(x0c)
    x0v = model.x0_grid.points[x0i] if mode == "lattice" else x0c
    tseq = make_tshare_sequence(policy.pT, n)
    u1pts = model.u1_grid.points
    cum_enc = np.cumsum(policy.enc, axis=-1)

    if scenario is Scenario.CAUSAL:
        u1i = _sample(cum_enc[x0i, tseq, ny], ue)
        x1 = x0v + u1pts[u1i]
        y1 = x1 + z
        y1i = model.y1_grid.quantize(y1)
    else:
        u1i, x1, y1, y1i = _feedback_loop(cum_enc, x0i, x0v, tseq, z, ue, u1pts,
                                          model.y1_grid.edges, ny)

    x0prev = np.full(n, nx)
    if scenario is Scenario.GENIE:
        x0prev[1:] = x0i[:-1]
    u2i = _sample(np.cumsum(policy.dec[tseq, y1i, x0prev], axis=-1), ud)
    u1 = u1pts[u1i]
    u2 = model.u2_grid.points[u2i]
    pw = u1**2
    err = (x1 - u2) ** 2
    traj = Trajectory(np.arange(n), tseq, x0v, u1, x1, y1, u2, x0i, u1i, y1i, u2i)
    return BlockResult(
        traj,
        float(pw.mean()),
        float(err.mean()),
        float(pw.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        float(err.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
    )


def _feedback_loop(cum_enc, x0i, x0v, tseq, z, ue, u1pts, edges, ny):
    """Sequential encoder pass: u1_t depends on the quantized y1_{t-1}."""
    n = len(x0i)
    rows = cum_enc.tolist()
    edges = edges.tolist()
    pts = u1pts.tolist()
    last = len(pts) - 1
    u1i = np.empty(n, dtype=np.int64)
    x1 = np.empty(n)
    y1 = np.empty(n)
    y1i = np.empty(n, dtype=np.int64)
    xi, xv, ts, zz, uu = x0i.tolist(), x0v.tolist(), tseq.tolist(), z.tolist(), ue.tolist()
    prev = ny
    for k in range(n):
        row = rows[xi[k]][ts[k]][prev]
        j = bisect_left(row, uu[k] * row[-1])
        if j > last:
            j = last
        x = xv[k] + pts[j]
        y = x + zz[k]
        prev = bisect_left(edges, y)
        u1i[k], x1[k], y1[k], y1i[k] = j, x, y, prev
    return u1i, x1, y1, y1i


# -- multi-seed statistics ---------------------------------------------------


@dataclass
class SimResult:
    n: int
    seeds: list[int]
    c_P: np.ndarray
    c_S: np.ndarray
    gap: np.ndarray | None = None

    @property
    def mean(self) -> CostPair:
        return CostPair(float(self.c_P.mean()), float(self.c_S.mean()))

    @property
    def stderr(self) -> tuple[float, float]:
        k = len(self.seeds)
        if k < 2:
            return (float("nan"), float("nan"))
        return (float(self.c_P.std(ddof=1) / math.sqrt(k)), float(self.c_S.std(ddof=1) / math.sqrt(k)))


def simulate(policy: StationaryPolicy, scenario: Scenario, model: DiscreteModel, n: int,
             seeds, targets: CostPair | None = None, mode: str = "continuous") -> SimResult:
    seeds = [int(s) for s in seeds]
    res = [run_block(policy, scenario, model, n, s, mode) for s in seeds]
    cp = np.array([r.c_P for r in res])
    cs = np.array([r.c_S for r in res])
    gap = None
    if targets is not None:
        gap = np.abs(targets.P - cp) + np.abs(targets.S - cs)
    return SimResult(n, seeds, cp, cs, gap)


@dataclass
class AchievabilityReport:
    targets: CostPair
    n_schedule: list[int]
    results: list[SimResult]
    mean_gap: list[float]
    se_gap: list[float]
    nonincreasing: bool
    slope: float
    eps_target: float | None
    final_ok: bool | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "seed", "c_P", "c_S", "gap"])
        for r in self.results:
            for s, p, q, g in zip(r.seeds, r.c_P, r.c_S, r.gap):
                w.writerow([r.n, s, repr(float(p)), repr(float(q)), repr(float(g))])
        return buf.getvalue()


def verify_achievability(design: CausalDesign, model: DiscreteModel, targets: CostPair,
                         n_schedule, seeds, eps_target: float | None = None,
                         mode: str = "lattice") -> AchievabilityReport:
    """Estimate E|P - c_P| + |S - c_S| across seeds for each block length.

    The default ``lattice`` mode matches targets from ``cost_pair_from_joint``;
    use ``continuous`` with targets derived from the Gaussian law.
    """
    policy = StationaryPolicy.from_design(design, model)
    ns = [int(n) for n in n_schedule]
    results = [simulate(policy, Scenario.CAUSAL, model, n, seeds, targets, mode) for n in ns]
    k = len(list(seeds))
    means = [float(r.gap.mean()) for r in results]
    ses = [float(r.gap.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0 for r in results]
    nonincreasing = all(
        means[i + 1] <= means[i] + 2.0 * math.hypot(ses[i], ses[i + 1]) for i in range(len(ns) - 1)
    )
    slope = float("nan")
    if len(ns) >= 2 and all(m > 0 for m in means):
        slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    final_ok = None if eps_target is None else means[-1] <= eps_target
    return AchievabilityReport(targets, ns, results, means, ses, nonincreasing, slope,
                               eps_target, final_ok)


def empirical_joint_type(traj: Trajectory, model: DiscreteModel, n_t: int = 1) -> np.ndarray:
    """Empirical pmf over grid indices of (X0, T, U1, Y1, U2)."""
    shape = (len(model.x0_grid), n_t, len(model.u1_grid), len(model.y1_grid), len(model.u2_grid))
    flat = np.ravel_multi_index(
        (traj.x0_idx, traj.tshare, traj.u1_idx, traj.y1_idx, traj.u2_idx), shape
    )
    counts = np.bincount(flat, minlength=int(np.prod(shape)))
    return counts.reshape(shape) / len(flat)


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# -- feedback containment ----------------------------------------------------


def stationary_averaged_encoder(enc_fb: np.ndarray, model: DiscreteModel, iters: int = 500) -> np.ndarray:
    """Marginal encoder ``enc[x0, u1]`` of a |T|=1 feedback encoder ``enc_fb[x0, y1_prev, u1]``.

    y1_prev is independent of the current x0, so the single-letter encoder is
    the feedback kernel averaged over the stationary law of y1_prev (computed
    on the lattice model by power iteration from the empty slot).
    """
    ny = len(model.y1_grid)
    src = model.source_pmf
    K = model.channel_kernel
    # transition y_prev -> y over ny + 1 states (last = empty, never revisited)
    trans = np.einsum("i,isj,ijk->sk", src, enc_fb, K)
    pi = np.zeros(ny + 1)
    pi[ny] = 1.0
    for _ in range(iters):
        new = np.zeros(ny + 1)
        new[:ny] = pi @ trans
        if np.max(np.abs(new - pi)) < 1e-13:
            pi = new
            break
        pi = new
    return np.einsum("s,isj->ij", pi, enc_fb)


def _mmse_rows(model: DiscreteModel, enc_marg: np.ndarray) -> np.ndarray:
    from .solver import mmse_decoder

    return mmse_decoder(enc_marg[:, None, :], 0, model)[None]


@dataclass
class ContainmentRow:
    kind: str
    P: float
    S: float
    se_P: float
    se_S: float
    envelope_S: float
    distance: float
    band: float

    @property
    def violation(self) -> bool:
        return self.distance < -self.band


@dataclass
class ContainmentReport:
    rows: list[ContainmentRow]
    blind_identical: bool
    n: int
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(r.violation for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.blind_identical

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "kind", "P", "S", "se_P", "se_S", "envelope_S", "distance", "band", "violation"])
        for i, r in enumerate(self.rows):
            w.writerow([i, r.kind, repr(r.P), repr(r.S), repr(r.se_P), repr(r.se_S),
                        repr(r.envelope_S), repr(r.distance), repr(r.band), int(r.violation)])
        return buf.getvalue()


def _random_feedback_encoder(model: DiscreteModel, base: CausalDesign, rng: np.random.Generator) -> tuple[str, np.ndarray]:
    """A random |T|=1 feedback encoder ``[x0, y1_prev (ny+1 slots), u1]`` near or far from ``base``."""
    nx, nu1 = len(model.x0_grid), len(model.u1_grid)
    ny = len(model.y1_grid)
    base_idx = np.argmax(base.enc[:, 0, :], axis=-1)  # (nx,)
    kind = rng.choice(["perturbed", "affine_feedback", "dirichlet"], p=[0.45, 0.45, 0.10])
    if kind == "perturbed":
        rho = rng.uniform(0.05, 0.6)
        shift = rng.integers(-3, 4, size=(nx, ny + 1))
        use = rng.random((nx, ny + 1)) < rho
        idx = np.clip(base_idx[:, None] + np.where(use, shift, 0), 0, nu1 - 1)
        enc = point_mass_rows(idx, nu1)
    elif kind == "affine_feedback":
        a = rng.uniform(-1.0, 0.0)
        b = rng.normal(0.0, 0.25)
        yprev = np.append(model.y1_grid.points, 0.0)
        vals = a * model.x0_grid.points[:, None] + b * yprev[None, :]
        enc = point_mass_rows(model.u1_grid.quantize(vals), nu1)
    else:
        mix = rng.uniform(0.5, 0.95)
        noise = rng.dirichlet(np.full(nu1, 0.2), size=(nx, ny + 1))
        enc = mix * point_mass_rows(np.repeat(base_idx[:, None], ny + 1, 1), nu1) + (1 - mix) * noise
    return str(kind), enc


def feedback_containment_check(model: DiscreteModel, frontier, trials: int = 200, seed: int = 0,
                               n: int = 100_000, genie_trials: int = 50, blind_checks: int = 5,
                               slack_fraction: float = 0.02) -> ContainmentReport:
    """Simulate random stationary feedback (and genie) policies against the causal frontier.

    A policy violates containment when its (c_P, c_S) lies below the envelope
    by more than ``3 * SE + slack_fraction * Q``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFEED]))
    env = frontier.envelope()
    vertex_designs = [frontier.designs[p.design_id] for p in frontier.points]
    Q = model.params.Q
    nx = len(model.x0_grid)
    rows: list[ContainmentRow] = []

    def record(kind, res: BlockResult):
        e = envelope_value(env, res.c_P)
        slope = envelope_slope(env, res.c_P)
        se = math.hypot(res.se_S, slope * res.se_P)
        rows.append(ContainmentRow(kind, res.c_P, res.c_S, res.se_P, res.se_S, e, res.c_S - e,
                                   3.0 * se + slack_fraction * Q))

    def build():
        base = vertex_designs[rng.integers(len(vertex_designs))]
        kind, enc_fb = _random_feedback_encoder(model, base, rng)
        marg = stationary_averaged_encoder(enc_fb, model)
        dec = _mmse_rows(model, marg)
        design = CausalDesign(np.ones(1), marg[:, None, :], dec)
        pol = StationaryPolicy.from_design(design, model).with_feedback_encoder(enc_fb[:, None, :, :])
        return kind, pol

    for i in range(trials):
        kind, pol = build()
        record("feedback/" + kind, run_block(pol, Scenario.FEEDBACK, model, n, seed + 1 + i))

    nu2 = len(model.u2_grid)
    for i in range(genie_trials):
        kind, pol = build()
        base_rows = np.argmax(pol.dec[0, :, nx, :], axis=-1)  # (ny,)
        c = rng.normal(0.0, 0.3)
        x0prev = np.append(model.x0_grid.points, 0.0)
        vals = model.u2_grid.points[base_rows][:, None] + c * x0prev[None, :]
        dec_g = point_mass_rows(model.u2_grid.quantize(vals), nu2)[None]
        pol = pol.with_genie_decoder(dec_g)
        record("genie/" + kind, run_block(pol, Scenario.GENIE, model, n, seed + 10_000 + i))

    identical = True
    for i in range(blind_checks):
        base = vertex_designs[rng.integers(len(vertex_designs))]
        plain = StationaryPolicy.from_design(base, model)
        blind = plain.with_feedback_encoder(np.array(plain.enc))
        a = run_block(plain, Scenario.CAUSAL, model, n, seed + 20_000 + i)
        b = run_block(blind, Scenario.FEEDBACK, model, n, seed + 20_000 + i)
        identical &= all(
            np.array_equal(getattr(a.trajectory, f), getattr(b.trajectory, f))
            for f in ("x0", "u1", "x1", "y1", "u2")
        )
    return ContainmentReport(rows, bool(identical), n, seed)
