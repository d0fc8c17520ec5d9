"""Pareto frontiers of achievable (P, S) pairs on a discretized model.

Each frontier point minimizes ``S + lam * P`` for one weight ``lam`` by
alternating exact partial minimizations (decoder given encoder, encoder given
decoder) from several starting encoders. The collected points are then
convexified; a point on an envelope segment is realized by time-sharing the
two adjacent vertex designs.

Feedback/noncausal designs additionally have to satisfy
``I(W1;Y1) - I(U2;X0|W1,Y1) >= 0``. Their decoder step is a conditional
rate-distortion problem per decoder context ``(w1, y1)``, solved with
Blahut-Arimoto iterations and a bisection on the slope so the constraint
holds.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import entr

from .designs import (
    CausalDesign,
    FeedbackNoncausalDesign,
    causal_design_costs,
    feedback_design_costs,
    point_mass_rows,
    timeshare,
)
from .envelope import convex_envelope, envelope_indices, envelope_value
from .measures import JointPmf, info_constraint_value
from .model import CostPair, DiscreteModel

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6


def default_lambdas(n: int = 25, lo: float = 1e-3, hi: float = 1e3) -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n))


@dataclass(frozen=True)
class SolverSettings:
    lambdas: tuple[float, ...] = field(default_factory=default_lambdas)
    restarts: int = 2
    max_alternations: int = 50
    tol: float = 1e-10
    penalty: float | None = None  # weight on squared constraint violation; None -> 10 * Q
    seed: int = 0
    affine_starts: tuple[float, ...] = tuple(np.round(np.linspace(0.0, -1.0, 11), 10))
    workers: int = 1
    ba_iterations: int = 60
    bisection_steps: int = 16

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        if not lams or any(not (math.isfinite(v) and v >= 0) for v in lams):
            raise ValueError("lambdas must be a nonempty list of finite values >= 0")
        object.__setattr__(self, "lambdas", lams)
        for name in ("restarts", "max_alternations", "workers", "ba_iterations", "bisection_steps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.penalty is not None and not self.penalty > 0:
            raise ValueError("penalty must be > 0")

    def penalty_weight(self, model: DiscreteModel) -> float:
        return self.penalty if self.penalty is not None else 10.0 * model.params.Q


def item_rng(seed: int, lam_index: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, lam_index, restart]))


# -- causal designs -----------------------------------------------------------


def _snap(model: DiscreteModel, values) -> np.ndarray:
    return model.u2_grid.quantize(values)


def _conditional_x1_mean(model: DiscreteModel, weights: np.ndarray) -> np.ndarray:
    """E[X1 | Y1] for joint weights ``w[x0, u1]``; zero where P(y1) = 0."""
    K = model.channel_kernel
    py = np.einsum("ij,ijk->k", weights, K)
    num = np.einsum("ij,ij,ijk->k", weights, model.x1_values, K)
    out = np.zeros_like(py)
    np.divide(num, py, out=out, where=py > 0)
    return out


def mmse_decoder(enc: np.ndarray, t: int, model: DiscreteModel) -> np.ndarray:
    """Best grid decoder for time-sharing symbol ``t`` of encoder ``enc[x0, t, u1]``.

    Row ``y1`` is a point mass at the U2 grid point nearest ``E[X1 | Y1=y1, T=t]``,
    which minimizes the conditional squared error over the grid. Rows with zero
    probability point at the grid point nearest 0.
    """
    enc = np.asarray(enc, dtype=float)
    if enc.ndim == 2:
        enc = enc[:, None, :]
    w = model.source_pmf[:, None] * enc[:, t, :]
    return point_mass_rows(_snap(model, _conditional_x1_mean(model, w)), len(model.u2_grid))


def _row_costs(model: DiscreteModel, lam: float, m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    """``lam*u1^2 + E[(x1 - U2)^2 | x0, u1]`` given decoder moments over y1 (last axis)."""
    K = model.channel_kernel
    x1 = model.x1_values
    u1 = model.u1_grid.points
    if m1.ndim == 1:
        e1, e2 = K @ m1, K @ m2
    else:  # per-(x0, aux) decoder moments, shape (x0, a, y1)
        e1 = np.einsum("ijk,iak->iaj", K, m1)
        e2 = np.einsum("ijk,iak->iaj", K, m2)
        x1 = x1[:, None, :]
    return lam * u1**2 + x1**2 - 2 * x1 * e1 + e2


def _encoder_order(model: DiscreteModel) -> np.ndarray:
    u1 = model.u1_grid.points
    return np.lexsort((u1, np.abs(u1)))


def _improve_rows(cost: np.ndarray, current: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Per-row argmin over the last axis, keeping the current index unless strictly beaten.

    ``order`` lists candidate columns by preference (smaller |u1| first) for ties.
    """
    best = order[np.argmin(cost[..., order], axis=-1)]
    cur = np.take_along_axis(cost, current[..., None], -1)[..., 0]
    new = np.take_along_axis(cost, best[..., None], -1)[..., 0]
    return np.where(new < cur, best, current)


class OperatingPoint(NamedTuple):
    cost: CostPair
    design: object
    objective: float
    history: tuple[float, ...]
    lam: float
    slack: float = float("nan")


def _causal_objective(model, lam, enc_idx, dec_idx) -> float:
    g = model.u2_grid.points[dec_idx]
    rc = _row_costs(model, lam, g, g**2)
    return float(model.source_pmf @ rc[np.arange(rc.shape[0]), enc_idx])


def _alternate_causal(model: DiscreteModel, lam: float, enc_idx: np.ndarray, settings: SolverSettings):
    order = _encoder_order(model)
    nu1 = len(model.u1_grid)
    u2 = model.u2_grid.points

    def dec_step(ei):
        w = model.source_pmf[:, None] * point_mass_rows(ei, nu1)
        return _snap(model, _conditional_x1_mean(model, w))

    dec_idx = dec_step(enc_idx)
    obj = _causal_objective(model, lam, enc_idx, dec_idx)
    history = [obj]
    for _ in range(settings.max_alternations):
        g = u2[dec_idx]
        new_enc = _improve_rows(_row_costs(model, lam, g, g**2), enc_idx, order)
        new_dec = dec_step(new_enc)
        new_obj = _causal_objective(model, lam, new_enc, new_dec)
        history.append(new_obj)
        improved = obj - new_obj
        enc_idx, dec_idx, obj = new_enc, new_dec, new_obj
        if improved < settings.tol:
            break
    return enc_idx, dec_idx, obj, history


def _starting_encoders(model: DiscreteModel, settings: SolverSettings, lam_index: int, n_aux: int = 1):
    """Affine starts (snapped gains) followed by ``restarts`` random point-mass encoders."""
    nx, nu1 = len(model.x0_grid), len(model.u1_grid)
    starts = []
    for a in settings.affine_starts:
        idx = model.u1_grid.quantize(a * model.x0_grid.points)
        starts.append(np.repeat(idx[:, None], n_aux, axis=1))
    for r in range(settings.restarts):
        rng = item_rng(settings.seed, lam_index, r)
        starts.append(rng.integers(0, nu1, size=(nx, n_aux)))
    return starts


def _causal_design_from_indices(model, enc_idx, dec_idx) -> CausalDesign:
    return CausalDesign(
        np.ones(1),
        point_mass_rows(enc_idx[:, None], len(model.u1_grid)),
        point_mass_rows(dec_idx[None, :], len(model.u2_grid)),
    )


def optimize_operating_point(model: DiscreteModel, lam: float, settings: SolverSettings,
                             lam_index: int = 0) -> OperatingPoint:
    """Minimize ``S + lam * P`` over |T|=1 causal designs by alternating minimization."""
    if not (math.isfinite(lam) and lam >= 0):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    best = None
    for start in _starting_encoders(model, settings, lam_index):
        enc_idx, dec_idx, obj, hist = _alternate_causal(model, lam, start[:, 0], settings)
        if best is None or obj < best[2]:
            best = (enc_idx, dec_idx, obj, hist)
    enc_idx, dec_idx, obj, hist = best
    design = _causal_design_from_indices(model, enc_idx, dec_idx)
    return OperatingPoint(causal_design_costs(design, model), design, obj, tuple(hist), float(lam))


# -- frontier container -------------------------------------------------------


@dataclass(frozen=True)
class FrontierPoint:
    cost: CostPair
    design_id: int
    lam: float
    slack: float


@dataclass
class Frontier:
    """Envelope vertices sorted by P, plus every raw solver point behind them."""

    points: list[FrontierPoint]
    designs: list
    raw: list[FrontierPoint]
    metadata: dict = field(default_factory=dict)
    warnings: list[dict] = field(default_factory=list)

    def envelope(self) -> list[CostPair]:
        return [p.cost for p in self.points]

    def s_at(self, P: float) -> float:
        return envelope_value(self.envelope(), P)

    def segment_design(self, k: int, theta: float) -> CausalDesign:
        """|T|=2 design on segment ``k``: weight ``theta`` on vertex k, the rest on vertex k+1."""
        a, b = self.points[k], self.points[k + 1]
        return timeshare(self.designs[a.design_id], self.designs[b.design_id], theta)

    def design_at(self, P: float):
        """Time-shared design whose input power is ``P`` and whose S lies on the envelope."""
        Ps = [p.cost.P for p in self.points]
        if P <= Ps[0] or len(Ps) == 1:
            return self.designs[self.points[0].design_id]
        if P >= Ps[-1]:
            return self.designs[self.points[-1].design_id]
        k = int(np.searchsorted(Ps, P, side="right") - 1)
        theta = (Ps[k + 1] - P) / (Ps[k + 1] - Ps[k])
        return self.segment_design(k, theta)

    def to_csv(self, which: str = "envelope") -> str:
        rows = self.points if which == "envelope" else self.raw
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "P", "S", "slack", "design_id"])
        for p in rows:
            w.writerow([repr(p.lam), repr(p.cost.P), repr(p.cost.S), repr(p.slack), p.design_id])
        return buf.getvalue()


def _convexify(raw: list[FrontierPoint]) -> list[FrontierPoint]:
    idx = envelope_indices([p.cost.P for p in raw], [p.cost.S for p in raw])
    return [raw[i] for i in idx]


def _run_items(fn, items, workers: int):
    if workers <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda it: fn(*it), items))


def pareto_frontier_causal(model: DiscreteModel, settings: SolverSettings) -> Frontier:
    results = _run_items(
        lambda i, lam: optimize_operating_point(model, lam, settings, i),
        list(enumerate(settings.lambdas)),
        settings.workers,
    )
    designs = [r.design for r in results]
    raw = [FrontierPoint(r.cost, i, r.lam, float("nan")) for i, r in enumerate(results)]
    return Frontier(
        _convexify(raw),
        designs,
        raw,
        metadata={"kind": "causal", "n_lambdas": len(raw)},
    )


# -- feedback / noncausal decoder --------------------------------------------


def _mutual_info_2d(p: np.ndarray) -> float:
    """I(A;B) in nats for a 2-d joint array."""
    return float(entr(p.sum(1)).sum() + entr(p.sum(0)).sum() - entr(p).sum())


@dataclass
class _Moments:
    p: np.ndarray  # p(x0, w1, y1)
    m1: np.ndarray  # E[X1 | x0, w1, y1]
    var: np.ndarray  # Var[X1 | x0, w1, y1]
    rate: float  # I(W1; Y1)


def _feedback_moments(model: DiscreteModel, pW1: np.ndarray, enc: np.ndarray) -> _Moments:
    K = model.channel_kernel
    x1 = model.x1_values
    w = model.source_pmf[:, None, None] * pW1[None, :, None] * enc  # (x0, w1, u1)
    p = np.einsum("iwj,ijk->iwk", w, K)
    s1 = np.einsum("iwj,ij,ijk->iwk", w, x1, K)
    s2 = np.einsum("iwj,ij,ijk->iwk", w, x1**2, K)
    m1 = np.zeros_like(p)
    m2 = np.zeros_like(p)
    np.divide(s1, p, out=m1, where=p > 0)
    np.divide(s2, p, out=m2, where=p > 0)
    var = np.clip(m2 - m1**2, 0.0, None)
    return _Moments(p, m1, var, max(_mutual_info_2d(p.sum(0)), 0.0))


def _hard_leak(p: np.ndarray, idx: np.ndarray, nu2: int) -> float:
    """I(U2; X0 | W1, Y1) for the deterministic decoder ``u2 = idx[x0, w1, y1]``; equals H(U2 | W1, Y1)."""
    _, nw, ny = p.shape
    pwyu = np.zeros((nw, ny, nu2))
    w_i, y_i = np.meshgrid(np.arange(nw), np.arange(ny), indexing="ij")
    for i in range(p.shape[0]):
        np.add.at(pwyu, (w_i, y_i, idx[i]), p[i])
    pwy = pwyu.sum(-1)
    return float(entr(pwyu).sum() - entr(pwy).sum())


def _blahut_arimoto(pxc, dist, beta, q, iters, tol=1e-9):
    """One slope of the per-context rate-distortion problem.

    ``pxc[c, x]`` = p(x0 | c); ``dist[c, x, u]`` squared error; ``q[c, u]`` warm start.
    Returns ``(dec[c, x, u], q)``.
    """
    scaled = beta * dist
    for _ in range(iters):
        z = np.log(np.maximum(q, 1e-300))[:, None, :] - scaled
        z -= z.max(-1, keepdims=True)
        dec = np.exp(z)
        dec /= dec.sum(-1, keepdims=True)
        q_new = np.einsum("cx,cxu->cu", pxc, dec)
        done = np.max(np.abs(q_new - q)) < tol
        q = q_new
        if done:
            break
    z = np.log(np.maximum(q, 1e-300))[:, None, :] - scaled
    z -= z.max(-1, keepdims=True)
    dec = np.exp(z)
    dec /= dec.sum(-1, keepdims=True)
    return dec, np.einsum("cx,cxu->cu", pxc, dec)


def _leak(pc, pxc, dec) -> float:
    q = np.einsum("cx,cxu->cu", pxc, dec)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dec > 0, dec / np.maximum(q[:, None, :], 1e-300), 1.0)
        leak = float(np.sum(pc[:, None, None] * pxc[:, :, None] * dec * np.log(ratio)))
    return max(leak, 0.0)


def _blind_rows(model: DiscreteModel, mom: _Moments) -> np.ndarray:
    """x0-blind MMSE decoder rows ``[w1, y1, u2]``."""
    pwy = mom.p.sum(0)
    mean = np.zeros_like(pwy)
    np.divide(np.einsum("iwk,iwk->wk", mom.p, mom.m1), pwy, out=mean, where=pwy > 0)
    return point_mass_rows(_snap(model, mean), len(model.u2_grid))


def _feedback_decoder(model: DiscreteModel, mom: _Moments, x0_blind: bool,
                      settings: SolverSettings, hint: dict | None = None):
    """Best decoder ``dec[x0, w1, y1, u2]`` subject to the information constraint.

    ``hint`` carries the slope found on the previous call so the bisection can
    start from a narrow bracket; it is updated in place.
    """
    nx, nw, ny = mom.p.shape
    nu2 = len(model.u2_grid)
    u2 = model.u2_grid.points
    blind = np.broadcast_to(_blind_rows(model, mom)[None], (nx, nw, ny, nu2))
    if x0_blind:
        return blind.copy()

    hard_idx = _snap(model, mom.m1)
    hard_idx[mom.p <= 0] = _snap(model, 0.0)
    if _hard_leak(mom.p, hard_idx, nu2) <= mom.rate:
        return point_mass_rows(hard_idx, nu2)

    # Contexts (w1, y1) with negligible mass keep the blind rows, which leak
    # nothing. Reproduction points outside the hull of the conditional means
    # are dominated, so U2 is restricted to that span.
    pwy = mom.p.sum(0)
    cw, cy = np.nonzero(pwy > 1e-14)
    pc = pwy[cw, cy]
    pxc = (mom.p[:, cw, cy] / pc).T  # (c, x0)
    means = mom.m1[:, cw, cy].T
    relevant = pxc > 0
    lo = max(int(_snap(model, means[relevant].min())) - 1, 0)
    hi = min(int(_snap(model, means[relevant].max())) + 1, nu2 - 1)
    dist = (means[:, :, None] - u2[None, None, lo : hi + 1]) ** 2

    def attempt(log_beta, q):
        dec, q_new = _blahut_arimoto(pxc, dist, math.exp(log_beta), q, settings.ba_iterations)
        return dec, q_new, _leak(pc, pxc, dec) <= mom.rate

    q = np.full((pc.size, hi - lo + 1), 1.0 / (hi - lo + 1))
    scale = -math.log(max(float(np.sum(pc[:, None] * pxc * means**2)), 1e-12))
    lo_b, hi_b = scale + math.log(1e-4), scale + math.log(1e8)
    best_dec, steps = None, settings.bisection_steps
    if hint and "log_beta" in hint:
        # try a narrow bracket around the previous slope first
        a, b = hint["log_beta"] - 2.0, hint["log_beta"] + 2.0
        dec_a, q_a, ok_a = attempt(a, q)
        if ok_a:
            best_dec, q, lo_b = dec_a, q_a, a
            dec_b, q_b, ok_b = attempt(b, q)
            if ok_b:
                best_dec, q, lo_b = dec_b, q_b, b
            else:
                hi_b = b
                steps = max(steps // 2, 1)
    for _ in range(steps):
        mid = 0.5 * (lo_b + hi_b)
        dec, q_mid, ok = attempt(mid, q)
        if ok:
            best_dec, lo_b, q = dec, mid, q_mid
        else:
            hi_b = mid
    if best_dec is None:
        return blind.copy()
    if hint is not None:
        hint["log_beta"] = lo_b
    full = blind.copy()
    sub = np.zeros((pc.size, nx, nu2))
    sub[:, :, lo : hi + 1] = best_dec
    full[:, cw, cy, :] = np.transpose(sub, (1, 0, 2))
    return full


def _feedback_slack(model: DiscreteModel, design: FeedbackNoncausalDesign) -> float:
    mom = _feedback_moments(model, design.pW1, design.enc)
    pxwyu = mom.p[..., None] * design.dec
    joint = JointPmf(("X0", "W1", "Y1", "U2"), pxwyu / pxwyu.sum())
    return info_constraint_value(joint)


def _fb_objective(cost: CostPair, lam: float, slack: float, mu: float) -> float:
    return cost.S + lam * cost.P + mu * max(0.0, -slack) ** 2


def _alternate_feedback(model, lam, pW1, enc_idx, settings, x0_blind, mu):
    order = _encoder_order(model)
    nu1 = len(model.u1_grid)
    u2 = model.u2_grid.points

    hint: dict = {}

    def evaluate(ei):
        enc = point_mass_rows(ei, nu1)
        dec = _feedback_decoder(model, _feedback_moments(model, pW1, enc), x0_blind, settings, hint)
        design = FeedbackNoncausalDesign(pW1, enc, dec)
        cost = feedback_design_costs(design, model)
        slack = _feedback_slack(model, design)
        return design, cost, slack, _fb_objective(cost, lam, slack, mu)

    design, cost, slack, obj = evaluate(enc_idx)
    history = [obj]
    for _ in range(settings.max_alternations):
        m1 = design.dec @ u2
        m2 = design.dec @ u2**2
        new_idx = _improve_rows(_row_costs(model, lam, m1, m2), enc_idx, order)
        if np.array_equal(new_idx, enc_idx):
            break
        cand = evaluate(new_idx)
        if cand[3] >= obj - settings.tol:
            break
        enc_idx = new_idx
        design, cost, slack, obj = cand
        history.append(obj)
    return OperatingPoint(cost, design, obj, tuple(history), float(lam), slack)


def _signalling_starts(model: DiscreteModel, settings: SolverSettings, w1_size: int):
    """Affine encoders shifted by a W1-dependent offset so W1 is visible in Y1."""
    if w1_size < 2:
        return []
    sn = math.sqrt(model.params.N)
    offsets = np.linspace(-1.0, 1.0, w1_size) * sn
    starts = []
    gains = settings.affine_starts
    for a in sorted({gains[0], gains[len(gains) // 2], gains[-1]}):
        vals = a * model.x0_grid.points[:, None] + offsets[None, :]
        starts.append(model.u1_grid.quantize(vals))
    return starts


def solve_noncausal_feedback(model: DiscreteModel, w1_size: int, settings: SolverSettings,
                             x0_blind: bool = False) -> Frontier:
    """Frontier of the causal-encoder / noncausal-decoder-with-feedback region.

    Every returned point satisfies the information constraint within
    ``FEASIBILITY_TOL``. With ``x0_blind`` the decoder may not look at x0.
    """
    if w1_size < 1:
        raise ValueError("w1_size must be >= 1")
    mu = settings.penalty_weight(model)

    def solve_one(i, lam):
        causal = optimize_operating_point(model, lam, settings, i)
        warm = FeedbackNoncausalDesign.from_causal(causal.design, model)
        enc_idx = np.argmax(warm.enc, axis=-1)
        starts = [(np.ones(1), enc_idx)]
        pw = np.full(w1_size, 1.0 / w1_size)
        for s in _signalling_starts(model, settings, w1_size):
            starts.append((pw, s))
        for s in _starting_encoders(model, settings, i, w1_size)[len(settings.affine_starts):]:
            starts.append((pw, s))
        best = None
        for p, s in starts:
            res = _alternate_feedback(model, lam, p, s, settings, x0_blind, mu)
            if best is None or res.objective < best.objective:
                best = res
        if best.design.w1_size != w1_size:
            best = best._replace(design=_pad_w1(best.design, w1_size))
        return best

    results = _run_items(solve_one, list(enumerate(settings.lambdas)), settings.workers)
    designs, raw, warnings = [], [], []
    for r in results:
        if r.slack < -FEASIBILITY_TOL:
            warnings.append({"lambda": r.lam, "slack": r.slack, "reason": "infeasible"})
            log.warning("lambda=%g: no feasible design (slack %.3g); point omitted", r.lam, r.slack)
            continue
        raw.append(FrontierPoint(r.cost, len(designs), r.lam, r.slack))
        designs.append(r.design)
    return Frontier(
        _convexify(raw),
        designs,
        raw,
        metadata={"kind": "feedback_noncausal", "w1_size": w1_size, "x0_blind": x0_blind,
                  "penalty": mu, "n_lambdas": len(settings.lambdas)},
        warnings=warnings,
    )


def _pad_w1(design: FeedbackNoncausalDesign, w1_size: int) -> FeedbackNoncausalDesign:
    """Same joint law with a larger W1 alphabet: extra symbols get zero probability."""
    k = w1_size - design.w1_size
    pw = np.concatenate([design.pW1, np.zeros(k)])
    enc = np.concatenate([design.enc, np.repeat(design.enc[:, :1], k, axis=1)], axis=1)
    dec = np.concatenate([design.dec, np.repeat(design.dec[:, :1], k, axis=1)], axis=1)
    return FeedbackNoncausalDesign(pw, enc, dec)


__all__ = [
    "SolverSettings",
    "OperatingPoint",
    "Frontier",
    "FrontierPoint",
    "mmse_decoder",
    "optimize_operating_point",
    "pareto_frontier_causal",
    "solve_noncausal_feedback",
    "convex_envelope",
    "default_lambdas",
]
