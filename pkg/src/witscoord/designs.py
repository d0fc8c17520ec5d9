"""Single-letter strategies and their assembly into joint pmf tensors.

Kernel layouts (rows are pmfs over the last axis):

* ``CausalDesign``: ``enc[x0, t, u1]``, ``dec[t, y1, u2]``
* ``FeedbackNoncausalDesign``: ``enc[x0, w1, u1]``, ``dec[x0, w1, y1, u2]``
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPmfError, SchemaError
from .measures import JointPmf, conditional_mutual_information
from .model import CostPair, DiscreteModel, Grid, ModelParams

ROW_TOL = 1e-10


def _check_pmf(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidPmfError(f"{name} has negative or non-finite entries")
    if np.max(np.abs(arr.sum(axis=-1) - 1.0)) > ROW_TOL:
        raise InvalidPmfError(f"{name} rows do not sum to 1")
    arr.setflags(write=False)
    return arr


def point_mass_rows(indices, size: int) -> np.ndarray:
    """One-hot rows: ``out[..., k] = 1`` where ``k = indices[...]``."""
    idx = np.asarray(indices)
    out = np.zeros(idx.shape + (size,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


@dataclass(frozen=True, eq=False)
class CausalDesign:
    pT: np.ndarray
    enc: np.ndarray
    dec: np.ndarray

    def __post_init__(self):
        pT = _check_pmf("pT", self.pT)
        enc = _check_pmf("encoder", self.enc)
        dec = _check_pmf("decoder", self.dec)
        if pT.ndim != 1 or pT.size not in (1, 2):
            raise SchemaError(f"|T| must be 1 or 2, got pT of shape {pT.shape}")
        if enc.ndim != 3 or enc.shape[1] != pT.size:
            raise SchemaError(f"encoder shape {enc.shape} incompatible with |T|={pT.size}")
        if dec.ndim != 3 or dec.shape[0] != pT.size:
            raise SchemaError(f"decoder shape {dec.shape} incompatible with |T|={pT.size}")
        object.__setattr__(self, "pT", pT)
        object.__setattr__(self, "enc", enc)
        object.__setattr__(self, "dec", dec)

    @property
    def n_t(self) -> int:
        return self.pT.size

    def check_model(self, model: DiscreteModel) -> None:
        nx, nu1, ny, nu2 = (len(g) for g in model.grids().values())
        if self.enc.shape[0] != nx or self.enc.shape[2] != nu1:
            raise SchemaError(f"encoder shape {self.enc.shape} vs grids ({nx}, ·, {nu1})")
        if self.dec.shape[1:] != (ny, nu2):
            raise SchemaError(f"decoder shape {self.dec.shape} vs grids (·, {ny}, {nu2})")

    def component(self, t: int) -> "CausalDesign":
        """The |T|=1 design used on time-sharing symbol ``t``."""
        return CausalDesign(np.ones(1), self.enc[:, t : t + 1], self.dec[t : t + 1])


@dataclass(frozen=True, eq=False)
class FeedbackNoncausalDesign:
    pW1: np.ndarray
    enc: np.ndarray
    dec: np.ndarray

    def __post_init__(self):
        pw = _check_pmf("pW1", self.pW1)
        enc = _check_pmf("encoder", self.enc)
        dec = _check_pmf("decoder", self.dec)
        if pw.ndim != 1:
            raise SchemaError("pW1 must be a vector")
        if enc.ndim != 3 or enc.shape[1] != pw.size:
            raise SchemaError(f"encoder shape {enc.shape} incompatible with |W1|={pw.size}")
        if dec.ndim != 4 or dec.shape[:2] != (enc.shape[0], pw.size):
            raise SchemaError(f"decoder shape {dec.shape} incompatible with encoder")
        object.__setattr__(self, "pW1", pw)
        object.__setattr__(self, "enc", enc)
        object.__setattr__(self, "dec", dec)

    @property
    def w1_size(self) -> int:
        return self.pW1.size

    def check_model(self, model: DiscreteModel) -> None:
        nx, nu1, ny, nu2 = (len(g) for g in model.grids().values())
        if self.enc.shape[0] != nx or self.enc.shape[2] != nu1:
            raise SchemaError(f"encoder shape {self.enc.shape} vs grids")
        if self.dec.shape[2:] != (ny, nu2):
            raise SchemaError(f"decoder shape {self.dec.shape} vs grids")

    @classmethod
    def from_causal(cls, design: CausalDesign, model: DiscreteModel) -> "FeedbackNoncausalDesign":
        """Embed a causal design: W1 plays the role of T and the decoder ignores x0."""
        nx = len(model.x0_grid)
        dec = np.broadcast_to(design.dec[None], (nx,) + design.dec.shape)
        return cls(design.pT, design.enc, dec)


# -- constructors -------------------------------------------------------------


def _nearest(grid: Grid, values) -> np.ndarray:
    return grid.quantize(values)


def zero_design(model: DiscreteModel) -> CausalDesign:
    """u1 = 0 and u2 = 0 with |T| = 1."""
    nx, ny = len(model.x0_grid), len(model.y1_grid)
    enc = point_mass_rows(np.full((nx, 1), _nearest(model.u1_grid, 0.0)), len(model.u1_grid))
    dec = point_mass_rows(np.full((1, ny), _nearest(model.u2_grid, 0.0)), len(model.u2_grid))
    return CausalDesign(np.ones(1), enc, dec)


def affine_encoder(model: DiscreteModel, gain: float) -> np.ndarray:
    """Encoder rows ``u1 = gain * x0`` snapped to the U1 grid, shape (nx0, 1, nu1)."""
    idx = _nearest(model.u1_grid, gain * model.x0_grid.points)
    return point_mass_rows(idx[:, None], len(model.u1_grid))


def timeshare(d1: CausalDesign, d2: CausalDesign, theta: float) -> CausalDesign:
    """|T|=2 design using ``d1`` on a fraction ``theta`` of the block and ``d2`` elsewhere."""
    if d1.n_t != 1 or d2.n_t != 1:
        raise SchemaError("time-sharing combines two |T|=1 designs")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    return CausalDesign(
        np.array([theta, 1.0 - theta]),
        np.concatenate([d1.enc, d2.enc], axis=1),
        np.concatenate([d1.dec, d2.dec], axis=0),
    )


def random_causal_design(model: DiscreteModel, rng: np.random.Generator, n_t: int = 1,
                         concentration: float = 0.3) -> CausalDesign:
    """Design with Dirichlet-random pT and kernel rows."""
    nx, nu1, ny, nu2 = (len(g) for g in model.grids().values())
    pT = rng.dirichlet(np.ones(n_t)) if n_t > 1 else np.ones(1)
    enc = rng.dirichlet(np.full(nu1, concentration), size=(nx, n_t))
    dec = rng.dirichlet(np.full(nu2, concentration), size=(n_t, ny))
    return CausalDesign(pT, enc, dec)


# -- assembly -----------------------------------------------------------------


def assemble_joint_causal(design: CausalDesign, model: DiscreteModel) -> JointPmf:
    design.check_model(model)
    data = np.einsum(
        "i,t,itj,ijk,tkl->itjkl",
        model.source_pmf, design.pT, design.enc, model.channel_kernel, design.dec,
    )
    return JointPmf(("X0", "T", "U1", "Y1", "U2"), data)


def assemble_joint_feedback(design: FeedbackNoncausalDesign, model: DiscreteModel) -> JointPmf:
    design.check_model(model)
    data = np.einsum(
        "i,w,iwj,ijk,iwkl->iwjkl",
        model.source_pmf, design.pW1, design.enc, model.channel_kernel, design.dec,
    )
    return JointPmf(("X0", "W1", "U1", "Y1", "U2"), data)


def causal_design_costs(design: CausalDesign, model: DiscreteModel) -> CostPair:
    """Same value as ``cost_pair_from_joint(assemble_joint_causal(...))`` without the 5-d tensor."""
    design.check_model(model)
    u1 = model.u1_grid.points
    u2 = model.u2_grid.points
    x1 = model.x1_values
    w = model.source_pmf[:, None, None] * design.pT[None, :, None] * design.enc  # (x0, t, u1)
    P = float(np.einsum("itj,j->", w, u1**2))
    m1 = design.dec @ u2  # (t, y1)
    m2 = design.dec @ u2**2
    K = model.channel_kernel
    cond = (
        x1[:, None, :] ** 2
        - 2 * x1[:, None, :] * np.einsum("ijk,tk->itj", K, m1)
        + np.einsum("ijk,tk->itj", K, m2)
    )
    return CostPair(P, float(np.sum(w * cond)))


def feedback_design_costs(design: FeedbackNoncausalDesign, model: DiscreteModel) -> CostPair:
    design.check_model(model)
    u1 = model.u1_grid.points
    u2 = model.u2_grid.points
    x1 = model.x1_values
    w = model.source_pmf[:, None, None] * design.pW1[None, :, None] * design.enc  # (x0, w, u1)
    P = float(np.einsum("iwj,j->", w, u1**2))
    m1 = design.dec @ u2  # (x0, w, y1)
    m2 = design.dec @ u2**2
    K = model.channel_kernel
    cond = (
        x1[:, None, :] ** 2
        - 2 * x1[:, None, :] * np.einsum("ijk,iwk->iwj", K, m1)
        + np.einsum("ijk,iwk->iwj", K, m2)
    )
    return CostPair(P, float(np.sum(w * cond)))


# -- Markov-structure checks -------------------------------------------------


@dataclass(frozen=True)
class MarkovReport:
    """Residuals of the three structural properties of an assembled joint.

    ``independence``: max |p(x0, a) - p(x0) p(a)| for the auxiliary a.
    ``channel``: I(Y1; a | X0, U1).
    ``decoder``: I(U2; <excluded inputs> | <decoder inputs>).
    """

    independence: float
    channel: float
    decoder: float

    def ok(self, tol: float = 1e-9) -> bool:
        return max(self.independence, self.channel, self.decoder) <= tol


def _independence_residual(joint: JointPmf, aux: str) -> float:
    pxa = joint.marginal(("X0", aux))
    return float(np.max(np.abs(pxa - np.outer(pxa.sum(1), pxa.sum(0)))))


def validate_markov_causal(joint: JointPmf) -> MarkovReport:
    joint.require(("X0", "T", "U1", "Y1", "U2"))
    return MarkovReport(
        _independence_residual(joint, "T"),
        conditional_mutual_information(joint, "Y1", "T", ("X0", "U1")),
        conditional_mutual_information(joint, "U2", ("X0", "U1"), ("T", "Y1")),
    )


def validate_markov_feedback(joint: JointPmf) -> MarkovReport:
    joint.require(("X0", "W1", "U1", "Y1", "U2"))
    return MarkovReport(
        _independence_residual(joint, "W1"),
        conditional_mutual_information(joint, "Y1", "W1", ("X0", "U1")),
        conditional_mutual_information(joint, "U2", "U1", ("X0", "W1", "Y1")),
    )


# -- JSON ---------------------------------------------------------------------


def design_to_dict(design, model: DiscreteModel) -> dict:
    if isinstance(design, CausalDesign):
        kind, aux = "causal", {"pT": design.pT.tolist()}
    elif isinstance(design, FeedbackNoncausalDesign):
        kind, aux = "feedback_noncausal", {"pW1": design.pW1.tolist()}
    else:
        raise TypeError(f"cannot serialize {type(design).__name__}")
    return {
        "kind": kind,
        "params": {"Q": model.params.Q, "N": model.params.N},
        "grids": {k: g.points.tolist() for k, g in model.grids().items()},
        **aux,
        "enc_shape": list(design.enc.shape),
        "enc": design.enc.ravel().tolist(),
        "dec_shape": list(design.dec.shape),
        "dec": design.dec.ravel().tolist(),
    }


def design_from_dict(d: dict):
    """Inverse of :func:`design_to_dict`; returns ``(design, model)``."""
    try:
        params = ModelParams(**d["params"])
        grids = {k: Grid(np.asarray(v), k) for k, v in d["grids"].items()}
        model = DiscreteModel.from_grids(params, grids["X0"], grids["U1"], grids["Y1"], grids["U2"])
        enc = np.asarray(d["enc"], dtype=float).reshape(d["enc_shape"])
        dec = np.asarray(d["dec"], dtype=float).reshape(d["dec_shape"])
        kind = d["kind"]
    except KeyError as exc:
        raise SchemaError(f"design document lacks field {exc}") from None
    if kind == "causal":
        design = CausalDesign(np.asarray(d["pT"]), enc, dec)
    elif kind == "feedback_noncausal":
        design = FeedbackNoncausalDesign(np.asarray(d["pW1"]), enc, dec)
    else:
        raise SchemaError(f"unknown design kind {kind!r}")
    design.check_model(model)
    return design, model


def dump_design(design, model: DiscreteModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(design_to_dict(design, model), fh)


def load_design(path):
    with open(path, encoding="utf-8") as fh:
        return design_from_dict(json.load(fh))
