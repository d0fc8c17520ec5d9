"""Batch entry point: ``witscoord --config run.json --out results/``.

Every run writes its outputs plus ``manifest.json`` (config echo, seed,
package version, wall time, and a sha256 for each emitted file). On failure a
JSON error record goes to stderr and to ``error.json`` in the output directory.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .affine import AffinePolicy, affine_costs, gaussian_frontier_sample
from .binary_example import verify_infeasibility_report
from .designs import (CausalDesign, affine_encoder, assemble_joint_causal, design_to_dict,
                      load_design, zero_design)
from .errors import ConfigError
from .model import DiscreteModel, ModelParams, cost_pair_from_joint
from .simulator import (Scenario, StationaryPolicy, feedback_containment_check, run_block,
                        verify_achievability)
from .solver import (SolverSettings, default_lambdas, mmse_decoder, pareto_frontier_causal,
                     solve_noncausal_feedback)

COMMANDS = ("region", "region-feedback", "simulate", "verify", "binary-example", "affine", "containment")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Strict):
    Q: float = Field(gt=0, allow_inf_nan=False)
    N: float = Field(gt=0, allow_inf_nan=False)


class GridSection(_Strict):
    points: int = Field(64, ge=2, le=1024)
    span: float = Field(4.0, gt=0, le=20)
    u2_points: Optional[int] = Field(None, ge=3, le=4097)


class SolverSection(_Strict):
    lambdas: Optional[list[float]] = None
    n_lambdas: int = Field(25, ge=1, le=1000)
    lambda_min: float = Field(1e-3, gt=0)
    lambda_max: float = Field(1e3, gt=0)
    restarts: int = Field(2, ge=1, le=1000)
    max_alternations: int = Field(50, ge=1, le=10_000)
    w1_size: int = Field(2, ge=1, le=16)
    x0_blind: bool = False

    @field_validator("lambdas")
    @classmethod
    def _lams(cls, v):
        if v is not None and (not v or any(not (math.isfinite(x) and x >= 0) for x in v)):
            raise ValueError("lambdas must be a nonempty list of finite values >= 0")
        return v

    def schedule(self) -> tuple[float, ...]:
        if self.lambdas is not None:
            return tuple(self.lambdas)
        return default_lambdas(self.n_lambdas, self.lambda_min, self.lambda_max)


class SimulatorSection(_Strict):
    n: int = Field(100_000, ge=1, le=100_000_000)
    seeds: int = Field(20, ge=1, le=10_000)
    n_schedule: list[int] = Field(default_factory=lambda: [1000, 10_000, 100_000])
    scenario: Literal["CausalCausal", "CausalCausalFeedback", "CausalCausalFeedbackGenie"] = "CausalCausal"
    mode: Literal["continuous", "lattice"] = "continuous"
    design: Optional[str] = None
    affine_gain: float = Field(0.0, allow_inf_nan=False)
    trials: int = Field(200, ge=0)
    genie_trials: int = Field(50, ge=0)
    eps_target: Optional[float] = Field(None, gt=0)


class AffineSection(_Strict):
    gains: Optional[list[float]] = None
    n_gains: int = Field(41, ge=1, le=100_000)
    gain_min: float = -1.0
    gain_max: float = 0.0


class RunConfig(_Strict):
    command: Literal["region", "region-feedback", "simulate", "verify", "binary-example", "affine", "containment"]
    model: ModelSection
    grids: GridSection = GridSection()
    solver: SolverSection = SolverSection()
    simulator: SimulatorSection = SimulatorSection()
    affine: AffineSection = AffineSection()
    seed: int = Field(0, ge=0, lt=2**64)
    out: Optional[str] = None


def _format_errors(err: ValidationError) -> str:
    unknown, other = [], []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            unknown.append(loc)
        else:
            ctx = e.get("ctx") or {}
            bound = ", ".join(f"{k} {v}" for k, v in ctx.items() if k in ("gt", "ge", "lt", "le"))
            other.append(f"{loc}: {e['msg']}" + (f" (bound: {bound})" if bound else ""))
    parts = []
    if unknown:
        parts.append("unknown keys: " + ", ".join(unknown))
    parts.extend(other)
    return "; ".join(parts)


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc


def serialize_config(cfg: RunConfig) -> str:
    return cfg.model_dump_json(indent=2)


# -- experiments -------------------------------------------------------------


class _Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def write(self, name: str, data) -> None:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with open(path, mode, **kw) as fh:
            fh.write(data)
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _model(cfg: RunConfig) -> DiscreteModel:
    p = ModelParams(cfg.model.Q, cfg.model.N)
    return DiscreteModel.build(p, cfg.grids.points, cfg.grids.span, cfg.grids.u2_points)


def _settings(cfg: RunConfig, threads: int) -> SolverSettings:
    return SolverSettings(
        lambdas=cfg.solver.schedule(),
        restarts=cfg.solver.restarts,
        max_alternations=cfg.solver.max_alternations,
        seed=cfg.seed,
        workers=threads,
    )


def _seeds(cfg: RunConfig) -> list[int]:
    ss = np.random.SeedSequence(cfg.seed)
    return [int(s) for s in ss.generate_state(cfg.simulator.seeds, dtype=np.uint32)]


def _design(cfg: RunConfig, model: DiscreteModel) -> tuple[CausalDesign, DiscreteModel]:
    if cfg.simulator.design:
        design, dmodel = load_design(cfg.simulator.design)
        if not isinstance(design, CausalDesign):
            raise ConfigError("simulator.design must hold a causal design")
        return design, dmodel
    if cfg.simulator.affine_gain == 0.0:
        return zero_design(model), model
    enc = affine_encoder(model, cfg.simulator.affine_gain)
    return CausalDesign(np.ones(1), enc, mmse_decoder(enc, 0, model)[None]), model


def _frontier_outputs(out: _Outputs, frontier, model, prefix: str) -> None:
    out.write(f"{prefix}.csv", frontier.to_csv("envelope"))
    out.write(f"{prefix}_raw.csv", frontier.to_csv("raw"))
    for p in frontier.points:
        out.json(f"designs/{prefix}_{p.design_id:03d}.json", design_to_dict(frontier.designs[p.design_id], model))
    if frontier.warnings:
        out.json(f"{prefix}_warnings.json", frontier.warnings)


def _run_region(cfg, out, threads, dump):
    model = _model(cfg)
    frontier = pareto_frontier_causal(model, _settings(cfg, threads))
    _frontier_outputs(out, frontier, model, "frontier")


def _run_region_feedback(cfg, out, threads, dump):
    model = _model(cfg)
    settings = _settings(cfg, threads)
    fb = solve_noncausal_feedback(model, cfg.solver.w1_size, settings, x0_blind=cfg.solver.x0_blind)
    causal = pareto_frontier_causal(model, settings)
    _frontier_outputs(out, fb, model, "frontier_feedback")
    out.write("frontier_causal.csv", causal.to_csv("envelope"))
    buf = ["P,S_feedback,S_causal,gap\n"]
    for p in fb.points:
        s_c = causal.s_at(p.cost.P)
        buf.append(f"{p.cost.P!r},{p.cost.S!r},{s_c!r},{s_c - p.cost.S!r}\n")
    out.write("feedback_gap.csv", "".join(buf))


def _run_simulate(cfg, out, threads, dump):
    model = _model(cfg)
    design, dmodel = _design(cfg, model)
    policy = StationaryPolicy.from_design(design, dmodel)
    scen = Scenario(cfg.simulator.scenario)
    rows = ["seed,c_P,c_S,se_P,se_S\n"]
    cps, css = [], []
    for s in _seeds(cfg):
        r = run_block(policy, scen, dmodel, cfg.simulator.n, s, cfg.simulator.mode)
        cps.append(r.c_P)
        css.append(r.c_S)
        rows.append(f"{s},{r.c_P!r},{r.c_S!r},{r.se_P!r},{r.se_S!r}\n")
        if dump:
            out.write(f"trajectories/seed_{s}.bin", r.trajectory.rows().tobytes())
    out.write("simulate.csv", "".join(rows))
    target = cost_pair_from_joint(assemble_joint_causal(design, dmodel), dmodel)
    k = len(cps)
    out.json("simulate_summary.json", {
        "scenario": scen.value, "n": cfg.simulator.n, "mode": cfg.simulator.mode,
        "mean_P": float(np.mean(cps)), "mean_S": float(np.mean(css)),
        "se_P": float(np.std(cps, ddof=1) / math.sqrt(k)) if k > 1 else None,
        "se_S": float(np.std(css, ddof=1) / math.sqrt(k)) if k > 1 else None,
        "design_P": target.P, "design_S": target.S,
    })


def _run_verify(cfg, out, threads, dump):
    model = _model(cfg)
    design, dmodel = _design(cfg, model)
    target = cost_pair_from_joint(assemble_joint_causal(design, dmodel), dmodel)
    rep = verify_achievability(design, dmodel, target, cfg.simulator.n_schedule, _seeds(cfg),
                               cfg.simulator.eps_target, cfg.simulator.mode)
    out.write("achievability.csv", rep.to_csv())
    out.json("achievability.json", {
        "targets": {"P": target.P, "S": target.S},
        "n_schedule": rep.n_schedule, "mean_gap": rep.mean_gap, "se_gap": rep.se_gap,
        "nonincreasing": rep.nonincreasing, "slope": rep.slope,
        "eps_target": rep.eps_target, "final_ok": rep.final_ok, "mode": cfg.simulator.mode,
    })


def _run_binary(cfg, out, threads, dump):
    rep = verify_infeasibility_report(seed=cfg.seed)
    out.json("binary_example.json", rep.to_dict())
    out.write("binary_example.txt", rep.text() + "\n")


def _run_affine(cfg, out, threads, dump):
    m = ModelParams(cfg.model.Q, cfg.model.N)
    a = cfg.affine
    gains = a.gains if a.gains is not None else np.linspace(a.gain_min, a.gain_max, a.n_gains)
    curve = gaussian_frontier_sample(m, gains)
    rows = ["a,P,S\n"] + [f"{g!r},{c.P!r},{c.S!r}\n" for g, c in zip(curve.gains, curve.points)]
    out.write("affine_curve.csv", "".join(rows))
    out.write("affine_envelope.csv", "".join(["P,S\n"] + [f"{c.P!r},{c.S!r}\n" for c in curve.envelope]))
    ends = [affine_costs(AffinePolicy(0.0), m), affine_costs(AffinePolicy(-1.0), m)]
    out.json("affine_anchors.json", {"zero_policy": ends[0].as_tuple(), "zero_forcing": ends[1].as_tuple()})


def _run_containment(cfg, out, threads, dump):
    model = _model(cfg)
    frontier = pareto_frontier_causal(model, _settings(cfg, threads))
    rep = feedback_containment_check(model, frontier, cfg.simulator.trials, cfg.seed,
                                     n=cfg.simulator.n, genie_trials=cfg.simulator.genie_trials)
    out.write("frontier.csv", frontier.to_csv("envelope"))
    out.write("containment.csv", rep.to_csv())
    out.json("containment.json", {"violations": rep.violations, "blind_identical": rep.blind_identical,
                                  "passed": rep.passed, "policies": len(rep.rows), "n": rep.n})


_DISPATCH = {
    "region": _run_region,
    "region-feedback": _run_region_feedback,
    "simulate": _run_simulate,
    "verify": _run_verify,
    "binary-example": _run_binary,
    "affine": _run_affine,
    "containment": _run_containment,
}


def dispatch(cfg: RunConfig, out_dir, threads: int = 1, dump_trajectories: bool = False) -> list[str]:
    """Run the experiment and write outputs plus the manifest; returns the emitted file names."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    out = _Outputs(root)
    t0 = time.perf_counter()
    _DISPATCH[cfg.command](cfg, out, threads, dump_trajectories)
    wall = time.perf_counter() - t0
    files = {name: hashlib.sha256((root / name).read_bytes()).hexdigest() for name in out.files}
    manifest = {
        "config": json.loads(serialize_config(cfg)),
        "seed": cfg.seed,
        "version": __version__,
        "wall_time_s": wall,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "threads": threads,
        "files": files,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out.files


def _error_record(exc: BaseException) -> dict:
    return {"error": type(exc).__name__, "message": str(exc)}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="witscoord", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="path to a JSON run config")
    ap.add_argument("--out", help="output directory (overrides config 'out')")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    ap.add_argument("--dump-trajectories", action="store_true",
                    help="write binary trajectories (simulate only)")
    args = ap.parse_args(argv)

    out_dir = args.out
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        if args.seed is not None:
            cfg = RunConfig.model_validate({**cfg.model_dump(), "seed": args.seed})
        out_dir = out_dir or cfg.out
        if not out_dir:
            raise ConfigError("no output directory: pass --out or set 'out' in the config")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        files = dispatch(cfg, out_dir, args.threads, args.dump_trajectories)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        if isinstance(exc, ValidationError):
            exc = ConfigError(_format_errors(exc))
        rec = _error_record(exc)
        print(json.dumps(rec), file=sys.stderr)
        if out_dir:
            try:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                (Path(out_dir) / "error.json").write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")
            except OSError:
                pass
        return 2 if isinstance(exc, ConfigError) else 1
    print(json.dumps({"status": "ok", "files": files}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
