import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import norm

from witscoord.designs import (CausalDesign, affine_encoder, assemble_joint_causal,
                               point_mass_rows, random_causal_design, zero_design)
from witscoord.model import CostPair, DiscreteModel, Grid, ModelParams, cost_pair_from_joint
from witscoord.simulator import (Scenario, StationaryPolicy, empirical_joint_type,
                                 make_tshare_sequence, run_block, simulate,
                                 stationary_averaged_encoder, total_variation,
                                 verify_achievability)
from witscoord.solver import mmse_decoder


def affine_design(model, a):
    enc = affine_encoder(model, a)
    return CausalDesign(np.ones(1), enc, mmse_decoder(enc, 0, model)[None])


def test_tshare_examples():
    assert make_tshare_sequence([1.0], 5).tolist() == [0] * 5
    s = make_tshare_sequence([0.5, 0.5], 4)
    assert np.bincount(s).tolist() == [2, 2]
    assert np.bincount(make_tshare_sequence([0.3, 0.7], 10)).tolist() == [3, 7]
    with pytest.raises(ValueError):
        make_tshare_sequence([0.5, 0.5], 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.integers(2, 500))
def test_tshare_counts_largest_remainder(p, n):
    s = make_tshare_sequence([p, 1 - p], n)
    counts = np.bincount(s, minlength=2)
    assert counts.sum() == n
    assert np.all(np.abs(counts - n * np.array([p, 1 - p])) < 1.0 + 1e-9)


def test_run_block_rejects_bad_args(model16):
    pol = StationaryPolicy.from_design(zero_design(model16), model16)
    with pytest.raises(ValueError):
        run_block(pol, Scenario.CAUSAL, model16, 0, 0)
    with pytest.raises(ValueError):
        run_block(pol, Scenario.CAUSAL, model16, 10, 0, mode="exact")


def test_zero_policy(model16):
    pol = StationaryPolicy.from_design(zero_design(model16), model16)
    hits = 0
    for seed in range(20):
        r = run_block(pol, Scenario.CAUSAL, model16, 100_000, seed)
        assert r.c_P == 0.0
        hits += abs(r.c_S - 1.0) <= 0.02
    assert hits >= 19


def quantizer_mse(grid, std):
    """E[(X - q(X))^2] for X ~ N(0, std^2) by numerical integration over the cells."""
    edges = np.concatenate(([-np.inf], grid.edges, [np.inf]))
    pdf = norm(0, std).pdf
    return sum(
        integrate.quad(lambda x, c=c: (x - c) ** 2 * pdf(x), a, b, epsabs=1e-15)[0]
        for a, b, c in zip(edges[:-1], edges[1:], grid.points)
    )


def test_zero_forcing_hits_quantization_floor():
    params = ModelParams(1.0, 1.0)
    x0 = Grid.uniform("X0", 256, 5.0)
    u1 = Grid(np.union1d(-x0.points[::-1], [0.0]), "U1")
    m = DiscreteModel.from_grids(params, x0, u1, Grid.uniform("Y1", 8, 6.0), Grid.uniform("U2", 5, 2.0))
    enc = point_mass_rows(u1.quantize(-x0.points)[:, None], len(u1))
    dec = point_mass_rows(np.full((1, 8), 2), 5)
    pol = StationaryPolicy.from_design(CausalDesign(np.ones(1), enc, dec), m)
    r = run_block(pol, Scenario.CAUSAL, m, 100_000, 7)
    oracle = quantizer_mse(x0, 1.0)
    width = x0.points[1] - x0.points[0]
    tail = 2 * integrate.quad(lambda x: (x - 5.0) ** 2 * norm.pdf(x), 5.0 + width / 2, np.inf)[0]
    assert oracle <= width**2 / 12 + tail
    assert abs(r.c_S - oracle) <= 4 * r.se_S
    assert r.c_S <= width**2 / 12 + tail + 4 * r.se_S


def test_feedback_blind_policy_reproduces_trajectory(model16, rng):
    d = random_causal_design(model16, rng, 2)
    plain = StationaryPolicy.from_design(d, model16)
    blind = plain.with_feedback_encoder(np.array(plain.enc))
    a = run_block(plain, Scenario.CAUSAL, model16, 20_000, 3)
    b = run_block(blind, Scenario.FEEDBACK, model16, 20_000, 3)
    c = run_block(blind, Scenario.GENIE, model16, 20_000, 3)
    for f in ("x0", "u1", "x1", "y1", "u2"):
        assert np.array_equal(getattr(a.trajectory, f), getattr(b.trajectory, f))
        assert np.array_equal(getattr(a.trajectory, f), getattr(c.trajectory, f))


def test_decoder_swap_leaves_power_unchanged(model16):
    d = affine_design(model16, -0.4)
    other = CausalDesign(d.pT, d.enc, point_mass_rows(np.zeros((1, len(model16.y1_grid)), int), len(model16.u2_grid)))
    a = run_block(StationaryPolicy.from_design(d, model16), Scenario.CAUSAL, model16, 10_000, 1)
    b = run_block(StationaryPolicy.from_design(other, model16), Scenario.CAUSAL, model16, 10_000, 1)
    assert a.c_P == b.c_P and a.c_S != b.c_S


def test_genie_with_stale_source_only(model16):
    """u2 = snap(0.5 * x0_prev) with u1 = 0: x0_prev is independent of x1, so c_S = Q + E[u2^2]."""
    m = model16
    nx, ny, nu2 = len(m.x0_grid), len(m.y1_grid), len(m.u2_grid)
    stale = np.append(m.u2_grid.quantize(0.5 * m.x0_grid.points), m.u2_grid.quantize(0.0))
    dec_g = point_mass_rows(np.broadcast_to(stale, (ny, nx + 1)), nu2)[None]
    pol = StationaryPolicy.from_design(zero_design(m), m).with_genie_decoder(dec_g)
    r = run_block(pol, Scenario.GENIE, m, 100_000, 11)
    oracle = m.params.Q + float(m.source_pmf @ m.u2_grid.points[stale[:-1]] ** 2)
    assert abs(r.c_S - oracle) <= 4 * r.se_S + 0.01
    assert r.c_S >= m.params.Q - 4 * r.se_S
    # the same decoder without the genie input sees only the empty slot: u2 = 0, c_S ~ Q
    r0 = run_block(pol, Scenario.CAUSAL, m, 100_000, 11)
    assert abs(r0.c_S - m.params.Q) <= 4 * r0.se_S


def test_lattice_mode_is_unbiased_for_discrete_costs(model16, rng):
    d = random_causal_design(model16, rng, 2)
    target = cost_pair_from_joint(assemble_joint_causal(d, model16), model16)
    res = simulate(StationaryPolicy.from_design(d, model16), Scenario.CAUSAL, model16, 20_000,
                   range(10), targets=target, mode="lattice")
    se_p, se_s = res.stderr
    assert abs(res.mean.P - target.P) <= 4 * se_p
    assert abs(res.mean.S - target.S) <= 4 * se_s


@pytest.mark.parametrize("mode", ["lattice", "continuous"])
def test_empirical_type_converges(model16, mode):
    d = affine_design(model16, -0.4)
    j = assemble_joint_causal(d, model16)
    r = run_block(StationaryPolicy.from_design(d, model16), Scenario.CAUSAL, model16, 100_000, 0, mode)
    assert total_variation(empirical_joint_type(r.trajectory, model16), j.data) <= 0.05


def test_trajectory_dump_layout(model16, tmp_path):
    r = run_block(StationaryPolicy.from_design(affine_design(model16, -0.3), model16),
                  Scenario.CAUSAL, model16, 50, 2)
    path = tmp_path / "t.bin"
    with open(path, "wb") as fh:
        r.trajectory.dump(fh)
    raw = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(-1, 6)
    assert raw.shape == (50, 6)
    assert np.array_equal(raw[:, 0], np.arange(50))
    np.testing.assert_array_equal(raw[:, 3], raw[:, 1] + raw[:, 2])
    assert np.mean(raw[:, 2] ** 2) == pytest.approx(r.c_P)


def test_stationary_average_matches_eigenvector(model12, rng):
    m = model12
    nx, ny, nu1 = len(m.x0_grid), len(m.y1_grid), len(m.u1_grid)
    enc_fb = rng.dirichlet(np.full(nu1, 0.5), size=(nx, ny + 1))
    marg = stationary_averaged_encoder(enc_fb, m)
    trans = np.einsum("i,isj,ijk->sk", m.source_pmf, enc_fb[:, :ny], m.channel_kernel)
    w, v = np.linalg.eig(trans.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    pi /= pi.sum()
    oracle = np.einsum("s,isj->ij", pi, enc_fb[:, :ny])
    np.testing.assert_allclose(marg, oracle, atol=1e-10)
    blind = np.repeat(enc_fb[:, :1], ny + 1, axis=1)
    np.testing.assert_allclose(stationary_averaged_encoder(blind, m), enc_fb[:, 0], atol=1e-12)


def test_zero_design_achievability(model16):
    q = model16.params.Q
    rep = verify_achievability(zero_design(model16), model16, CostPair(0.0, q), [1000, 10_000],
                               range(20), eps_target=0.1, mode="continuous")
    for r in rep.results:
        assert np.sum(r.gap <= 5 / math.sqrt(r.n)) >= 19
    assert rep.nonincreasing and rep.final_ok
    assert rep.to_csv().splitlines()[0] == "n,seed,c_P,c_S,gap"


def test_containment_check_small(model12):
    from witscoord.simulator import feedback_containment_check
    from witscoord.solver import SolverSettings, default_lambdas, pareto_frontier_causal

    fr = pareto_frontier_causal(model12, SolverSettings(lambdas=default_lambdas(9), restarts=1))
    rep = feedback_containment_check(model12, fr, trials=6, seed=1, n=5000, genie_trials=2, blind_checks=2)
    assert len(rep.rows) == 8
    assert rep.blind_identical
    for row in rep.rows:
        assert row.distance == pytest.approx(row.S - fr.s_at(row.P))
    assert rep.to_csv().count("\n") == 9
