import math
import time

import numpy as np
import pytest

from witscoord.designs import (assemble_joint_feedback, causal_design_costs,
                               feedback_design_costs)
from witscoord.envelope import convex_envelope
from witscoord.measures import info_constraint_value
from witscoord.solver import (SolverSettings, _blahut_arimoto, _leak, default_lambdas, item_rng,
                              mmse_decoder, optimize_operating_point, pareto_frontier_causal,
                              solve_noncausal_feedback)

FAST = SolverSettings(lambdas=default_lambdas(9), restarts=1)


def test_default_lambdas():
    lams = default_lambdas()
    assert len(lams) == 25
    assert lams[0] == pytest.approx(1e-3) and lams[-1] == pytest.approx(1e3)
    assert np.allclose(np.diff(np.log(lams)), np.log(1e6) / 24)


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(lambdas=())
    with pytest.raises(ValueError):
        SolverSettings(restarts=0)


def test_item_rng_is_per_item():
    a = item_rng(0, 3, 1).random(4)
    assert np.array_equal(a, item_rng(0, 3, 1).random(4))
    assert not np.array_equal(a, item_rng(0, 3, 2).random(4))


def test_mmse_decoder_is_gridwise_optimal(model12, rng):
    enc = rng.dirichlet(np.full(len(model12.u1_grid), 0.5), size=(len(model12.x0_grid), 1))
    dec = mmse_decoder(enc, 0, model12)
    x1 = model12.x1_values
    K = model12.channel_kernel
    w = model12.source_pmf[:, None] * enc[:, 0]
    u2 = model12.u2_grid.points
    for k in range(len(model12.y1_grid)):
        pk = w * K[:, :, k]
        if pk.sum() < 1e-300:
            continue
        risk = [(pk * (x1 - v) ** 2).sum() for v in u2]
        assert risk[int(dec[k].argmax())] <= min(risk) * (1 + 1e-12) + 1e-300


def test_operating_point_history_nonincreasing(model16):
    op = optimize_operating_point(model16, 1.0, FAST)
    h = np.asarray(op.history)
    assert np.all(np.diff(h) <= 1e-12)
    c = causal_design_costs(op.design, model16)
    assert op.cost.P == pytest.approx(c.P, rel=1e-12) and op.cost.S == pytest.approx(c.S, rel=1e-12)
    assert op.objective == pytest.approx(c.S + 1.0 * c.P, rel=1e-12)


def test_extreme_weights_hit_the_anchors(model16):
    lo = optimize_operating_point(model16, 1e3, FAST)
    assert lo.cost.P == 0.0
    hi = optimize_operating_point(model16, 1e-3, FAST)
    # zero forcing on the grid: S is just the channel-free leftover, P near Q
    assert hi.cost.S < 0.01 and abs(hi.cost.P - 1.0) < 0.1


@pytest.fixture(scope="module")
def frontier16(model16):
    return pareto_frontier_causal(model16, FAST)


def test_frontier_is_convex_fixed_point(frontier16):
    env = frontier16.envelope()
    assert convex_envelope(env) == env
    assert len(frontier16.raw) == len(FAST.lambdas)


def test_frontier_designs_reproduce_costs(frontier16, model16):
    for p in frontier16.points:
        c = causal_design_costs(frontier16.designs[p.design_id], model16)
        assert c.P == pytest.approx(p.cost.P, rel=1e-10, abs=1e-14)
        assert c.S == pytest.approx(p.cost.S, rel=1e-10, abs=1e-14)


def test_design_at_lies_on_envelope(frontier16, model16):
    P0, P1 = frontier16.points[0].cost.P, frontier16.points[-1].cost.P
    for P in np.linspace(P0, P1, 7):
        c = causal_design_costs(frontier16.design_at(P), model16)
        assert c.P == pytest.approx(P, abs=1e-10)
        assert c.S == pytest.approx(frontier16.s_at(P), abs=1e-10)


def test_frontier_deterministic_and_worker_independent(frontier16, model16):
    again = pareto_frontier_causal(model16, FAST)
    threaded = pareto_frontier_causal(model16, SolverSettings(lambdas=FAST.lambdas, restarts=1, workers=3))
    assert again.to_csv("raw") == frontier16.to_csv("raw") == threaded.to_csv("raw")


def test_frontier_csv_columns(frontier16):
    head = frontier16.to_csv().splitlines()[0]
    assert head == "lambda,P,S,slack,design_id"


def test_blahut_arimoto_binary_rate_distortion():
    # Bern(1/2) source, Hamming distortion: R(D) = log 2 - h(D) with D = 1 / (1 + e^beta)
    pxc = np.array([[0.5, 0.5]])
    dist = np.array([[[0.0, 1.0], [1.0, 0.0]]])
    beta = 2.0
    dec, _ = _blahut_arimoto(pxc, dist, beta, np.array([[0.3, 0.7]]), iters=500, tol=1e-14)
    D = 1 / (1 + math.exp(beta))
    h = -D * math.log(D) - (1 - D) * math.log(1 - D)
    assert float((pxc[0, :, None] * dec[0] * dist[0]).sum()) == pytest.approx(D, abs=1e-9)
    assert _leak(np.ones(1), pxc, dec) == pytest.approx(math.log(2) - h, abs=1e-9)


@pytest.fixture(scope="module")
def feedback_runs(model12):
    settings = SolverSettings(lambdas=default_lambdas(5, 1e-2, 1e2), restarts=1)
    t0 = time.perf_counter()
    causal = pareto_frontier_causal(model12, settings)
    blind = solve_noncausal_feedback(model12, 1, settings, x0_blind=True)
    aware = solve_noncausal_feedback(model12, 2, settings)
    return causal, blind, aware, time.perf_counter() - t0


def test_feedback_points_are_feasible(feedback_runs, model12):
    _, blind, aware, _ = feedback_runs
    for fr in (blind, aware):
        for p in fr.raw:
            d = fr.designs[p.design_id]
            v = info_constraint_value(assemble_joint_feedback(d, model12))
            assert v >= -1e-6
            assert p.slack == pytest.approx(v, abs=1e-9)
            c = feedback_design_costs(d, model12)
            assert c.S == pytest.approx(p.cost.S, rel=1e-9, abs=1e-12)


def test_feedback_frontiers_versus_causal(feedback_runs):
    causal, blind, aware, _ = feedback_runs
    for p in blind.points:
        assert abs(p.cost.S - causal.s_at(p.cost.P)) <= 0.02
    for p in aware.points:
        assert p.cost.S <= causal.s_at(p.cost.P) + 0.02
    assert aware.designs[aware.points[0].design_id].w1_size == 2


def test_feedback_rejects_empty_alphabet(model12):
    with pytest.raises(ValueError):
        solve_noncausal_feedback(model12, 0, FAST)
