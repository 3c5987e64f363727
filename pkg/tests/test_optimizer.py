import numpy as np
import pytest

from dsvrgda import rng as rngmod
from dsvrgda.graph import KINDS, build_topology, metropolis_weights
from dsvrgda.metrics import tracking_gap
from dsvrgda.optimizer import (DivergenceError, ProtocolError, RunConfig, Workers,
                               derive_config, run, stage_end, stage_start)
from dsvrgda.problems import PLGameProblem, generate_pl_game
from reference import centralized_gda, reference_single_machine


def setup(kind, K, n=16, d=4, seed=0, edge_prob=0.5):
    adj = build_topology(kind, K, edge_prob, seed)
    prob = generate_pl_game(K=K, n=n, d=d, rank=2, seed=seed).attach_saddle()
    return prob, adj, metropolis_weights(adj)


def small_cfg(variant, n=16, S=3, R=6, **kw):
    return derive_config(variant, n, R=R, S=S, **kw)


def strip_wall(trace):
    return [tuple(v for k, v in vars(r).items() if k != "wall_ms") for r in trace.records]


def test_derive_config_examples():
    cfg = derive_config("page", 4)
    assert (cfg.b, cfg.p, cfg.R) == (2, 2 / 6, 2)
    assert derive_config("page", 5).b == 3
    cfg = derive_config("zerosarah", 600, eta_x=0.005)
    assert (cfg.eta_x, cfg.eta_y) == (0.005, 0.01)


def test_derive_config_theory():
    cfg = derive_config("page", 100, (0.5, 2.0), 0.5, mode="theory")
    assert cfg.eta_x == pytest.approx(0.25 / (16 * 2.0))
    assert cfg.eta_y == pytest.approx(0.25 / 2.0)
    assert cfg.R == int(np.ceil(4 / (cfg.eta_x * 0.5)))
    with pytest.raises(ValueError):
        derive_config("page", 100, (0.0, 1.0), 0.5, mode="theory")
    with pytest.raises(ValueError):
        derive_config("page", 100, mode="theory")


def test_runconfig_validation():
    with pytest.raises(ValueError):
        RunConfig(variant="sgd").validate(10)
    with pytest.raises(ValueError):
        RunConfig(p=0.1, b=11).validate(10)
    with pytest.raises(ValueError):
        RunConfig(eta_x=0.0, p=0.1, b=2).validate(10)
    with pytest.raises(ValueError):
        RunConfig(variant="zerosarah", rho=0.1, b0=10, b1=0).validate(10)


@pytest.mark.parametrize("variant", ["page", "zerosarah"])
@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("K", [2, 5, 10])
def test_tracking_conservation(variant, kind, K):
    prob, adj, W = setup(kind, K, seed=K)
    gaps = []
    run(prob, adj, W, small_cfg(variant, S=2, R=5), metrics=False,
        observer=lambda s, r, ws: gaps.append(max(tracking_gap(ws))))
    assert len(gaps) == 10
    assert max(gaps) <= 1e-10


@pytest.mark.parametrize("variant", ["page", "zerosarah"])
def test_stage_start_resets(variant):
    prob, adj, W = setup("line", 5)
    res = run(prob, adj, W, small_cfg(variant, S=4))
    starts = res.trace.stage_starts()
    assert len(starts) == 5
    for rec in starts:
        assert rec.consensus_x == 0.0 and rec.consensus_y == 0.0
    for rec in starts[:-1]:
        assert rec.estimator_err_x <= 1e-12 and rec.estimator_err_y <= 1e-12
        if variant == "page":
            assert rec.estimator_err_x == 0.0 and rec.estimator_err_y == 0.0
    inner = [r for r in res.trace.records if r.inner > 0]
    assert any(r.consensus_x > 0 for r in inner)


def test_protocol_error_on_disagreement():
    prob, adj, W = setup("ring", 3)
    ws = Workers.at(3, np.zeros(4), np.zeros(4))
    ws.x[1, 0] = 1e-6
    with pytest.raises(ProtocolError):
        stage_start(ws, W, prob, small_cfg("page"))


def test_stage_end_examples():
    adj = build_topology("ring", 5)
    g = np.random.default_rng(0)
    snaps = [(g.standard_normal((5, 3)), g.standard_normal((5, 2))) for _ in range(4)]
    ws = Workers.at(5, np.zeros(3), np.zeros(2))
    r_star, rounds = stage_end(ws, adj, 4, rngmod.stream(0, rngmod.SELECT, 0), snaps)
    assert rounds == 2
    assert r_star == rngmod.stream(0, rngmod.SELECT, 0).integers(4)
    X, _ = snaps[r_star]
    mean = sum(X[k] for k in range(5)) / 5
    for k in range(5):
        assert np.array_equal(ws.x[k], mean)

    same = [(np.tile([1.0, 2.0, 3.0], (5, 1)), np.ones((5, 2)))]
    r_star, _ = stage_end(ws, adj, 1, rngmod.stream(1, rngmod.SELECT, 0), same)
    assert r_star == 0
    np.testing.assert_allclose(ws.x, same[0][0], rtol=1e-15)
    with pytest.raises(RuntimeError):
        stage_end(ws, adj, 3, rngmod.stream(0, rngmod.SELECT, 0), snaps)


@pytest.mark.parametrize("variant", ["page", "zerosarah"])
def test_single_worker_matches_reference(variant):
    prob = generate_pl_game(K=1, n=20, d=4, rank=3, seed=2)
    adj = build_topology("line", 1)
    W = metropolis_weights(adj)
    cfg = derive_config(variant, 20, S=4, R=7, master_seed=13, eta_x=0.05, eta_y=0.05)
    if variant == "zerosarah":
        cfg.b0 = 7
    seen = []
    res = run(prob, adj, W, cfg, metrics=False,
              observer=lambda s, r, ws: seen.append((ws.x[0].copy(), ws.y[0].copy())))
    history, (xf, yf) = reference_single_machine(prob, cfg)
    assert len(seen) == len(history)
    for (ax, ay), (bx, by) in zip(seen, history):
        assert np.array_equal(ax, bx) and np.array_equal(ay, by)
    assert np.array_equal(res.x_bar, xf) and np.array_equal(res.y_bar, yf)


@pytest.mark.parametrize("variant", ["page", "zerosarah"])
def test_complete_graph_identical_shards_is_centralized_gda(variant):
    K, n, d = 10, 12, 4
    base = generate_pl_game(K=1, n=n, d=d, rank=4, seed=5)
    prob = PLGameProblem(*(np.tile(f, (K, 1, 1)) for f in (base.a, base.b, base.c)))
    adj = build_topology("complete", K)
    W = metropolis_weights(adj)
    cfg = derive_config(variant, n, S=5, R=8, master_seed=3, eta_x=0.05, eta_y=0.05)
    if variant == "page":
        cfg.p = 1.0
    else:
        cfg.b1 = n
    seen = []
    run(prob, adj, W, cfg, metrics=False,
        observer=lambda s, r, ws: seen.append((ws.x.mean(axis=0), ws.y.mean(axis=0))))

    ref = centralized_gda(base, cfg, prob.initial_point(rngmod.stream(3, rngmod.INIT)))
    assert len(seen) == len(ref)
    for (ax, ay), (bx, by) in zip(seen, ref):
        assert np.max(np.abs(ax - bx)) <= 1e-9 and np.max(np.abs(ay - by)) <= 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_communication_accounting(kind):
    prob, adj, W = setup(kind, 6, seed=1)
    cfg = small_cfg("page", S=3, R=5)
    res = run(prob, adj, W, cfg)
    assert res.comm_rounds == 3 * 4 + 3 * W.diameter
    assert res.trace.records[-1].comm_rounds == res.comm_rounds
    col = res.trace.column("comm_rounds")
    assert col == sorted(col)
    samples = res.trace.column("samples_per_worker")
    assert samples == sorted(samples)


def test_zero_stages():
    prob, adj, W = setup("ring", 3)
    cfg = small_cfg("page", S=0)
    res = run(prob, adj, W, cfg)
    assert len(res.trace) == 0 and res.comm_rounds == 0
    x0, y0 = prob.initial_point(rngmod.stream(cfg.master_seed, rngmod.INIT))
    assert np.array_equal(res.x_bar, x0) and np.array_equal(res.y_bar, y0)


@pytest.mark.parametrize("variant", ["page", "zerosarah"])
def test_deterministic(variant):
    prob, adj, W = setup("erdos_renyi", 5, seed=2)
    a = run(prob, adj, W, small_cfg(variant, master_seed=4))
    b = run(prob, adj, W, small_cfg(variant, master_seed=4))
    c = run(prob, adj, W, small_cfg(variant, master_seed=5))
    assert strip_wall(a.trace) == strip_wall(b.trace)
    assert strip_wall(a.trace) != strip_wall(c.trace)


def test_divergence_is_located():
    prob, adj, W = setup("line", 3)
    cfg = small_cfg("page", S=50, R=10, eta_x=1e6, eta_y=1e6)
    with pytest.raises(DivergenceError) as info, np.errstate(all="ignore"):
        run(prob, adj, W, cfg, metrics=False)
    assert 0 <= info.value.stage < 50 and 0 <= info.value.inner < 10


def test_worker_count_mismatch():
    prob, _, _ = setup("line", 3)
    adj = build_topology("line", 4)
    with pytest.raises(ValueError):
        run(prob, adj, metropolis_weights(adj), small_cfg("page"))
