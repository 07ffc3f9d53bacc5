import math

import numpy as np
import pytest

from optdes import pso
from optdes.criteria import CriterionKind, d_score
from optdes.model import SecondOrderModel
from optdes.pso import (
    Objective,
    PsoConfig,
    StopReason,
    Topology,
    TopologyKind,
    confine,
    devectorize,
    init_swarm,
    regenerate_links,
    run,
    vectorize,
    velocity_update,
)

OMEGA = 0.72134752
C = 1.19314718


def test_default_weights():
    assert PsoConfig().omega == pytest.approx(1 / (2 * math.log(2)))
    assert PsoConfig().c1 == PsoConfig().c2 == pytest.approx(0.5 + math.log(2))
    assert PsoConfig().tol == math.sqrt(np.finfo(float).eps)


def test_vectorize_column_major():
    np.testing.assert_array_equal(vectorize([[1, 2], [3, 4]]), [1, 3, 2, 4])
    np.testing.assert_array_equal(vectorize([[0.1, 0.2, 0.3]]), [0.1, 0.2, 0.3])


def test_devectorize_round_trip():
    X = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
    np.testing.assert_array_equal(devectorize(vectorize(X), 5, 3), X)
    stack = np.stack([vectorize(X), vectorize(-X)])
    np.testing.assert_array_equal(devectorize(stack, 5, 3)[1], -X)


def test_velocity_update_pinned_draws():
    v = velocity_update(0.0, 0.1, 0.2, 0.4, OMEGA, C, C, 2.0, 0.5, 0.5)
    # 0.0721348 + 0.1193147 + 0.2386294
    assert float(v) == pytest.approx(0.4300789, abs=1e-7)


def test_velocity_update_no_attraction_and_clip():
    x = np.array([0.3, -0.2])
    v = np.array([0.5, -0.1])
    np.testing.assert_allclose(velocity_update(x, v, x, x, OMEGA, C, C, 2.0, 0.9, 0.9), OMEGA * v)
    big = velocity_update(-1.0, 1.9, 1.0, 1.0, OMEGA, C, C, 2.0, 1.0, 1.0)
    assert float(big) == 2.0


def test_velocity_update_drops_social_term():
    with_social = velocity_update(0.0, 0.0, 0.2, 0.4, OMEGA, C, C, 2.0, 0.5, 0.5)
    without = velocity_update(0.0, 0.0, 0.2, 0.4, OMEGA, C, C, 2.0, 0.5, 0.5, drop_social=True)
    assert float(without) == pytest.approx(C * 0.5 * 0.2)
    assert float(with_social) > float(without)
    mixed = velocity_update(np.zeros((2, 1)), np.zeros((2, 1)), np.full((2, 1), 0.2), np.full((2, 1), 0.4),
                            OMEGA, C, C, 2.0, 0.5, 0.5, drop_social=np.array([False, True]))
    np.testing.assert_allclose(mixed.ravel(), [float(with_social), float(without)])


@pytest.mark.parametrize(
    "x, v, want_x, want_v",
    [(1.7, 0.5, 1.0, 0.0), (-1.0, -0.3, -1.0, -0.3), (-1.2, -0.4, -1.0, 0.0), (0.2, 0.1, 0.2, 0.1)],
)
def test_confine_scalar(x, v, want_x, want_v):
    cx, cv = confine(np.array([x]), np.array([v]))
    assert (cx[0], cv[0]) == (want_x, want_v)


def test_confine_only_touches_violations():
    x = np.array([0.5, 1.5, -1.0, -3.0])
    v = np.array([0.1, 0.2, 0.3, 0.4])
    cx, cv = confine(x, v)
    np.testing.assert_array_equal(cx, [0.5, 1.0, -1.0, -1.0])
    np.testing.assert_array_equal(cv, [0.1, 0.0, 0.3, 0.0])


def test_init_swarm_ranges():
    cfg = PsoConfig(swarm_size=400, topology=Topology("global"))
    sw = init_swarm(cfg, 6, np.random.default_rng(1))
    assert np.all(np.abs(sw.position) <= 1)
    lo, hi = (-1 - sw.position) / 2, (1 - sw.position) / 2
    assert np.all(sw.velocity >= lo) and np.all(sw.velocity <= hi)
    np.testing.assert_array_equal(sw.pbest, sw.position)
    assert sw.informs is None


def test_init_velocity_interval_at_upper_wall():
    # x = 1 gives the interval [(-1-1)/2, (1-1)/2] = [-1, 0]
    x = np.ones(1000)
    u = np.random.default_rng(2).random(1000)
    v = (-1 - x) / 2 + u * ((1 - x) / 2 - (-1 - x) / 2)
    assert v.min() >= -1 and v.max() <= 0


def test_init_swarm_deterministic():
    cfg = PsoConfig(swarm_size=50, seed=42)
    obj = pso.make_objective("D", 1)
    a = init_swarm(cfg, 3, np.random.default_rng(42), obj, 3, 1)
    b = init_swarm(cfg, 3, np.random.default_rng(42), obj, 3, 1)
    for field in ("position", "velocity", "pbest", "pbest_fitness", "gbest", "informs"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.gbest_fitness == b.gbest_fitness == a.pbest_fitness.min()
    assert a.gbest_fitness == a.fitness[np.argmin(a.fitness)]


def test_links_include_self():
    informs = regenerate_links(50, 3, np.random.default_rng(0))
    assert informs.diagonal().all()
    assert regenerate_links(1, 1, np.random.default_rng(0)).tolist() == [[True]]


def test_links_mean_out_degree():
    S, k, reps = 50, 3, 10000
    rng = np.random.default_rng(123)
    distinct = draws = 0.0
    for _ in range(reps):
        targets = rng.integers(0, S, size=(S, k))
        draws += (targets != np.arange(S)[:, None]).sum() / S
    rng = np.random.default_rng(123)
    for _ in range(reps):
        informs = regenerate_links(S, k, rng)
        distinct += (informs.sum(axis=0) - 1).mean()
    # links drawn to other particles average k (S-1)/S = 2.94
    assert draws / reps == pytest.approx(3, abs=0.1)
    # after merging duplicate draws the expected distinct out-degree is
    # (S-1) (1 - (1 - 1/S)^k)
    assert distinct / reps == pytest.approx((S - 1) * (1 - (1 - 1 / S) ** k), abs=0.01)


def test_local_best_tie_breaks_low_index():
    informs = np.ones((3, 3), dtype=bool)
    assert pso.local_best_index(informs, np.array([2.0, 1.0, 1.0])).tolist() == [1, 1, 1]
    informs = np.eye(3, dtype=bool)
    assert pso.local_best_index(informs, np.array([np.inf, np.inf, 1.0])).tolist() == [0, 1, 2]


def test_constant_objective_stagnates():
    obj = Objective(CriterionKind.D, 1, lambda d: np.ones(d.shape[0]))
    for top in TopologyKind:
        res = run(obj, 3, 1, PsoConfig(swarm_size=7, stagnation_limit=17, topology=Topology(top), seed=3))
        assert res.stop_reason is StopReason.STAGNATED
        assert res.iterations == 17
        assert res.function_evaluations == 7 * 18


def test_max_iterations_cap():
    res = run("D", 6, 2, PsoConfig(swarm_size=10, max_iterations=5, seed=1))
    assert res.iterations == 5 and res.stop_reason is StopReason.MAX_ITERATIONS
    assert res.function_evaluations == 60


def test_invalid_config_rejected_before_evaluation():
    calls = []
    obj = Objective(CriterionKind.D, 1, lambda d: calls.append(1) or np.ones(d.shape[0]))
    bad = [
        PsoConfig(omega=1.4427),
        PsoConfig(c1=0.0),
        PsoConfig(tol=0.0),
        PsoConfig(stagnation_limit=0),
        PsoConfig(swarm_size=0),
        PsoConfig(swarm_size=2, topology=Topology("local", expected_links=3)),
        PsoConfig(v_max=np.ones(5)),
    ]
    for cfg in bad:
        with pytest.raises(ValueError):
            run(obj, 3, 1, cfg)
    with pytest.raises(ValueError):
        run(obj, 3, 2, PsoConfig())
    with pytest.raises(ValueError):
        Topology("ring")
    assert not calls


@pytest.mark.parametrize("topology", list(TopologyKind))
@pytest.mark.parametrize("criterion", ["D", "I"])
def test_run_invariants_instrumented(topology, criterion):
    K, N = 2, 7
    cfg = PsoConfig(swarm_size=20, topology=Topology(topology), seed=5, max_iterations=150)
    obj = pso.make_objective(criterion, K)
    history = []

    def watch(it, sw):
        history.append((sw.position.copy(), sw.velocity.copy(), sw.fitness.copy(),
                        sw.pbest_fitness.copy(), sw.gbest_fitness))

    res = run(obj, N, K, cfg, callback=watch)
    assert res.function_evaluations == cfg.swarm_size * (res.iterations + 1)
    assert len(history) == res.iterations + 1
    g = [h[4] for h in history]
    assert all(b <= a for a, b in zip(g, g[1:]))
    running_min = np.full(cfg.swarm_size, np.inf)
    for pos, vel, fit, pbest_f, _ in history:
        assert np.all(np.abs(pos) <= 1.0)
        assert np.all(np.abs(vel) <= 2.0)
        running_min = np.minimum(running_min, fit)
        np.testing.assert_array_equal(pbest_f, running_min)
    # reported value is the criterion evaluated on the reported design
    assert res.best_fitness.value == obj(res.best_design[None])[0]
    model = SecondOrderModel(K)
    if criterion == "D":
        assert res.best_fitness.value == d_score(res.best_design, model).value


def test_run_deterministic():
    cfg = PsoConfig(swarm_size=30, seed=2024)
    a, b = run("I", 8, 2, cfg), run("I", 8, 2, cfg)
    np.testing.assert_array_equal(a.best_design, b.best_design)
    assert a.best_fitness == b.best_fitness
    assert (a.iterations, a.stop_reason) == (b.iterations, b.stop_reason)


def test_global_is_local_with_complete_informers(monkeypatch):
    glob = run("D", 6, 2, PsoConfig(swarm_size=15, topology=Topology("global"), seed=8, max_iterations=300))
    monkeypatch.setattr(pso, "regenerate_links", lambda S, k, rng: np.ones((S, S), dtype=bool))
    loc = run("D", 6, 2, PsoConfig(swarm_size=15, topology=Topology("local"), seed=8, max_iterations=300,
                                   drop_self_social=False))
    np.testing.assert_array_equal(loc.best_design, glob.best_design)
    assert loc.best_fitness == glob.best_fitness
    assert loc.iterations == glob.iterations


def test_single_particle_swarm_runs():
    res = run("D", 3, 1, PsoConfig(swarm_size=1, topology=Topology("local", expected_links=1), seed=4))
    assert res.function_evaluations == res.iterations + 1


def test_undersized_design_stays_singular():
    res = run("D", 2, 1, PsoConfig(swarm_size=5, seed=1, stagnation_limit=5))
    assert res.best_fitness.singular and res.stop_reason is StopReason.STAGNATED


def test_tol_window_one_is_single_occurrence_rule():
    a = run("D", 9, 2, PsoConfig(swarm_size=50, seed=3, tol_window=1))
    b = run("D", 9, 2, PsoConfig(swarm_size=50, seed=3))
    assert a.stop_reason is StopReason.CONVERGED_TOLERANCE
    assert a.iterations <= b.iterations


@pytest.mark.parametrize("topology", list(TopologyKind))
def test_k1_n3_finds_three_point_optimum(topology):
    hits = sum(
        run("D", 3, 1, PsoConfig(swarm_size=50, topology=Topology(topology), seed=s)).best_fitness.value
        <= 6.75 * (1 + 1e-6)
        for s in range(50)
    )
    assert hits >= 45
