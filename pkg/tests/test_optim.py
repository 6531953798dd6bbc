import math

import numpy as np
import pytest

from stepwise import optim as O, problems as P
from stepwise.ode import TimeGrid

C = np.array([1.3, -4.2, 7.7])
BOX3 = np.tile([-10.0, 10.0], (3, 1))


def quad(v):
    return float(np.sum((np.asarray(v) - C) ** 2))


class Recorder:
    """Objective wrapper that keeps every evaluated point."""

    def __init__(self, f):
        self.f = f
        self.points = []

    def __call__(self, v):
        self.points.append(np.array(v, dtype=float))
        return self.f(v)


@pytest.fixture(scope="module")
def intro3():
    p = P.builtin("intro")
    return P.StepwiseObjective(p, "fixed", 3, TimeGrid.over(2.0, 200))


def test_method_names():
    assert O.method_name("ps") == O.PATTERN_SEARCH
    assert O.method_name("genetic") == O.GENETIC
    with pytest.raises(ValueError):
        O.method_name("nelder-mead")


def test_config_validation():
    with pytest.raises(ValueError):
        O.OptimizerConfig("ps", [[1.0, 0.0]])
    with pytest.raises(ValueError):
        O.OptimizerConfig("ps", BOX3, budget=0)
    cfg = O.OptimizerConfig("sa", BOX3, seed=4)
    s = cfg.settings()
    assert s["seed"] == 4 and s["sa_cooling"] == 0.95 and "ps_delta0" not in s


def test_pattern_search_quadratic_from_origin():
    r = O.pattern_search(quad, O.OptimizerConfig("ps", BOX3), x0=np.zeros(3))
    assert np.max(np.abs(r.x - C)) < 1e-6
    assert not r.budget_exhausted


def test_pattern_search_budget_flag():
    r = O.pattern_search(quad, O.OptimizerConfig("ps", BOX3, budget=25), x0=np.zeros(3))
    assert r.evaluations == 25 and r.budget_exhausted


def test_pattern_search_incumbent_non_increasing():
    r = O.pattern_search(quad, O.OptimizerConfig("ps", BOX3, seed=3))
    costs = [c for _, c in r.trace]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_sa_constant_objective():
    r = O.simulated_annealing(lambda v: 2.5, O.OptimizerConfig("sa", BOX3, budget=500,
                                                               seed=1))
    assert r.cost == 2.5
    assert r.info["acceptance_rate"] == 1.0


def test_ga_identical_population_without_mutation():
    pop = np.tile([1.0, 2.0, 3.0], (50, 1))
    cfg = O.OptimizerConfig("ga", BOX3, budget=2000, ga_mutation_rate=0.0)
    r = O.genetic_algorithm(quad, cfg, population=pop)
    hist = r.info["best_history"]
    assert all(h == hist[0] for h in hist)
    np.testing.assert_array_equal(r.x, [1.0, 2.0, 3.0])


def test_ga_elitism_best_non_increasing():
    r = O.genetic_algorithm(quad, O.OptimizerConfig("ga", BOX3, budget=5000, seed=2))
    h = r.info["best_history"]
    assert all(b <= a for a, b in zip(h, h[1:]))
    assert r.info["generations"] > 50


@pytest.mark.parametrize("method", ["sa", "ga"])
def test_stochastic_methods_reach_quadratic_minimum(method):
    hits = 0
    for seed in range(100):
        r = O.run(quad, O.OptimizerConfig(method, BOX3, budget=20_000, seed=seed))
        hits += np.max(np.abs(r.x - C)) <= 1e-2
    assert hits >= 95, f"{method}: {hits}/100 seeds within 1e-2"


@pytest.mark.parametrize("method", ["ps", "sa", "ga"])
def test_bit_identical_reruns(method, intro3):
    cfg = O.OptimizerConfig(method, intro3.bounds, budget=3000, seed=17)
    a, b = O.run(intro3, cfg), O.run(intro3, cfg)
    assert a.cost == b.cost and a.evaluations == b.evaluations
    assert np.array_equal(a.x, b.x)
    assert a.trace == b.trace


@pytest.mark.parametrize("method", ["ps", "sa", "ga"])
def test_every_evaluation_inside_box(method):
    rec = Recorder(quad)
    box = np.array([[0.0, 1.0], [-3.0, -2.0], [5.0, 5.5]])  # optimum outside the box
    O.run(rec, O.OptimizerConfig(method, box, budget=4000, seed=5))
    pts = np.array(rec.points)
    assert np.all(pts >= box[:, 0]) and np.all(pts <= box[:, 1])


def test_degenerate_axis_is_respected():
    box = np.array([[0.0, 1.0], [2.0, 2.0]])
    for method in ("ps", "sa", "ga"):
        rec = Recorder(lambda v: float((v[0] - 0.3) ** 2))
        O.run(rec, O.OptimizerConfig(method, box, budget=500, seed=1))
        assert np.all(np.array(rec.points)[:, 1] == 2.0)


def test_multi_restart_single_run_reduces():
    cfg = O.OptimizerConfig("ps", BOX3, seed=9)
    s = O.multi_restart("ps", quad, cfg, 1)
    r = O.run(quad, cfg)
    assert s.run_count == 1 and s.best.cost == r.cost and np.array_equal(s.best.x, r.x)


def test_multi_restart_seeds_and_monotone_best(intro3):
    cfg = O.OptimizerConfig("sa", intro3.bounds, budget=1500, seed=100)
    s = O.multi_restart("sa", intro3, cfg, 6)
    assert [r.seed for r in s.runs] == list(range(100, 106))
    best = [min(s.costs[:k]) for k in range(1, 7)]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert s.best.cost == s.costs.min()
    assert s.mean == pytest.approx(s.costs.mean())


def test_multi_restart_threads_match_serial(intro3):
    cfg = O.OptimizerConfig("ga", intro3.bounds, budget=1000, seed=3)
    a = O.multi_restart("ga", intro3, cfg, 4)
    b = O.multi_restart("ga", intro3, cfg, 4, workers=3)
    assert np.array_equal(a.costs, b.costs)


def test_multi_restart_rejects_zero_runs():
    with pytest.raises(ValueError):
        O.multi_restart("ps", quad, O.OptimizerConfig("ps", BOX3), 0)


def test_grid_oracle_one_dimensional():
    x, f = O.grid_oracle(lambda v: float((v[0] - 1.0) ** 2), [[0.0, 2.0]], 201)
    assert x[0] == 1.0 and f == 0.0


def test_grid_oracle_guard():
    with pytest.raises(ValueError, match="10000000"):
        O.grid_oracle(quad, BOX3, 1000)


def test_grid_oracle_batch_matches_scalar(intro3):
    xb, fb = O.grid_oracle(intro3, intro3.bounds, 9)
    xs, fs = O.grid_oracle(lambda v: intro3(v), intro3.bounds, 9)
    assert fb == pytest.approx(fs, rel=1e-13)
    np.testing.assert_array_equal(xb, xs)


def test_nested_grid_dominance():
    # 60 steps put both the 3- and the 6-segment breakpoints on grid nodes
    p = P.builtin("intro")
    g = TimeGrid.over(2.0, 60)
    o3 = P.StepwiseObjective(p, "fixed", 3, g)
    o6 = P.StepwiseObjective(p, "fixed", 6, g)
    _, f3 = O.grid_oracle(o3, o3.bounds, 9)
    x6, f6 = O.grid_oracle(o6, o6.bounds, 9)
    assert f6 <= f3


def test_methods_not_below_oracle_one_step():
    p = P.builtin("intro")
    obj = P.StepwiseObjective(p, "fixed", 1, TimeGrid.over(2.0, 200))
    _, f_star = O.grid_oracle(obj, obj.bounds, 20001)
    for method in ("ps", "sa", "ga"):
        r = O.run(obj, O.OptimizerConfig(method, obj.bounds, budget=3000, seed=2))
        assert r.cost >= f_star - 1e-12
        assert r.cost <= f_star + 1e-6
