import json

import numpy as np
import pytest

from stochdual.stopping import (StoppingProblem, best_pure_stopping_value, count_stopping_times,
                                doob_martingale_part, enumerate_stopping_values, rogers_bound, snell_envelope,
                                solve_stopping_lp, stopping_rule_value)
from stochdual.tree import AdaptedProcess, ScenarioTree, is_martingale, random_tree


def running_example():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    return StoppingProblem(tr, {0: 1.0, 1: 2.0, 2: 0.0})


def scalar(tree, vals):
    return AdaptedProcess(tree, [1] * (tree.horizon + 1), {k: [v] for k, v in vals.items()})


def test_running_example():
    sp = running_example()
    sol = solve_stopping_lp(sp)
    assert sol.value == pytest.approx(1.0)
    assert np.allclose(sol.y.as_array().ravel(), [1.0, 2.0, 0.0])
    assert np.allclose(snell_envelope(sp).as_array().ravel(), [1.0, 2.0, 0.0])
    assert sol.rule == {0: True, 1: False, 2: False}
    assert stopping_rule_value(sp, sol.rule) == pytest.approx(1.0)
    zero = scalar(sp.tree, {0: 0.0, 1: 0.0, 2: 0.0})
    assert rogers_bound(sp, zero).bound == pytest.approx(1.5)
    M = doob_martingale_part(snell_envelope(sp))
    assert rogers_bound(sp, M).bound == pytest.approx(1.0)


def test_reward_only_at_horizon(rng):
    for _ in range(5):
        tr = random_tree(rng, 3, 3)
        z = {nid: 0.0 for nid in tr.ids}
        for k in tr.leaves:
            z[tr.ids[k]] = float(rng.random())
        sp = StoppingProblem(tr, z)
        ez = float(sum(tr.prob[k] * z[tr.ids[k]] for k in tr.leaves))
        assert solve_stopping_lp(sp).value == pytest.approx(ez, abs=1e-10)


def test_constant_reward():
    tr = ScenarioTree.from_branching([[0.3, 0.7], [0.5, 0.5]])
    sp = StoppingProblem(tr, {nid: 0.4 for nid in tr.ids})
    sol = solve_stopping_lp(sp)
    assert sol.value == pytest.approx(0.4)
    assert sol.rule[0] is True


def test_lp_snell_enumeration_agree(rng):
    for _ in range(15):
        tr = random_tree(rng, int(rng.integers(1, 4)), 3)
        if len(tr) > 30:
            continue
        sp = StoppingProblem(tr, {nid: float(rng.random()) for nid in tr.ids})
        sol = solve_stopping_lp(sp)
        v = snell_envelope(sp).as_array()[0, 0]
        assert sol.value == pytest.approx(v, abs=1e-8)
        assert best_pure_stopping_value(sp) == pytest.approx(v, abs=1e-8)
        assert stopping_rule_value(sp, sol.rule) == pytest.approx(v, abs=1e-8)
        assert is_martingale(sol.y, 1e-8)
        assert np.all(sol.y.as_array()[:, 0] >= sp.z - 1e-8)


def test_enumeration_counts():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    # stop at root, or continue and choose stop/never at each leaf: 1 + 2 * 2
    assert count_stopping_times(tr) == 5
    vals = enumerate_stopping_values(running_example())
    assert vals.size == 5
    assert sorted(np.round(vals, 12)) == [0.0, 0.0, 1.0, 1.0, 1.0]
    with pytest.raises(ValueError, match="exceed"):
        enumerate_stopping_values(running_example(), limit=3)


def test_rogers_bound_is_upper_bound(rng):
    tr = random_tree(rng, 3, 3)
    sp = StoppingProblem(tr, {nid: float(rng.random()) for nid in tr.ids})
    v = solve_stopping_lp(sp).value
    for _ in range(10):
        y = doob_martingale_part(AdaptedProcess(tr, [1] * (tr.horizon + 1), [[rng.normal()] for _ in range(len(tr))]))
        assert rogers_bound(sp, y).bound >= v - 1e-10
    M = doob_martingale_part(snell_envelope(sp))
    assert rogers_bound(sp, M).bound == pytest.approx(v, abs=1e-8)


def test_monte_carlo_within_three_standard_errors():
    tr = random_tree(np.random.default_rng(7), 3, 3)
    sp = StoppingProblem(tr, {nid: float(i % 5) / 4 for i, nid in enumerate(tr.ids)})
    zero = AdaptedProcess.constant(tr, [0.0])
    exact = rogers_bound(sp, zero).bound
    mc = rogers_bound(sp, zero, mc=10_000, seed=2024)
    assert not mc.exact and mc.n_paths == 10_000 and mc.stderr > 0
    assert abs(mc.bound - exact) <= 3 * mc.stderr


def test_monte_carlo_determinism():
    sp = running_example()
    zero = AdaptedProcess.constant(sp.tree, [0.0])
    a = rogers_bound(sp, zero, mc=1000, seed=5, workers=4)
    b = rogers_bound(sp, zero, mc=1000, seed=5, workers=4)
    assert (a.bound, a.stderr) == (b.bound, b.stderr)


def test_errors():
    sp = running_example()
    with pytest.raises(ValueError, match="not a martingale"):
        rogers_bound(sp, scalar(sp.tree, {0: 0.0, 1: 1.0, 2: 0.0}))
    with pytest.raises(ValueError, match="seed"):
        rogers_bound(sp, AdaptedProcess.constant(sp.tree, [0.0]), mc=100)
    with pytest.raises(ValueError, match="nonnegative"):
        StoppingProblem(sp.tree, {0: -1.0, 1: 0.0, 2: 0.0})


def test_json_round_trip():
    sp = running_example()
    sp2 = StoppingProblem.from_json(json.loads(json.dumps(sp.to_json())))
    assert np.array_equal(sp.z, sp2.z)
