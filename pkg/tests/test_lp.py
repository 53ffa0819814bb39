import json

import numpy as np
import pytest

from stochdual.lp import LinearProgram, LPBuilder, Status, check_certificate, dumps, solve, verify
from conftest import DATA


def test_single_variable_lower_bound_row():
    lp = LinearProgram([1.0], [[-1.0]], [-1.0])           # min x s.t. x >= 1
    s = solve(lp)
    assert s.status is Status.OPTIMAL
    assert s.objective_value == pytest.approx(1.0)
    assert s.dual[0] == pytest.approx(1.0)                # raising h lowers the value by lambda
    assert verify(lp, s).ok


def test_unbounded_with_ray():
    lp = LinearProgram([-1.0], lower=[0.0])
    s = solve(lp)
    assert s.status is Status.UNBOUNDED
    assert check_certificate(lp, s)


def test_infeasible_with_farkas_vector():
    lp = LinearProgram([0.0], [[1.0], [-1.0]], [0.0, -1.0])   # x <= 0 and x >= 1
    s = solve(lp)
    assert s.status is Status.INFEASIBLE
    assert check_certificate(lp, s)


def test_bounded_by_upper_row():
    lp = LinearProgram([-1.0], [[1.0]], [5.0], lower=[0.0])
    s = solve(lp)
    assert s.objective_value == pytest.approx(-5.0)
    assert s.dual[0] == pytest.approx(1.0)


@pytest.mark.parametrize("rule", ["bland", "dantzig"])
def test_beale_cycling_example_terminates(rule):
    # classic degenerate instance on which the textbook largest-coefficient rule cycles
    c = [-0.75, 150, -0.02, 6]
    G = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    lp = LinearProgram(c, G, [0, 0, 1], lower=[0] * 4)
    s = solve(lp, rule)
    assert s.status is Status.OPTIMAL
    assert s.objective_value == pytest.approx(-0.05)
    assert verify(lp, s).ok


def _oracle_cases():
    data = json.loads((DATA / "lp_oracle.json").read_text())
    return data["cases"]


@pytest.mark.parametrize("rule", ["bland", "dantzig"])
def test_frozen_highs_oracle(rule):
    for case in _oracle_cases():
        lo = [(-np.inf if v is None else v) for v in case["lower"]]
        up = [(np.inf if v is None else v) for v in case["upper"]]
        n = len(case["c"])
        lp = LinearProgram(case["c"], np.array(case["G"]).reshape(-1, n), case["h"], case["eq"], lo, up)
        s = solve(lp, rule)
        assert s.status.value == case["status"]
        if case["status"] == "optimal":
            assert s.objective_value == pytest.approx(case["objective"], abs=1e-7, rel=1e-7)
            assert verify(lp, s).ok
        else:
            assert check_certificate(lp, s)


def test_builder_and_json_round_trip():
    B = LPBuilder()
    x = B.add_var(cost=1.0, lower=0.0)
    y = B.add_var(cost=2.0, lower=0.0, upper=3.0)
    B.add_row([(x, -1.0), (y, -1.0)], -2.0)
    B.add_row({x: 1.0, y: -1.0}, 0.0, eq=True)
    lp = B.build()
    s = solve(lp)
    assert s.objective_value == pytest.approx(3.0)          # x = y = 1
    lp2 = LinearProgram.from_json(json.loads(dumps(lp)))
    assert solve(lp2).objective_value == pytest.approx(3.0)
    assert np.allclose(lp2.G, lp.G) and np.array_equal(lp2.eq, lp.eq)


def test_invalid_bounds_rejected():
    with pytest.raises(ValueError):
        LinearProgram([1.0], lower=[1.0], upper=[0.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0, 2.0], [[1.0, 1.0]], [1.0, 2.0])


def test_unknown_rule_rejected():
    with pytest.raises(ValueError):
        solve(LinearProgram([1.0], lower=[0.0]), rule="steepest")


def test_verify_detects_wrong_solution():
    lp = LinearProgram([1.0], [[-1.0]], [-1.0])
    s = solve(lp)
    s.x = np.array([0.5])
    assert not verify(lp, s).ok


def test_redundant_equality_rows_are_dropped(rng):
    """Duplicated and combined equality rows leave the optimum unchanged."""
    for _ in range(40):
        n, k = 4, 3
        G = rng.integers(-3, 4, (k, n)).astype(float)
        x0 = rng.integers(0, 3, n).astype(float)
        h = G @ x0
        c = rng.integers(-2, 5, n).astype(float)
        base = LinearProgram(c, G, h, [True] * k, lower=[0] * n, upper=[5] * n)
        extra = np.vstack([G[::-1] * 2.0, G[0] + G[1]])
        G2 = np.vstack([extra, G])
        h2 = np.concatenate([h[::-1] * 2.0, [h[0] + h[1]], h])
        redundant = LinearProgram(c, G2, h2, [True] * len(h2), lower=[0] * n, upper=[5] * n)
        a, b = solve(base), solve(redundant)
        assert a.status is b.status is Status.OPTIMAL
        assert a.objective_value == pytest.approx(b.objective_value, abs=1e-9)
        assert verify(redundant, b).ok


def test_frozen_lp_with_redundant_rows():
    """A consistent-price-system LP whose phase 1 ends with an artificial variable
    basic in a position other than its own row."""
    lp = LinearProgram.from_json(json.loads((DATA / "redundant_rows_lp.json").read_text()))
    s = solve(lp)
    assert s.status is Status.OPTIMAL
    assert verify(lp, s).ok
