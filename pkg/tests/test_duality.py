import numpy as np
import pytest

from conftest import PROBLEMS
from stochdual import lp as _lp
from stochdual.duality import (GapReport, ShadowPriceProgram, StochasticProgram, TimeSeparableProgram,
                               bolza_dual_value, bolza_program, dual_objective, dual_objective_lp, duality_gap,
                               interchange_check, jensen_sides, lagrangian_integrand, martingale_dual, orthogonal_dual,
                               shadow_price_bound, solve_primal)
from stochdual.generators import (random_polyhedral_function, random_program, random_shadow_price,
                                  random_time_separable)
from stochdual.io import load_problem
from stochdual.polyhedral import Polyhedron, PolyhedralFunction
from stochdual.tree import AdaptedProcess, ScenarioProcess, ScenarioTree, random_tree


def load(name):
    return load_problem(PROBLEMS / name)[0]


def test_newsvendor_value_and_dual():
    sp = load("newsvendor.json")
    pr = solve_primal(sp)
    assert pr.value == pytest.approx(1.0)
    assert 0.0 - 1e-9 <= pr.x.at(0)[0] <= 2.0 + 1e-9
    rep = duality_gap(sp)
    assert rep.primal_value == pytest.approx(1.0) and rep.dual_value == pytest.approx(1.0)
    assert rep.closed and abs(rep.gap) <= 1e-9
    y = ScenarioProcess(sp.tree, [np.zeros((2, 0)), np.array([[1.0], [-1.0]])])
    assert sp.u.pairing(y) + dual_objective(sp, y) == pytest.approx(1.0)


def test_newsvendor_perfect_information_is_zero():
    spp = load("newsvendor_shadow.json")
    assert shadow_price_bound(spp, np.zeros((2, 1))) == pytest.approx(0.0)
    assert shadow_price_bound(spp, np.array([[-1.0], [1.0]])) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="orthogonal"):
        shadow_price_bound(spp, np.array([[1.0], [1.0]]))
    rep = duality_gap(spp, "orthogonal")
    assert rep.primal_value == pytest.approx(1.0) and rep.dual_value == pytest.approx(1.0)
    assert rep.dual_class == "orthogonal"


def test_time_separable_example():
    tsp = load("time_separable.json")
    rep = duality_gap(tsp, "martingale")
    assert rep.primal_value == pytest.approx(3.5) and rep.dual_value == pytest.approx(3.5)
    val, y, _ = martingale_dual(tsp)
    assert val == pytest.approx(3.5)
    from stochdual.tree import is_martingale
    assert is_martingale(y)
    assert duality_gap(tsp).dual_value == pytest.approx(3.5)


def test_bolza_example():
    bi = load("bolza.json")
    sp = bolza_program(bi.tree, bi.d, bi.L, bi.u)
    assert solve_primal(sp).value == pytest.approx(1.0)
    y = AdaptedProcess(bi.tree, [1, 1], {0: [0.0], 1: [-1.0], 2: [-1.0]})
    assert bolza_dual_value(bi.tree, bi.d, bi.L, y) == pytest.approx(1.0)
    y_bad = AdaptedProcess(bi.tree, [1, 1], {0: [0.5], 1: [-1.0], 2: [-1.0]})
    assert bolza_dual_value(bi.tree, bi.d, bi.L, y_bad) == -np.inf
    # weak duality over a grid of dual processes
    for a in np.linspace(-2, 2, 9):
        for b in np.linspace(-2, 2, 9):
            y = AdaptedProcess(bi.tree, [1, 1], {0: [0.0], 1: [a], 2: [b]})
            assert bolza_dual_value(bi.tree, bi.d, bi.L, y) <= 1.0 + 1e-9


def test_lagrangian_partial_inf_matches_joint_lp(rng):
    for _ in range(15):
        sp = random_program(rng, max_stages=3, max_branching=2, max_n=2, max_m=2)
        y = ScenarioProcess(sp.tree, [rng.integers(-2, 3, (sp.tree.leaves.size, m)).astype(float) for m in sp.m_dims])
        a, b = dual_objective(sp, y), dual_objective_lp(sp, y)
        assert (np.isinf(a) and a == b) or a == pytest.approx(b, abs=1e-7)
        k = int(sp.tree.leaves[0])
        li = lagrangian_integrand(sp, sp.tree.ids[k])
        x = rng.normal(size=li.nx)
        yy = y.blocks[sp.tree.stage[k]][0]
        v1, v2 = li(x, yy), li.value_lp(x, yy)
        assert (np.isinf(v1) and v1 == v2) or v1 == pytest.approx(v2, abs=1e-7)


def test_random_gaps_close(rng):
    for _ in range(20):
        rep = duality_gap(random_program(rng, max_stages=3, max_branching=2))
        assert isinstance(rep, GapReport)
        assert np.isfinite(rep.primal_value) and rep.closed, rep


def test_weak_duality_random_y(rng):
    for _ in range(10):
        sp = random_program(rng, max_stages=2, max_branching=2, max_n=2, max_m=2)
        phi = solve_primal(sp).value
        for _ in range(5):
            y = ScenarioProcess(sp.tree, [rng.normal(size=(sp.tree.leaves.size, m)) for m in sp.m_dims])
            assert sp.u.pairing(y) + dual_objective(sp, y) <= phi + 1e-7


def test_primal_multipliers_are_subgradient(rng):
    """phi(u + d) >= phi(u) + <d, y> for the reported y."""
    for _ in range(10):
        sp = random_program(rng, max_stages=2, max_branching=2)
        pr = solve_primal(sp)
        for _ in range(3):
            du = ScenarioProcess(sp.tree, [rng.normal(size=b.shape) * 0.3 for b in sp.u.blocks])
            shifted = ScenarioProcess(sp.tree, [a + b for a, b in zip(sp.u.blocks, du.blocks)])
            assert solve_primal(sp.with_u(shifted)).value >= pr.value + du.pairing(pr.y) - 1e-7


def test_martingale_and_orthogonal_classes_random(rng):
    for _ in range(8):
        rep = duality_gap(random_time_separable(rng), "martingale")
        assert rep.closed, rep
        rep = duality_gap(random_shadow_price(rng), "orthogonal")
        assert rep.closed, rep


def test_orthogonal_dual_is_orthogonal(rng):
    spp = random_shadow_price(rng)
    val, y, sol = orthogonal_dual(spp)
    from stochdual.duality import is_orthogonal
    assert is_orthogonal(spp, y, 1e-7)
    assert val == pytest.approx(solve_primal(spp.to_program()).value, abs=1e-6)


def test_infeasible_and_unbounded_statuses():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    empty = PolyhedralFunction(1, None, None, Polyhedron(1, [[1.0], [-1.0]], [0.0, -1.0]))
    sp = StochasticProgram(tr, [1, 0], [0, 0], {0: empty})
    rep = duality_gap(sp)
    assert rep.primal_value == np.inf and rep.dual_value == np.inf
    assert rep.statuses["primal"] == "infeasible" and "farkas" in rep.details
    lin = PolyhedralFunction(1, [[1.0]], [0.0])
    rep = duality_gap(StochasticProgram(tr, [1, 0], [0, 0], {0: lin}))
    assert rep.primal_value == -np.inf and "ray" in rep.details


def test_interchange_and_jensen(rng):
    tr = random_tree(rng, 2, 3)
    h = {tr.ids[k]: random_polyhedral_function(rng, 2) for k in tr.leaves}
    joint, separate = interchange_check(tr, h)
    assert joint == pytest.approx(separate, abs=1e-9)
    hs = {tr.ids[k]: random_polyhedral_function(rng, 2, bounded_domain=False) for k in tr.stage_nodes[1]}
    x = rng.normal(size=(tr.leaves.size, 2))
    lhs, rhs = jensen_sides(tr, hs, x, 1)
    assert lhs <= rhs + 1e-9


def test_errors():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    sp = StochasticProgram(tr, [1, 0], [0, 0], {})
    with pytest.raises(TypeError):
        duality_gap(sp, "martingale")
    with pytest.raises(TypeError):
        duality_gap(sp, "orthogonal")
    with pytest.raises(ValueError, match="unknown dual class"):
        duality_gap(sp, "bogus")
    with pytest.raises(ValueError, match="expected 2"):
        StochasticProgram(tr, [1, 0], [0, 1], {1: PolyhedralFunction.zero(1)})
    with pytest.raises(KeyError):
        ShadowPriceProgram(tr, [1, 0], {1: PolyhedralFunction.zero(1)})
    with pytest.raises(ValueError):
        TimeSeparableProgram(tr, [1, 1], 1, {0: PolyhedralFunction.zero(2)}, {}, {})
