import json
import warnings

import numpy as np
import pytest

from conftest import PROBLEMS
from stochdual.generators import random_claim, random_conical_market, random_liquid_market
from stochdual.io import load_problem
from stochdual.market import (MarketModel, MarketModelError, bid_ask_cone, bolza_terms, cash_delivery_cone,
                              check_no_arbitrage, consistent_price_sup, find_consistent_price_system,
                              ftap_equivalence, is_consistent, is_martingale_under, liquid_cone, optimal_consumption,
                              recession_linearity_check, superhedge_cost, superhedges)
from stochdual.polyhedral import Polyhedron, PolyhedralCone, PolyhedralFunction
from stochdual.tree import AdaptedProcess, ScenarioTree


def binomial(up=2.0, down=0.5, p=(0.4, 0.6)):
    tr = ScenarioTree.from_branching([list(p)])
    s = AdaptedProcess(tr, [1, 1], {0: [1.0], 1: [up], 2: [down]}, "s")
    return MarketModel.liquid(tr, s)


def call(model):
    U = np.zeros((3, model.d))
    U[1, 0] = 1.0            # (s - 1)^+ paid in cash: 1 in the up state
    return U


def test_delta_hedge_superhedges():
    m = binomial()
    x = AdaptedProcess(m.tree, [2, 2], {0: [-1 / 3, 2 / 3], 1: [0.0, 0.0], 2: [0.0, 0.0]})
    U = call(m)
    U[0] = [-1 / 3, 0.0]      # premium received at the root
    assert superhedges(m, x, U)
    U[0] = [-0.3, 0.0]        # premium too small
    assert not superhedges(m, x, U)
    kept = AdaptedProcess(m.tree, [2, 2], {0: [-1 / 3, 2 / 3], 1: [0.0, 1.0], 2: [0.0, 1.0]})
    U[0] = [-1 / 3, 0.0]
    assert not superhedges(m, kept, U)          # positions must be closed at the horizon


def test_call_cost_and_price_system():
    m = binomial()
    rep = superhedge_cost(m, call(m))
    assert rep.primal_value == pytest.approx(1 / 3, abs=1e-8)
    assert rep.dual_value == pytest.approx(1 / 3, abs=1e-8)
    assert is_consistent(m, rep.dual_solution, 1e-8)
    val, y = consistent_price_sup(m, call(m))
    assert val == pytest.approx(1 / 3, abs=1e-8)
    assert superhedges(m, rep.primal_solution, call(m) - rep.primal_value * np.eye(3, 2)[[0]].repeat(3, 0) * [[1], [0], [0]], 1e-8)


def test_cost_translation_and_zero():
    m = binomial()
    assert superhedge_cost(m, np.zeros((3, 2))).primal_value == pytest.approx(0.0, abs=1e-12)
    p = np.zeros((3, 2))
    p[0, 0] = 1.0
    assert superhedge_cost(m, 2.5 * p).primal_value == pytest.approx(2.5)
    base = superhedge_cost(m, call(m)).primal_value
    assert superhedge_cost(m, call(m) + 0.7 * p).primal_value == pytest.approx(base + 0.7)


def test_cost_monotone(rng):
    m = binomial()
    for _ in range(10):
        U = rng.integers(-2, 3, (3, 2)).astype(float)
        V = U + rng.integers(0, 2, (3, 2))
        assert superhedge_cost(m, V).primal_value >= superhedge_cost(m, U).primal_value - 1e-9


def test_transaction_cost_example():
    mi = load_problem(PROBLEMS / "transaction_costs.json")[0]
    rep = superhedge_cost(mi.model, mi.claim)
    want = (1.05 - 0.475) / (1.9 - 0.475)       # buy a = 1/1.425 shares at the ask, borrow the rest
    assert rep.primal_value == pytest.approx(want, abs=1e-8)
    assert rep.dual_value == pytest.approx(want, abs=1e-8)


def test_strict_consistent_price_systems():
    y = find_consistent_price_system(binomial(), strict=True)
    assert y is not None and np.all(y.as_array() > 0) and y.at(0)[0] == pytest.approx(1.0)
    assert find_consistent_price_system(binomial(2.0, 1.5), strict=True) is None
    # with both prices above 1 no martingale can stay on the price rays, strict or not
    assert find_consistent_price_system(binomial(2.0, 1.5), strict=False) is None


def test_no_trading_market():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    zero = Polyhedron.point([0.0, 0.0])
    m = MarketModel(tr, 2, {n: zero for n in tr.ids})
    assert m.conical
    assert find_consistent_price_system(m, strict=True) is not None
    assert check_no_arbitrage(m).no_arbitrage
    both = np.zeros((3, 2))
    both[1:, 0] = 1.0
    assert superhedge_cost(m, both).primal_value == pytest.approx(1.0)
    one = np.zeros((3, 2))
    one[1, 0] = 1.0
    assert superhedge_cost(m, one).primal_value == np.inf


def test_arbitrage_certificate():
    m = binomial(2.0, 1.5)
    rep = check_no_arbitrage(m)
    assert not rep.no_arbitrage and rep.value > 0
    U = rep.claim.as_array()
    assert np.all(U >= -1e-9) and U.sum() > 0
    assert superhedges(m, rep.hedge, U, 1e-8)
    ok = check_no_arbitrage(binomial())
    assert ok.no_arbitrage and ok.price_system is not None and np.all(ok.price_system.as_array() > 0)


def test_ftap_binomial_and_trinomial():
    rep = ftap_equivalence(binomial())
    assert rep.no_arbitrage and rep.martingale_measure and rep.agree
    assert rep.Q == pytest.approx([1 / 3, 2 / 3], abs=1e-8)
    assert rep.summary() == "no-arbitrage: true; Q = [0.3333, 0.6667]"
    bad = ftap_equivalence(binomial(2.0, 1.5))
    assert not bad.no_arbitrage and not bad.martingale_measure and bad.agree and bad.Q is None
    assert bad.summary() == "no-arbitrage: false; Q = none"
    tr = ScenarioTree.from_branching([[0.3, 0.3, 0.4]])
    s = AdaptedProcess(tr, [1, 1], {0: [1.0], 1: [2.0], 2: [1.0], 3: [0.5]})
    tri = ftap_equivalence(MarketModel.liquid(tr, s))
    assert tri.agree and tri.no_arbitrage
    assert np.all(tri.Q > 0) and tri.Q.sum() == pytest.approx(1.0)
    assert is_martingale_under(tr, tri.Q, s)


def test_ftap_rejects_nonliquid():
    mi = load_problem(PROBLEMS / "transaction_costs.json")[0]
    with pytest.raises(MarketModelError, match="liquid"):
        ftap_equivalence(mi.model)


def test_ftap_random_agreement(rng):
    for _ in range(15):
        assert ftap_equivalence(random_liquid_market(rng)).agree


def test_consumption_example():
    ci = load_problem(PROBLEMS / "consumption.json")[0]
    rep = optimal_consumption(ci.model, ci.utility, ci.endowment)
    assert rep.primal_value == pytest.approx(1.0) and rep.dual_value == pytest.approx(1.0)
    assert rep.details == {"sense": "max"} and abs(rep.gap) <= 1e-9


def test_consumption_weak_duality_random(rng):
    for _ in range(10):
        m = random_conical_market(rng, max_stages=2)
        F = {}
        for k in m.tree.leaves:
            # U(c) = min(c0, 1) on c >= 0, expressed as F = -U
            F[m.tree.ids[k]] = PolyhedralFunction(m.d, [np.eye(m.d)[0] * -1, np.zeros(m.d)], [0.0, -1.0],
                                                  Polyhedron(m.d, -np.eye(m.d), np.zeros(m.d)))
        w = np.zeros((len(m.tree), m.d))
        w[0, 0] = float(rng.integers(1, 4))
        rep = optimal_consumption(m, F, w)
        assert rep.dual_value >= rep.primal_value - 1e-7
        assert rep.gap == pytest.approx(0.0, abs=1e-6)


def test_recession_linearity():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    const = MarketModel.liquid(tr, AdaptedProcess(tr, [1, 1], {0: [1.0], 1: [1.0], 2: [1.0]}))
    assert recession_linearity_check(const).linear
    box = Polyhedron.box([-1.0, -1.0], [1.0, 1.0])
    bounded = MarketModel(tr, 2, {n: liquid_cone([1.5]) for n in tr.ids}, {0: box})
    assert recession_linearity_check(bounded).linear
    rep = recession_linearity_check(binomial(2.0, 1.5))
    assert not rep.linear and rep.witness is not None
    assert recession_linearity_check(binomial()).linear


def test_superhedge_duality_random(rng):
    done = 0
    while done < 8:
        m = random_conical_market(rng, max_stages=2)
        if not recession_linearity_check(m).linear:
            continue
        U = random_claim(rng, m)
        try:
            rep = superhedge_cost(m, U)
        except MarketModelError:
            continue
        if not np.isfinite(rep.primal_value):
            continue
        assert rep.dual_value == pytest.approx(rep.primal_value, abs=1e-6)
        assert consistent_price_sup(m, U)[0] == pytest.approx(rep.primal_value, abs=1e-6)
        done += 1


def test_invariant_errors_and_terminal_warning():
    tr = ScenarioTree.from_branching([[0.5, 0.5]])
    shifted = Polyhedron(2, [[1.0, 0.0]], [-1.0])
    with pytest.raises(MarketModelError, match="node 1: invariant 0 in C violated"):
        MarketModel(tr, 2, {0: liquid_cone([1.0]), 1: shifted, 2: liquid_cone([1.0])})
    with pytest.raises(MarketModelError, match="invariant 0 in D violated"):
        MarketModel(tr, 2, {n: liquid_cone([1.0]) for n in tr.ids}, {0: shifted})
    with pytest.raises(MarketModelError, match="no C set"):
        MarketModel(tr, 2, {0: liquid_cone([1.0])})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = MarketModel(tr, 2, {n: liquid_cone([1.0]) for n in tr.ids}, {1: Polyhedron(2)})
    assert m.warnings and "terminal D replaced" in m.warnings[0]


def test_cones_and_json():
    S = PolyhedralFunction.max_affine([[2.0], [2.0]], [0.0, 0.0])   # S(z) = 2 z
    assert cash_delivery_cone(S).equals(liquid_cone([2.0]))
    assert bid_ask_cone([1.5], [1.5]).equals(liquid_cone([1.5]))
    m = binomial()
    m2 = MarketModel.from_json(json.loads(json.dumps(m.to_json())))
    assert m2.is_liquid() and all(a.equals(b) for a, b in zip(m.C, m2.C))
    tc = load_problem(PROBLEMS / "transaction_costs.json")[0].model
    tc2 = MarketModel.from_json(json.loads(json.dumps(tc.to_json())))
    assert all(a.equals(b) for a, b in zip(tc.C, tc2.C)) and all(a.equals(b) for a, b in zip(tc.D, tc2.D))


def test_bolza_terms_shape():
    m = binomial()
    L = bolza_terms(m)
    assert set(L) == set(m.tree.ids) and all(f.dim == 2 * m.d for f in L.values())
    assert L[1]([0.0, 0.0, 0.0, 0.0]) == 0.0 and L[1]([1.0, 0.0, 0.0, 0.0]) == np.inf
