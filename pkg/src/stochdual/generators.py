"""Seeded random instances for property tests and acceptance runs.

Data are small integers so that exact facts (feasibility, boundedness) hold by
construction and the double-description steps stay well conditioned.
"""
from __future__ import annotations

import numpy as np

from .duality import ShadowPriceProgram, StochasticProgram, TimeSeparableProgram
from .market import MarketModel, bid_ask_cone
from .polyhedral import Polyhedron, PolyhedralCone, PolyhedralFunction
from .tree import AdaptedProcess, ScenarioProcess, ScenarioTree, random_tree


def _int(rng, lo, hi, size=None):
    return rng.integers(lo, hi + 1, size=size).astype(float)


def random_program(rng: np.random.Generator, max_stages: int = 4, max_branching: int = 3,
                   max_n: int = 3, max_m: int = 3, adapted_u: bool = False) -> StochasticProgram:
    """Feasible, bounded program: every ``x_t`` lies in a box and ``x = 0`` is feasible."""
    tree = random_tree(rng, int(rng.integers(1, max_stages + 1)), max_branching)
    T = tree.horizon
    n_dims = [int(rng.integers(1, max_n + 1)) for _ in range(T + 1)]
    m_dims = [int(rng.integers(0, max_m + 1)) for _ in range(T + 1)]
    L = tree.leaves.size
    blocks = []
    for t in range(T + 1):
        b = _int(rng, -2, 2, (L, m_dims[t]))
        if adapted_u or t == T:
            anc = tree.leaf_ancestors[t]
            first = {a: i for i, a in reversed(list(enumerate(anc)))}
            b = b[[first[a] for a in anc]]
        blocks.append(b)
    u = ScenarioProcess(tree, blocks, "u")
    hist = np.cumsum(n_dims)
    terms = {}
    for k in range(len(tree)):
        t = tree.stage[k]
        N, m, nt = int(hist[t]), m_dims[t], n_dims[t]
        d = N + m
        npieces = int(rng.integers(1, 4))
        A = np.zeros((npieces, d))
        A[:, N - nt:N] = _int(rng, -3, 3, (npieces, nt))
        A[:, N:] = _int(rng, -2, 2, (npieces, m))
        if N > nt:
            mask = rng.random((npieces, N - nt)) < 0.3
            A[:, :N - nt] = mask * _int(rng, -2, 2, (npieces, N - nt))
        b = _int(rng, -2, 2, npieces)
        bound = _int(rng, 1, 4)
        G = [np.concatenate([np.zeros(N - nt), e, np.zeros(m)]) for e in np.vstack([np.eye(nt), -np.eye(nt)])]
        h = [bound] * (2 * nt)
        if m and rng.random() < 0.7:
            g = np.zeros(d)
            g[:N] = _int(rng, -2, 2, N)
            g[N:] = _int(rng, -2, 2, m)
            ub = u.blocks[t][tree.leaves_under(k)]
            r = float(np.max(ub @ g[N:])) + _int(rng, 0, 2)
            G.append(g)
            h.append(r)
        terms[tree.ids[k]] = PolyhedralFunction(d, A, b, Polyhedron(d, np.array(G), np.array(h)))
    return StochasticProgram(tree, n_dims, m_dims, terms, u)


def random_polyhedral_function(rng: np.random.Generator, dim: int, max_pieces: int = 4,
                               bounded_domain: bool = True) -> PolyhedralFunction:
    k = int(rng.integers(1, max_pieces + 1))
    A = _int(rng, -3, 3, (k, dim))
    b = _int(rng, -3, 3, k)
    if bounded_domain:
        dom = Polyhedron.box(-_int(rng, 1, 4, dim), _int(rng, 1, 4, dim))
    else:
        dom = Polyhedron(dim)
    return PolyhedralFunction(dim, A, b, dom)


def random_coercive_function(rng: np.random.Generator, dim: int, max_pieces: int = 3) -> PolyhedralFunction:
    """Finite everywhere and bounded below: random pieces plus an l1 penalty around a random center."""
    base = PolyhedralFunction.abs_sum(dim, _int(rng, -2, 2, dim), weight=float(rng.integers(2, 5)))
    k = int(rng.integers(0, max_pieces + 1))
    A = np.vstack([base.A, base.A[:1] * 0 + _int(rng, -1, 1, (k, dim))]) if k else base.A
    b = np.concatenate([base.b, _int(rng, -2, 2, k)]) if k else base.b
    # extra pieces are added to the penalty so the sum stays coercive
    if k:
        extra = PolyhedralFunction(dim, A[len(base.b):], b[len(base.b):])
        return base + extra
    return base


def random_time_separable(rng: np.random.Generator, max_stages: int = 3, max_branching: int = 3,
                          max_n: int = 2, max_m: int = 2) -> TimeSeparableProgram:
    """Linear-programming-type instance with ``x >= 0`` boxes; ``x = 0`` is feasible."""
    tree = random_tree(rng, int(rng.integers(1, max_stages + 1)), max_branching)
    T = tree.horizon
    n_dims = [int(rng.integers(1, max_n + 1)) for _ in range(T + 1)]
    m = int(rng.integers(1, max_m + 1))
    f0, A, b = {}, {}, {}
    for k in range(len(tree)):
        nid = tree.ids[k]
        n = n_dims[tree.stage[k]]
        pieces = _int(rng, -3, 3, (int(rng.integers(1, 3)), n))
        f0[nid] = PolyhedralFunction(n, pieces, _int(rng, -1, 1, pieces.shape[0]),
                                     Polyhedron.box(np.zeros(n), _int(rng, 1, 3, n)))
        A[nid] = _int(rng, -2, 2, (m, n))
        b[nid] = -_int(rng, 0, 1, m)
    u = -_int(rng, 0, 2, (tree.leaves.size, m))
    return TimeSeparableProgram(tree, n_dims, m, f0, A, b, u)


def random_shadow_price(rng: np.random.Generator, max_stages: int = 3, max_branching: int = 3,
                        max_n: int = 2) -> ShadowPriceProgram:
    tree = random_tree(rng, int(rng.integers(2, max_stages + 1)), max_branching, min_branching=2)
    T = tree.horizon
    n_dims = [int(rng.integers(1, max_n + 1)) for _ in range(T + 1)]
    n = sum(n_dims)
    h = {}
    for k in tree.leaves:
        h[tree.ids[k]] = random_coercive_function(rng, n, 2)
    return ShadowPriceProgram(tree, n_dims, h)


PRICE_FACTORS = np.array([0.5, 0.8, 1.0, 1.25, 2.0])


def random_prices(rng: np.random.Generator, tree: ScenarioTree, k: int) -> AdaptedProcess:
    """Strictly positive prices; each child multiplies its parent's price by a random factor."""
    vals = {}
    for kk in range(len(tree)):
        par = tree.parent[kk]
        base = np.ones(k) if par < 0 else vals[tree.ids[par]]
        vals[tree.ids[kk]] = base * (1.0 if par < 0 else rng.choice(PRICE_FACTORS, size=k))
    return AdaptedProcess(tree, [k] * (tree.horizon + 1), vals, "s")


def random_liquid_market(rng: np.random.Generator, max_stages: int = 3, max_branching: int = 3,
                         max_assets: int = 2) -> MarketModel:
    tree = random_tree(rng, int(rng.integers(1, max_stages + 1)), max_branching, min_branching=2)
    return MarketModel.liquid(tree, random_prices(rng, tree, int(rng.integers(1, max_assets + 1))))


def random_conical_market(rng: np.random.Generator, max_stages: int = 3, max_branching: int = 3,
                          max_assets: int = 2) -> MarketModel:
    """Bid-ask spreads around random prices plus conical portfolio constraints.

    ``D`` is drawn from: unconstrained, no short sales, or short positions
    covered by cash (``x_i >= -x_0``); all contain the cash direction.
    """
    tree = random_tree(rng, int(rng.integers(1, max_stages + 1)), max_branching, min_branching=2)
    k = int(rng.integers(1, max_assets + 1))
    d = k + 1
    s = random_prices(rng, tree, k)
    C, D = {}, {}
    for kk in range(len(tree)):
        nid = tree.ids[kk]
        spread = float(rng.choice([0.0, 0.05, 0.1]))
        C[nid] = bid_ask_cone(s.at(kk) * (1 - spread), s.at(kk) * (1 + spread))
        if tree.stage[kk] < tree.horizon:
            kind = int(rng.integers(0, 3))
            if kind == 1:
                D[nid] = PolyhedralCone(d, -np.eye(d)[1:])
            elif kind == 2:
                G = -np.eye(d)[1:]
                G[:, 0] = -1.0
                D[nid] = PolyhedralCone(d, G)
    return MarketModel(tree, d, C, D)


def random_claim(rng: np.random.Generator, model: MarketModel, cash_only: bool = False) -> np.ndarray:
    """Node-ordered ``(#nodes, d)`` integer claim array."""
    U = _int(rng, -2, 2, (len(model.tree), model.d))
    if cash_only:
        U[:, 1:] = 0.0
    return U
