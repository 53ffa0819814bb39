"""Optimal stopping on a scenario tree: LP relaxation, Snell envelope, martingale bounds.

All values are for the maximization form ``sup_tau E Z_tau`` over stopping
times (``tau`` may also never stop, which earns nothing).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import lp as _lp
from .tree import AdaptedProcess, ScenarioTree, doob_martingale_part, is_martingale

__all__ = [
    "StoppingProblem", "StoppingSolution", "RogersBound", "snell_envelope", "solve_stopping_lp",
    "rogers_bound", "doob_martingale_part", "enumerate_stopping_values", "count_stopping_times",
    "best_pure_stopping_value", "stopping_rule_value",
]

TIE_TOL = 1e-9


class StoppingProblem:
    """Nonnegative scalar reward process ``Z`` on a tree."""

    def __init__(self, tree: ScenarioTree, Z: AdaptedProcess | Mapping[int, float]):
        if not isinstance(Z, AdaptedProcess):
            Z = AdaptedProcess(tree, [1] * (tree.horizon + 1), {k: [float(np.ravel([v])[0])] for k, v in Z.items()}, "Z")
        if set(Z.dims) != {1}:
            raise ValueError(f"reward must be scalar at every stage, got dims {Z.dims}")
        z = Z.as_array()[:, 0]
        neg = np.flatnonzero(z < 0)
        if neg.size:
            raise ValueError(f"reward must be nonnegative; node {tree.ids[neg[0]]} has Z = {z[neg[0]]}")
        self.tree = tree
        self.Z = Z
        self.z = z

    def to_json(self) -> dict:
        return {"tree": self.tree.to_json(), "reward": {str(self.tree.ids[k]): float(self.z[k]) for k in range(len(self.tree))}}

    @classmethod
    def from_json(cls, data: Mapping, tree: ScenarioTree | None = None) -> "StoppingProblem":
        tree = ScenarioTree.from_json(data["tree"]) if tree is None else tree
        return cls(tree, reward_from_json(tree, data["reward"]))


def reward_from_json(tree: ScenarioTree, data: Mapping) -> dict[int, float]:
    """Node-id keyed reward; every node must be present."""
    out = {}
    for nid in tree.ids:
        key = str(nid)
        if key not in data:
            raise KeyError(f"reward has no value for node {nid}")
        out[nid] = float(np.ravel([data[key]])[0])
    return out


def _scalar(tree: ScenarioTree, v: np.ndarray, name: str) -> AdaptedProcess:
    return AdaptedProcess(tree, [1] * (tree.horizon + 1), [[float(a)] for a in v], name)


def _cond_exp_next(tree: ScenarioTree, v: np.ndarray, k: int) -> float:
    return float(sum(tree.cond_prob[c] * v[c] for c in tree.children[k]))


def snell_envelope(sp: StoppingProblem) -> AdaptedProcess:
    """Backward induction ``V_T = Z_T``, ``V_t = max(Z_t, E_t V_{t+1})``."""
    tr = sp.tree
    V = np.zeros(len(tr))
    for t in range(tr.horizon, -1, -1):
        for k in tr.stage_nodes[t]:
            V[k] = sp.z[k] if not tr.children[k] else max(sp.z[k], _cond_exp_next(tr, V, k))
    return _scalar(tr, V, "V")


@dataclass
class StoppingSolution:
    value: float
    x: AdaptedProcess
    rule: dict[int, bool]
    y: AdaptedProcess
    snell: AdaptedProcess
    lp_solution: _lp.LPSolution


def solve_stopping_lp(sp: StoppingProblem) -> StoppingSolution:
    """``max E sum_t x_t Z_t`` with ``x >= 0`` and ``sum_t x_t <= 1`` along every path.

    The multiplier ``lam_leaf`` of the path row gives the dual martingale
    ``y_node = sum_{leaves below} lam / P(node)``, which dominates ``Z`` and has
    ``y_root`` equal to the value.  The stopping rule stops at the first node
    where the Snell envelope touches the reward.
    """
    tr = sp.tree
    P = tr.prob
    B = _lp.LPBuilder()
    xc = [B.add_var(cost=-P[k] * sp.z[k], lower=0.0) for k in range(len(tr))]
    rows = [B.add_row([(xc[j], 1.0) for j in tr.path(leaf)], 1.0) for leaf in tr.leaves]
    sol = _lp.solve(B.build())
    if not sol.optimal:
        raise RuntimeError(f"stopping LP failed: {sol.status.value}")
    lam = np.array([sol.dual[r] for r in rows])
    y = np.zeros(len(tr))
    for pos, leaf in enumerate(tr.leaves):
        for j in tr.path(leaf):
            y[j] += lam[pos]
    y /= P
    V = snell_envelope(sp)
    v = V.as_array()[:, 0]
    rule = {}
    stopped = np.zeros(len(tr), dtype=bool)
    for t in range(tr.horizon + 1):
        for k in tr.stage_nodes[t]:
            par = tr.parent[k]
            already = par >= 0 and (stopped[par] or rule[tr.ids[par]])
            stopped[k] = already
            rule[tr.ids[k]] = bool((not already) and abs(v[k] - sp.z[k]) <= TIE_TOL * max(1.0, abs(v[k])))
    x = np.clip(np.array([sol.x[c] for c in xc]), 0.0, 1.0)
    return StoppingSolution(-float(sol.objective_value), _scalar(tr, x, "x"), rule, _scalar(tr, y, "y"), V, sol)


def stopping_rule_value(sp: StoppingProblem, rule: Mapping[int, bool]) -> float:
    """``E Z_tau`` for the stopping time that stops at the first node flagged in ``rule``."""
    tr = sp.tree
    total = 0.0
    for leaf in tr.leaves:
        for j in tr.path(leaf):
            if rule.get(tr.ids[j], False):
                total += tr.prob[leaf] * sp.z[j]
                break
    return float(total)


@dataclass
class RogersBound:
    bound: float
    stderr: float
    n_paths: int | None
    exact: bool


def _pathwise(sp: StoppingProblem, y: np.ndarray) -> np.ndarray:
    """``max_t (Z_t - y_t + y_0)`` per leaf path."""
    tr = sp.tree
    root = tr.stage_nodes[0][0]
    out = np.empty(tr.leaves.size)
    for pos, leaf in enumerate(tr.leaves):
        p = tr.path(leaf)
        out[pos] = max(sp.z[j] - y[j] + y[root] for j in p)
    return out


def rogers_bound(sp: StoppingProblem, y: AdaptedProcess, mc: int | None = None, seed: int | None = None,
                 workers: int = 1, tol: float = 1e-9) -> RogersBound:
    """Upper bound ``U(y) = E[max_t (Z_t - y_t + y_0)]`` for a martingale ``y``.

    Exact by path enumeration when ``mc`` is ``None``; otherwise ``mc`` paths
    are sampled (a seed is required) across ``workers`` independent streams
    spawned from the seed, and the standard error is reported.
    """
    if set(y.dims) != {1}:
        raise ValueError("penalty must be scalar")
    if not is_martingale(y, tol):
        raise ValueError("penalty y is not a martingale")
    vals = _pathwise(sp, y.as_array()[:, 0])
    probs = sp.tree.prob[sp.tree.leaves]
    if mc is None:
        return RogersBound(float(probs @ vals), 0.0, None, True)
    if seed is None:
        raise ValueError("Monte Carlo evaluation requires a seed")
    if mc < 2:
        raise ValueError("need at least two sample paths")
    workers = max(1, int(workers))
    sizes = [mc // workers + (1 if i < mc % workers else 0) for i in range(workers)]
    streams = np.random.SeedSequence(seed).spawn(workers)

    def draw(args):
        ss, n = args
        rng = np.random.default_rng(ss)
        return vals[rng.choice(vals.size, size=n, p=probs / probs.sum())]

    with ThreadPoolExecutor(max_workers=workers) as ex:
        samples = np.concatenate(list(ex.map(draw, zip(streams, sizes))))
    return RogersBound(float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(mc)), int(mc), False)


# ---------------------------------------------------------------------------
# exhaustive enumeration oracle


def count_stopping_times(tree: ScenarioTree) -> int:
    """Number of stopping times: at each node not yet stopped, stop or continue (never stopping allowed)."""
    cnt = [0] * len(tree)
    for t in range(tree.horizon, -1, -1):
        for k in tree.stage_nodes[t]:
            prod = 1
            for c in tree.children[k]:
                prod *= cnt[c]
            cnt[k] = 1 + (prod if tree.children[k] else 1)
    return cnt[tree.stage_nodes[0][0]]


def enumerate_stopping_values(sp: StoppingProblem, limit: int = 5_000_000) -> np.ndarray:
    """``E Z_tau`` for every stopping time, one entry per stopping time."""
    tr = sp.tree
    n = count_stopping_times(tr)
    if n > limit:
        raise ValueError(f"{n} stopping times exceed the enumeration limit {limit}")
    vals: list[np.ndarray | None] = [None] * len(tr)
    for t in range(tr.horizon, -1, -1):
        for k in tr.stage_nodes[t]:
            stop_here = np.array([tr.prob[k] * sp.z[k]])
            if tr.children[k]:
                cont = np.zeros(1)
                for c in tr.children[k]:
                    cont = (cont[:, None] + vals[c][None, :]).ravel()
                    vals[c] = None
            else:
                cont = np.zeros(1)            # never stop
            vals[k] = np.concatenate([stop_here, cont])
    return vals[tr.stage_nodes[0][0]]


def best_pure_stopping_value(sp: StoppingProblem, limit: int = 5_000_000) -> float:
    return float(enumerate_stopping_values(sp, limit).max())
