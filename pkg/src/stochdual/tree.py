"""Finite filtered probability spaces as rooted trees, and processes on them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12


class TreeError(ValueError):
    """Raised when tree data violates a structural invariant."""


@dataclass(frozen=True)
class NodeRecord:
    id: int
    parent: int | None
    stage: int
    cond_prob: float


class ScenarioTree:
    """Rooted tree whose stage-``t`` nodes are the atoms of the time-``t`` sigma-algebra.

    Probabilities are given conditionally on the parent; absolute node
    probabilities are derived.  Nodes are kept in a canonical order (by stage,
    then id) and addressed either by id or by position in that order.
    """

    def __init__(self, nodes: Iterable[NodeRecord | Mapping], horizon: int | None = None):
        recs = [n if isinstance(n, NodeRecord) else _record_from_mapping(n) for n in nodes]
        if not recs:
            raise TreeError("tree has no nodes")
        by_id: dict[int, NodeRecord] = {}
        for r in recs:
            if r.id in by_id:
                raise TreeError(f"duplicate node id {r.id}")
            by_id[r.id] = r
        roots = [r for r in recs if r.parent is None]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        for r in recs:
            if r.parent is not None and r.parent not in by_id:
                raise TreeError(f"node {r.id}: unknown parent {r.parent}")
            if not (0.0 < r.cond_prob <= 1.0 + PROB_TOL):
                raise TreeError(f"node {r.id}: cond_prob {r.cond_prob} outside (0, 1]")

        # stages follow from depth; a supplied stage must agree
        stage: dict[int, int] = {}
        for r in recs:
            chain, cur = [], r.id
            while cur not in stage:
                chain.append(cur)
                p = by_id[cur].parent
                if p is None:
                    stage[cur] = 0
                    chain.pop()
                    break
                if len(chain) > len(recs):
                    raise TreeError(f"cycle through node {r.id}")
                cur = p
            for nid in reversed(chain):
                stage[nid] = stage[by_id[nid].parent] + 1
        for r in recs:
            if r.stage >= 0 and r.stage != stage[r.id]:
                raise TreeError(f"node {r.id}: stage {r.stage} but depth is {stage[r.id]}")

        T = max(stage.values())
        if horizon is not None and horizon != T:
            raise TreeError(f"horizon {horizon} but deepest node is at stage {T}")
        self.horizon = T

        order = sorted(by_id, key=lambda i: (stage[i], i))
        self.ids: tuple[int, ...] = tuple(order)
        self.index: dict[int, int] = {nid: k for k, nid in enumerate(order)}
        n = len(order)
        self.stage = np.array([stage[i] for i in order], dtype=int)
        self.parent = np.array([-1 if by_id[i].parent is None else self.index[by_id[i].parent] for i in order], dtype=int)
        self.cond_prob = np.array([by_id[i].cond_prob for i in order], dtype=float)
        self.children: tuple[tuple[int, ...], ...] = tuple(
            tuple(int(k) for k in np.flatnonzero(self.parent == j)) for j in range(n)
        )

        for j in range(n):
            ch = self.children[j]
            if ch:
                s = self.cond_prob[list(ch)].sum()
                if abs(s - 1.0) > PROB_TOL * max(1, len(ch)) * 10:
                    raise TreeError(f"children of node {self.ids[j]} have probabilities summing to {s:.12g}, not 1")
            elif self.stage[j] < T:
                raise TreeError(f"node {self.ids[j]} at stage {self.stage[j]} < {T} has no children")

        prob = np.empty(n)
        for j in range(n):
            prob[j] = 1.0 if self.parent[j] < 0 else prob[self.parent[j]] * self.cond_prob[j]
        self.prob = prob
        self.stage_nodes: tuple[np.ndarray, ...] = tuple(np.flatnonzero(self.stage == t) for t in range(T + 1))
        self.leaves = self.stage_nodes[T]
        # ancestors[t][k] = index of the stage-t ancestor of leaf k
        anc = np.empty((T + 1, self.leaves.size), dtype=int)
        cur = self.leaves.copy()
        for t in range(T, -1, -1):
            anc[t] = cur
            cur = self.parent[cur]
        self.leaf_ancestors = anc

    # -- basic queries -----------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids)

    def __repr__(self) -> str:
        return f"ScenarioTree(nodes={len(self)}, horizon={self.horizon}, leaves={self.leaves.size})"

    def idx(self, node_id: int) -> int:
        try:
            return self.index[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id}") from None

    def node_probability(self, node_id: int) -> float:
        return float(self.prob[self.idx(node_id)])

    def path(self, k: int) -> list[int]:
        """Node indices from the root down to (and including) index ``k``."""
        out = []
        while k >= 0:
            out.append(k)
            k = self.parent[k]
        return out[::-1]

    def ancestor(self, k: int, t: int) -> int:
        while self.stage[k] > t:
            k = self.parent[k]
        return k

    def descendants_at(self, k: int, s: int) -> np.ndarray:
        """Indices of stage-``s`` descendants of node index ``k``."""
        cand = self.stage_nodes[s]
        anc = cand.copy()
        for _ in range(s - self.stage[k]):
            anc = self.parent[anc]
        return cand[anc == k]

    def leaves_under(self, k: int) -> np.ndarray:
        """Positions (into ``self.leaves``) of the leaves below node index ``k``."""
        return np.flatnonzero(self.leaf_ancestors[self.stage[k]] == k)

    # -- serialization -----------------------------------------------------

    def records(self) -> list[NodeRecord]:
        return [
            NodeRecord(self.ids[j], None if self.parent[j] < 0 else self.ids[self.parent[j]], int(self.stage[j]), float(self.cond_prob[j]))
            for j in range(len(self))
        ]

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "nodes": [{"id": r.id, "parent": r.parent, "cond_prob": r.cond_prob} for r in self.records()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ScenarioTree":
        return cls(data["nodes"], horizon=data.get("horizon"))

    @classmethod
    def from_branching(cls, probs_per_stage: Sequence[Sequence[float]]) -> "ScenarioTree":
        """Recombining-free tree where every stage-``t`` node has the same
        conditional branch probabilities ``probs_per_stage[t]``."""
        nodes = [NodeRecord(0, None, 0, 1.0)]
        frontier = [0]
        nxt = 1
        for probs in probs_per_stage:
            new = []
            for p in frontier:
                for q in probs:
                    nodes.append(NodeRecord(nxt, p, -1, float(q)))
                    new.append(nxt)
                    nxt += 1
            frontier = new
        return cls(nodes)


def _record_from_mapping(m: Mapping) -> NodeRecord:
    return NodeRecord(int(m["id"]), None if m.get("parent") is None else int(m["parent"]), int(m.get("stage", -1)), float(m.get("cond_prob", 1.0)))


def random_tree(rng: np.random.Generator, stages: int, max_branching: int, max_nodes: int | None = None,
                min_branching: int = 1) -> ScenarioTree:
    """Random tree with ``stages`` levels (horizon ``stages - 1``) and strictly
    positive, Dirichlet-drawn branch probabilities."""
    nodes = [NodeRecord(0, None, 0, 1.0)]
    frontier = [0]
    count = 1
    for t in range(1, stages):
        new = []
        for i, p in enumerate(frontier):
            k = int(rng.integers(min_branching, max_branching + 1))
            if max_nodes is not None:
                # keep room for one child per remaining frontier node
                room = max_nodes - count - (len(frontier) - i - 1)
                k = max(1, min(k, room))
            probs = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
            probs /= probs.sum()
            for q in probs:
                nodes.append(NodeRecord(count, p, t, float(q)))
                new.append(count)
                count += 1
        frontier = new
    return ScenarioTree(nodes)


# ---------------------------------------------------------------------------
# processes


class AdaptedProcess(Mapping):
    """Node-indexed real vectors; the stage-``t`` value has length ``dims[t]``.

    Behaves as a read-only mapping ``node id -> np.ndarray``.
    """

    def __init__(self, tree: ScenarioTree, dims: Sequence[int], values: Mapping[int, Sequence[float]] | np.ndarray,
                 name: str = ""):
        self.tree = tree
        self.dims = tuple(int(d) for d in dims)
        self.name = name
        if len(self.dims) != tree.horizon + 1:
            raise ValueError(f"dims has length {len(self.dims)}, expected {tree.horizon + 1}")
        vals: list[np.ndarray] = []
        if isinstance(values, Mapping):
            for j, nid in enumerate(tree.ids):
                key = nid if nid in values else str(nid)
                if key not in values:
                    raise KeyError(f"process {name or ''} has no value at node {nid}".replace("  ", " "))
                vals.append(np.atleast_1d(np.asarray(values[key], dtype=float)).reshape(-1))
        else:
            arr = list(values)
            if len(arr) != len(tree):
                raise ValueError("value array must have one entry per node")
            vals = [np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1) for v in arr]
        for j, v in enumerate(vals):
            d = self.dims[tree.stage[j]]
            if v.size != d:
                raise ValueError(f"node {tree.ids[j]}: value has length {v.size}, stage {tree.stage[j]} expects {d}")
            v.setflags(write=False)
        self._vals = tuple(vals)

    # Mapping interface keyed by node id
    def __getitem__(self, node_id: int) -> np.ndarray:
        return self._vals[self.tree.idx(node_id)]

    def __iter__(self) -> Iterator[int]:
        return iter(self.tree.ids)

    def __len__(self) -> int:
        return len(self._vals)

    def __repr__(self) -> str:
        return f"AdaptedProcess(name={self.name!r}, dims={self.dims})"

    def at(self, k: int) -> np.ndarray:
        """Value at node index ``k``."""
        return self._vals[k]

    def stage_array(self, t: int) -> np.ndarray:
        """``(#stage-t nodes, dims[t])`` array in canonical node order."""
        nodes = self.tree.stage_nodes[t]
        return np.array([self._vals[k] for k in nodes]).reshape(nodes.size, self.dims[t])

    def as_array(self) -> np.ndarray:
        """Node-ordered 2-d array; requires constant dims."""
        if len(set(self.dims)) != 1:
            raise ValueError("dimension varies across stages")
        return np.array(self._vals).reshape(len(self.tree), self.dims[0])

    @classmethod
    def from_array(cls, tree: ScenarioTree, arr: np.ndarray, name: str = "") -> "AdaptedProcess":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        return cls(tree, [arr.shape[1]] * (tree.horizon + 1), list(arr), name)

    @classmethod
    def constant(cls, tree: ScenarioTree, value, name: str = "") -> "AdaptedProcess":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.from_array(tree, np.tile(v, (len(tree), 1)), name)

    def map(self, fn) -> "AdaptedProcess":
        vals = [np.atleast_1d(fn(v)) for v in self._vals]
        dims = [vals[self.tree.stage_nodes[t][0]].size for t in range(self.tree.horizon + 1)]
        return AdaptedProcess(self.tree, dims, vals, self.name)

    def __add__(self, other: "AdaptedProcess") -> "AdaptedProcess":
        return AdaptedProcess(self.tree, self.dims, [a + b for a, b in zip(self._vals, other._vals)])

    def __sub__(self, other: "AdaptedProcess") -> "AdaptedProcess":
        return AdaptedProcess(self.tree, self.dims, [a - b for a, b in zip(self._vals, other._vals)])

    def __neg__(self) -> "AdaptedProcess":
        return AdaptedProcess(self.tree, self.dims, [-a for a in self._vals])

    def to_scenario(self) -> "ScenarioProcess":
        tr = self.tree
        blocks = [self.stage_array(t)[np.searchsorted(tr.stage_nodes[t], tr.leaf_ancestors[t])] for t in range(tr.horizon + 1)]
        return ScenarioProcess(tr, blocks, self.name)

    def to_json(self) -> dict:
        return {"name": self.name, "dims": list(self.dims),
                "values": {str(nid): self._vals[k].tolist() for k, nid in enumerate(self.tree.ids)}}

    @classmethod
    def from_json(cls, tree: ScenarioTree, data: Mapping) -> "AdaptedProcess":
        return cls(tree, data["dims"], data["values"], data.get("name", ""))


class ScenarioProcess:
    """A process ``(y_t)`` whose components need not be adapted.

    ``blocks[t]`` has shape ``(#leaves, dims[t])``: the value of ``y_t`` in each
    scenario (leaf), so ``y_t`` is only assumed measurable at the horizon.
    """

    def __init__(self, tree: ScenarioTree, blocks: Sequence[np.ndarray], name: str = ""):
        self.tree = tree
        self.name = name
        L = tree.leaves.size
        bl = []
        for t, b in enumerate(blocks):
            b = np.asarray(b, dtype=float)
            if b.ndim == 1:
                b = b.reshape(L, -1) if b.size % L == 0 and b.size else b.reshape(L, 0)
            if b.shape[0] != L:
                raise ValueError(f"stage {t} block has {b.shape[0]} rows, tree has {L} leaves")
            bl.append(b)
        if len(bl) != tree.horizon + 1:
            raise ValueError(f"expected {tree.horizon + 1} stage blocks, got {len(bl)}")
        self.blocks = tuple(bl)
        self.dims = tuple(b.shape[1] for b in bl)

    def __repr__(self) -> str:
        return f"ScenarioProcess(name={self.name!r}, dims={self.dims})"

    @classmethod
    def zeros(cls, tree: ScenarioTree, dims: Sequence[int]) -> "ScenarioProcess":
        return cls(tree, [np.zeros((tree.leaves.size, d)) for d in dims])

    def flat(self) -> np.ndarray:
        """``(#leaves, sum(dims))`` concatenation of all stage blocks."""
        return np.hstack(self.blocks) if self.blocks else np.zeros((self.tree.leaves.size, 0))

    def is_adapted(self, tol: float = 1e-12) -> bool:
        tr = self.tree
        for t, b in enumerate(self.blocks):
            anc = tr.leaf_ancestors[t]
            for k in np.unique(anc):
                rows = b[anc == k]
                if rows.size and np.abs(rows - rows[0]).max() > tol:
                    return False
        return True

    def to_adapted(self) -> AdaptedProcess:
        """Node representation; raises if some component is not adapted."""
        if not self.is_adapted(1e-9):
            raise ValueError("process is not adapted")
        tr = self.tree
        vals: list = [None] * len(tr)
        for t, b in enumerate(self.blocks):
            anc = tr.leaf_ancestors[t]
            for pos, k in enumerate(anc):
                if vals[k] is None:
                    vals[k] = b[pos]
        return AdaptedProcess(tr, self.dims, vals, self.name)

    def __sub__(self, other: "ScenarioProcess") -> "ScenarioProcess":
        return ScenarioProcess(self.tree, [a - b for a, b in zip(self.blocks, other.blocks)])

    def pairing(self, other: "ScenarioProcess") -> float:
        """``E[sum_t u_t . y_t]``."""
        p = self.tree.prob[self.tree.leaves]
        return float(sum(p @ np.einsum("ij,ij->i", a, b) for a, b in zip(self.blocks, other.blocks) if a.shape[1]))

    def to_json(self) -> dict:
        tr = self.tree
        return {"name": self.name, "dims": list(self.dims),
                "scenario_values": {str(tr.ids[k]): [b[pos].tolist() for b in self.blocks] for pos, k in enumerate(tr.leaves)}}

    @classmethod
    def from_json(cls, tree: ScenarioTree, data: Mapping) -> "ScenarioProcess":
        if "scenario_values" not in data:
            return AdaptedProcess.from_json(tree, data).to_scenario()
        dims = [int(d) for d in data["dims"]]
        sv = data["scenario_values"]
        blocks = [np.zeros((tree.leaves.size, d)) for d in dims]
        for pos, k in enumerate(tree.leaves):
            nid = tree.ids[k]
            key = str(nid) if str(nid) in sv else nid
            if key not in sv:
                raise KeyError(f"process {data.get('name', '')} has no value at leaf {nid}")
            for t, d in enumerate(dims):
                blocks[t][pos] = np.asarray(sv[key][t], dtype=float).reshape(d)
        return cls(tree, blocks, data.get("name", ""))


# ---------------------------------------------------------------------------
# probabilistic operations


def node_probability(tree: ScenarioTree, node_id: int) -> float:
    return tree.node_probability(node_id)


def _stage_of(tree: ScenarioTree, z: Mapping[int, float]) -> int:
    stages = {int(tree.stage[tree.idx(n)]) for n in z}
    if len(stages) != 1:
        raise ValueError(f"values must live on a single stage, found stages {sorted(stages)}")
    return stages.pop()


def _as_stage_values(tree: ScenarioTree, z) -> tuple[int, np.ndarray]:
    """Normalize stage-restricted input to (stage, array in stage_nodes order)."""
    if isinstance(z, tuple) and len(z) == 2 and isinstance(z[0], AdaptedProcess):
        proc, t = z
        return t, proc.stage_array(t)
    s = _stage_of(tree, z)
    nodes = tree.stage_nodes[s]
    if len(z) != nodes.size:
        missing = [tree.ids[k] for k in nodes if tree.ids[k] not in z]
        raise KeyError(f"missing values at nodes {missing}")
    arr = np.array([np.atleast_1d(np.asarray(z[tree.ids[k]], dtype=float)) for k in nodes])
    return s, arr


def expectation(tree: ScenarioTree, z) -> float:
    """``sum P(node) * value`` over the nodes of one stage.

    ``z`` maps the node ids of a single stage to scalars, or is a pair
    ``(AdaptedProcess, stage)`` with a scalar stage component.
    """
    s, arr = _as_stage_values(tree, z)
    if arr.ndim > 1 and arr.shape[1] != 1:
        raise ValueError("expectation needs scalar values")
    return float(tree.prob[tree.stage_nodes[s]] @ arr.reshape(-1))


def conditional_expectation(tree: ScenarioTree, z, to_stage: int) -> dict[int, np.ndarray]:
    """``E_t z`` for ``z`` measurable at some stage ``s >= t``.

    Returns a mapping from the stage-``to_stage`` node ids to values.
    """
    s, arr = _as_stage_values(tree, z)
    t = to_stage
    if t > s:
        raise ValueError(f"cannot condition a stage-{s} variable on stage {t} > {s}")
    if t < 0:
        raise ValueError("negative stage")
    nodes_s = tree.stage_nodes[s]
    anc = nodes_s.copy()
    for _ in range(s - t):
        anc = tree.parent[anc]
    w = tree.prob[nodes_s][:, None] * arr.reshape(nodes_s.size, -1)
    out = {}
    for k in tree.stage_nodes[t]:
        sel = anc == k
        out[tree.ids[k]] = w[sel].sum(axis=0) / tree.prob[k]
    return out


def leaf_conditional_expectation(tree: ScenarioTree, values: np.ndarray, t: int) -> np.ndarray:
    """``E_t`` of a leaf-indexed array; result indexed by ``tree.stage_nodes[t]``."""
    values = np.asarray(values, dtype=float)
    p = tree.prob[tree.leaves]
    anc = tree.leaf_ancestors[t]
    nodes = tree.stage_nodes[t]
    pos = np.searchsorted(nodes, anc)
    shape = (nodes.size,) + values.shape[1:]
    acc = np.zeros(shape)
    np.add.at(acc, pos, p.reshape((-1,) + (1,) * (values.ndim - 1)) * values)
    return acc / tree.prob[nodes].reshape((-1,) + (1,) * (values.ndim - 1))


def is_martingale(y: AdaptedProcess, tol: float = 1e-9) -> bool:
    return martingale_violation(y) <= tol


def martingale_violation(y: AdaptedProcess) -> float:
    """Largest node-wise ``|E_t y_{t+1} - y_t|``."""
    if len(set(y.dims)) != 1:
        raise ValueError(f"martingale test needs a constant dimension, got dims {y.dims}")
    tr = y.tree
    worst = 0.0
    for j, ch in enumerate(tr.children):
        if ch:
            ey = sum(tr.cond_prob[c] * y.at(c) for c in ch)
            worst = max(worst, float(np.abs(ey - y.at(j)).max(initial=0.0)))
    return worst


def martingale_projection(y: ScenarioProcess | AdaptedProcess) -> AdaptedProcess:
    """``(E_t y_t)_t`` as an adapted process."""
    if isinstance(y, AdaptedProcess):
        y = y.to_scenario()
    tr = y.tree
    vals: list = [None] * len(tr)
    for t, b in enumerate(y.blocks):
        proj = leaf_conditional_expectation(tr, b, t)
        for i, k in enumerate(tr.stage_nodes[t]):
            vals[k] = proj[i]
    return AdaptedProcess(tr, y.dims, vals, y.name)


def orthogonal_part(y: ScenarioProcess) -> ScenarioProcess:
    """``y - pi(y)``; always orthogonal to adapted processes."""
    return y - martingale_projection(y).to_scenario()


def is_orthogonal_to_adapted(y: ScenarioProcess | AdaptedProcess, tol: float = 1e-9) -> bool:
    proj = martingale_projection(y)
    return all(float(np.abs(proj.at(k)).max(initial=0.0)) <= tol for k in range(len(proj.tree)))


def doob_martingale_part(V: AdaptedProcess) -> AdaptedProcess:
    """Martingale ``M`` with ``M_0 = V_0`` and ``M_{t+1} - M_t = V_{t+1} - E_t V_{t+1}``."""
    tr = V.tree
    vals: list = [None] * len(tr)
    vals[tr.stage_nodes[0][0]] = V.at(tr.stage_nodes[0][0]).copy()
    for j in range(len(tr)):
        ch = tr.children[j]
        if not ch:
            continue
        ev = sum(tr.cond_prob[c] * V.at(c) for c in ch)
        for c in ch:
            vals[c] = vals[j] + V.at(c) - ev
    return AdaptedProcess(tr, V.dims, vals, "doob_martingale")
