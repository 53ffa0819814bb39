"""Primal problems on scenario trees, Lagrangian integrands, dual objectives and gaps.

A :class:`StochasticProgram` minimizes ``E sum_nodes f_node(x_hist, u_t(omega))``
over adapted ``x``.  Here ``x_hist`` is the concatenation of the decisions along
the root path of the node, and ``u_t`` is the node's slice of the parameter,
which may vary across the scenarios below the node (it need not be adapted).
Adaptedness is structural: there is one decision vector per node.

Sign conventions: ``phi(u)`` is the optimal value, ``y`` pairs with ``u``
through ``<u, y> = E sum_t u_t . y_t``, and the dual problem is
``sup_y <u, y> + g(y)`` with ``g(y) = inf_x E l(x, y)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import lp as _lp
from .polyhedral import (ImproperFunctionError, Polyhedron, PolyhedralFunction, compose_linear, conjugate,
                         partial_inf, partial_inf_value)
from .tree import AdaptedProcess, ScenarioProcess, ScenarioTree, leaf_conditional_expectation

GAP_TOL = 1e-6


# ---------------------------------------------------------------------------
# problem data


class StochasticProgram:
    """``minimize E sum_nu f_nu(x_hist(nu), u_{t(nu)}(omega))`` over adapted ``x``.

    ``terms`` maps node ids to functions on ``R^{N_t + m_t}`` where
    ``N_t = n_0 + ... + n_t``; nodes without a term contribute zero.  ``u``
    defaults to the zero process.
    """

    def __init__(self, tree: ScenarioTree, n_dims: Sequence[int], m_dims: Sequence[int],
                 terms: Mapping[int, PolyhedralFunction], u: ScenarioProcess | AdaptedProcess | None = None,
                 name: str = ""):
        T = tree.horizon
        self.tree = tree
        self.name = name
        self.n_dims = tuple(int(v) for v in n_dims)
        self.m_dims = tuple(int(v) for v in m_dims)
        if len(self.n_dims) != T + 1 or len(self.m_dims) != T + 1:
            raise ValueError(f"n_dims and m_dims need {T + 1} entries")
        self.hist_dims = tuple(int(v) for v in np.cumsum(self.n_dims))
        self.terms: dict[int, PolyhedralFunction] = {}
        for nid, f in terms.items():
            k = tree.idx(int(nid))
            t = tree.stage[k]
            want = self.hist_dims[t] + self.m_dims[t]
            if f.dim != want:
                raise ValueError(f"node {nid}: term has dim {f.dim}, expected {want} (x-history {self.hist_dims[t]} + u {self.m_dims[t]})")
            if f.minus_inf:
                raise ImproperFunctionError(f"node {nid}: term takes the value -inf")
            self.terms[k] = f
        if u is None:
            u = ScenarioProcess.zeros(tree, self.m_dims)
        elif isinstance(u, AdaptedProcess):
            u = u.to_scenario()
        if tuple(u.dims) != self.m_dims:
            raise ValueError(f"parameter dims {u.dims} do not match m_dims {self.m_dims}")
        self.u = u
        # x-variable layout: node index -> first column
        off = np.zeros(len(tree), dtype=int)
        acc = 0
        for k in range(len(tree)):
            off[k] = acc
            acc += self.n_dims[tree.stage[k]]
        self.x_offset = off
        self.n_x = acc
        self._hist_cols = [self._compute_hist_cols(k) for k in range(len(tree))]

    def _compute_hist_cols(self, k: int) -> np.ndarray:
        cols = []
        for j in self.tree.path(k):
            d = self.n_dims[self.tree.stage[j]]
            cols.extend(range(self.x_offset[j], self.x_offset[j] + d))
        return np.array(cols, dtype=int)

    def hist_cols(self, k: int) -> np.ndarray:
        """LP columns of ``x_hist`` at node index ``k``."""
        return self._hist_cols[k]

    def with_u(self, u: ScenarioProcess | AdaptedProcess) -> "StochasticProgram":
        return StochasticProgram(self.tree, self.n_dims, self.m_dims,
                                 {self.tree.ids[k]: f for k, f in self.terms.items()}, u, self.name)

    def term(self, k: int) -> PolyhedralFunction:
        t = self.tree.stage[k]
        f = self.terms.get(k)
        return f if f is not None else PolyhedralFunction.zero(self.hist_dims[t] + self.m_dims[t])

    def objective(self, x: AdaptedProcess, u: ScenarioProcess | None = None) -> float:
        """``E f(x, u)`` for an adapted ``x`` (``+inf`` if infeasible)."""
        u = self.u if u is None else u
        tr = self.tree
        total = 0.0
        for k, f in self.terms.items():
            t = tr.stage[k]
            xh = np.concatenate([x.at(j) for j in tr.path(k)]) if self.hist_dims[t] else np.zeros(0)
            for pos in tr.leaves_under(k):
                v = f(np.concatenate([xh, u.blocks[t][pos]]))
                if v == np.inf:
                    return np.inf
                total += tr.prob[tr.leaves[pos]] * v
        return total

    def __repr__(self) -> str:
        return f"StochasticProgram(nodes={len(self.tree)}, n={self.n_dims}, m={self.m_dims}, terms={len(self.terms)})"


def _groups(values: np.ndarray, positions: np.ndarray) -> list[np.ndarray]:
    """Split leaf ``positions`` into groups with identical rows of ``values``."""
    if values.shape[1] == 0:
        return [positions]
    sub = values[positions]
    _, inv = np.unique(np.round(sub, 12), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return [positions[inv == g] for g in range(inv.max() + 1)]


# ---------------------------------------------------------------------------
# primal


@dataclass
class PrimalResult:
    value: float
    status: _lp.Status
    x: AdaptedProcess | None
    y: ScenarioProcess | None
    lp: _lp.LinearProgram
    solution: _lp.LPSolution


def _x_process(sp: StochasticProgram, xvec: np.ndarray) -> AdaptedProcess:
    tr = sp.tree
    vals = [xvec[sp.x_offset[k]: sp.x_offset[k] + sp.n_dims[tr.stage[k]]] for k in range(len(tr))]
    return AdaptedProcess(tr, sp.n_dims, vals, "x")


def solve_primal(sp: StochasticProgram) -> PrimalResult:
    """``phi(u) = inf_x E f(x, u)`` as one LP with one decision vector per node.

    Returns ``+inf`` when infeasible and ``-inf`` when unbounded.  The
    multipliers of the rows carrying ``u`` are turned into the scenario process
    ``y`` (a subgradient of ``phi`` at ``u``): row multipliers pair with
    unweighted rows, so they are divided by the probability of their scenario
    group.
    """
    tr = sp.tree
    B = _lp.LPBuilder()
    for _ in range(sp.n_x):
        B.add_var()
    # for each row: (stage t, leaf positions, u-coefficients)
    u_rows: list[tuple[int, int, np.ndarray, np.ndarray]] = []
    for k, f in sp.terms.items():
        t = tr.stage[k]
        N, m = sp.hist_dims[t], sp.m_dims[t]
        cols = sp.hist_cols(k)
        ub = sp.u.blocks[t]
        for grp in _groups(ub, tr.leaves_under(k)):
            pg = float(tr.prob[tr.leaves[grp]].sum())
            uval = ub[grp[0]]
            if f.n_pieces:
                s = B.add_var(cost=pg)
                for a, bv in zip(f.A, f.b):
                    r = B.add_row(list(zip(cols, a[:N])) + [(s, -1.0)], -bv - a[N:] @ uval)
                    if m:
                        u_rows.append((r, t, grp, a[N:]))
            dom = f.domain
            for g, hv in zip(dom.G, dom.h):
                r = B.add_row(list(zip(cols, g[:N])), hv - g[N:] @ uval)
                if m:
                    u_rows.append((r, t, grp, g[N:]))
            for g, ev in zip(dom.E, dom.e):
                r = B.add_row(list(zip(cols, g[:N])), ev - g[N:] @ uval, eq=True)
                if m:
                    u_rows.append((r, t, grp, g[N:]))
    lp = B.build()
    sol = _lp.solve(lp)
    if sol.status is _lp.Status.INFEASIBLE:
        return PrimalResult(np.inf, sol.status, None, None, lp, sol)
    if sol.status is _lp.Status.UNBOUNDED:
        return PrimalResult(-np.inf, sol.status, None, None, lp, sol)
    if sol.status is not _lp.Status.OPTIMAL:
        raise RuntimeError(f"primal LP failed: {sol.status.value}")
    y = ScenarioProcess.zeros(tr, sp.m_dims)
    blocks = [b.copy() for b in y.blocks]
    P = tr.prob[tr.leaves]
    for r, t, grp, coef in u_rows:
        lam = sol.dual[r]
        if lam != 0.0:
            blocks[t][grp] += lam * coef / P[grp].sum()
    y = ScenarioProcess(tr, blocks, "y")
    return PrimalResult(float(sol.objective_value), sol.status, _x_process(sp, sol.x), y, lp, sol)


# ---------------------------------------------------------------------------
# Lagrangian integrand and dual objective


class LagrangianIntegrand:
    """``l_nu(x_hist, y) = inf_u { f_nu(x_hist, u) - u.y }`` at one node."""

    def __init__(self, sp: StochasticProgram, node_id: int):
        self.sp = sp
        self.k = sp.tree.idx(node_id)
        t = sp.tree.stage[self.k]
        self.nx = sp.hist_dims[t]
        self.nu = sp.m_dims[t]
        self.f = sp.term(self.k)
        self._cache: dict[bytes, PolyhedralFunction] = {}

    def function(self, y) -> PolyhedralFunction:
        """The polyhedral function ``x_hist -> l(x_hist, y)`` (possibly ``-inf`` on its domain)."""
        y = np.asarray(y, dtype=float).reshape(self.nu)
        key = np.round(y, 12).tobytes()
        if key not in self._cache:
            self._cache[key] = self.f if self.nu == 0 else partial_inf(self.f, y, self.nx)
        return self._cache[key]

    def __call__(self, x, y) -> float:
        return self.function(y)(x)

    def value_lp(self, x, y) -> float:
        """Same value from a direct inner LP over ``u``."""
        if self.nu == 0:
            return self.f(x)
        return partial_inf_value(self.f, x, y)


def lagrangian_integrand(sp: StochasticProgram, node_id: int) -> LagrangianIntegrand:
    return LagrangianIntegrand(sp, node_id)


def _as_scenario(sp: StochasticProgram, y) -> ScenarioProcess:
    if isinstance(y, AdaptedProcess):
        y = y.to_scenario()
    if tuple(y.dims) != sp.m_dims:
        raise ValueError(f"dual variable dims {y.dims} do not match m_dims {sp.m_dims}")
    return y


def dual_objective(sp: StochasticProgram, y, integrands: dict | None = None) -> float:
    """``g(y) = inf_{x adapted} E sum_nu l_nu(x_hist, y_t)``.

    Terms that are ``+inf`` at ``x`` (domain violations) exclude ``x``; if some
    term is ``-inf`` on its domain and a feasible ``x`` exists the value is
    ``-inf`` (the convention ``inf - inf = +inf``).
    """
    y = _as_scenario(sp, y)
    tr = sp.tree
    integrands = {} if integrands is None else integrands
    B = _lp.LPBuilder()
    for _ in range(sp.n_x):
        B.add_var()
    minus_inf = False
    for k in sp.terms:
        t = tr.stage[k]
        cols = sp.hist_cols(k)
        li = integrands.get(k)
        if li is None:
            li = integrands[k] = LagrangianIntegrand(sp, tr.ids[k])
        for grp in _groups(y.blocks[t], tr.leaves_under(k)):
            l = li.function(y.blocks[t][grp[0]])
            pg = float(tr.prob[tr.leaves[grp]].sum())
            if l.minus_inf:
                minus_inf = True
            elif l.n_pieces:
                s = B.add_var(cost=pg)
                for a, bv in zip(l.A, l.b):
                    B.add_row(list(zip(cols, a)) + [(s, -1.0)], -bv)
            for g, hv in zip(l.domain.G, l.domain.h):
                B.add_row(list(zip(cols, g)), hv)
            for g, ev in zip(l.domain.E, l.domain.e):
                B.add_row(list(zip(cols, g)), ev, eq=True)
    sol = _lp.solve(B.build())
    if sol.status is _lp.Status.INFEASIBLE:
        return np.inf
    if minus_inf or sol.status is _lp.Status.UNBOUNDED:
        return -np.inf
    if sol.status is not _lp.Status.OPTIMAL:
        raise RuntimeError(f"dual objective LP failed: {sol.status.value}")
    return float(sol.objective_value)


def dual_objective_lp(sp: StochasticProgram, y) -> float:
    """``g(y)`` from one joint LP over adapted ``x`` and scenario-wise ``u``.

    Independent of the partial-minimization route in :func:`dual_objective`.
    """
    y = _as_scenario(sp, y)
    tr = sp.tree
    B = _lp.LPBuilder()
    for _ in range(sp.n_x):
        B.add_var()
    for k, f in sp.terms.items():
        t = tr.stage[k]
        N, m = sp.hist_dims[t], sp.m_dims[t]
        cols = sp.hist_cols(k)
        for grp in _groups(y.blocks[t], tr.leaves_under(k)):
            pg = float(tr.prob[tr.leaves[grp]].sum())
            yv = y.blocks[t][grp[0]]
            ucols = [B.add_var(cost=-pg * yv[i]) for i in range(m)]
            allc = list(cols) + ucols
            if f.n_pieces:
                s = B.add_var(cost=pg)
                for a, bv in zip(f.A, f.b):
                    B.add_row(list(zip(allc, a)) + [(s, -1.0)], -bv)
            for g, hv in zip(f.domain.G, f.domain.h):
                B.add_row(list(zip(allc, g)), hv)
            for g, ev in zip(f.domain.E, f.domain.e):
                B.add_row(list(zip(allc, g)), ev, eq=True)
    sol = _lp.solve(B.build())
    if sol.status is _lp.Status.INFEASIBLE:
        return np.inf
    if sol.status is _lp.Status.UNBOUNDED:
        return -np.inf
    return float(sol.objective_value)


# ---------------------------------------------------------------------------
# gap reports


@dataclass
class GapReport:
    primal_value: float
    dual_value: float
    gap: float
    primal_solution: AdaptedProcess | None
    dual_solution: object | None
    statuses: dict = field(default_factory=dict)
    dual_class: str = "full"
    details: dict = field(default_factory=dict)

    @property
    def closed(self) -> bool:
        return gap_closed(self.primal_value, self.dual_value)


def gap_closed(primal: float, dual: float, tol: float = GAP_TOL) -> bool:
    if np.isinf(primal) or np.isinf(dual):
        return primal == dual
    return abs(primal - dual) <= tol * max(1.0, abs(primal))


def _gap(primal: float, dual: float) -> float:
    if np.isinf(primal) and primal == dual:
        return 0.0
    return primal - dual


def duality_gap(sp, dual_search: str = "full") -> GapReport:
    """Primal value, dual value and their difference.

    ``full``: ``y`` from the primal LP multipliers, ``g(y)`` recomputed by
    :func:`dual_objective`.  ``martingale``: a :class:`TimeSeparableProgram`,
    dual LP over martingales.  ``orthogonal``: a :class:`ShadowPriceProgram`,
    dual LP over processes orthogonal to adapted ones.
    """
    if dual_search == "full":
        prog = sp.to_program() if hasattr(sp, "to_program") else sp
        return _gap_full(prog)
    if dual_search == "martingale":
        if not isinstance(sp, TimeSeparableProgram):
            raise TypeError("the martingale dual class needs a TimeSeparableProgram")
        return _gap_martingale(sp)
    if dual_search == "orthogonal":
        if not isinstance(sp, ShadowPriceProgram):
            raise TypeError("the orthogonal dual class needs a ShadowPriceProgram")
        return _gap_orthogonal(sp)
    raise ValueError(f"unknown dual class {dual_search!r}")


def _gap_full(sp: StochasticProgram) -> GapReport:
    pr = solve_primal(sp)
    st = {"primal": pr.status.value}
    if pr.status is _lp.Status.INFEASIBLE:
        # phi(u) = +inf; on a finite tree phi is closed, so the dual value is +inf too
        st["dual"] = "unbounded"
        return GapReport(np.inf, np.inf, 0.0, None, None, st, "full",
                         {"farkas": pr.solution.certificate.tolist()})
    if pr.status is _lp.Status.UNBOUNDED:
        st["dual"] = "infeasible"
        return GapReport(-np.inf, -np.inf, 0.0, None, None, st, "full",
                         {"ray": pr.solution.certificate.tolist()})
    g = dual_objective(sp, pr.y)
    dual = sp.u.pairing(pr.y) + g
    st["dual"] = "optimal" if np.isfinite(g) else "dual_objective_infinite"
    return GapReport(pr.value, dual, _gap(pr.value, dual), pr.x, pr.y, st, "full", {"g": g})


# ---------------------------------------------------------------------------
# time-separable programs: dual over martingales


class TimeSeparableProgram:
    """``minimize E sum_t f0_t(x_t)`` subject to ``sum_t (A_t x_t + b_t) + u <= 0`` at every leaf.

    ``f0``, ``A`` and ``b`` are given per node (``A`` is ``m x n_t``, ``b`` has
    length ``m``); ``u`` is a leaf-indexed ``(#leaves, m)`` array.
    """

    def __init__(self, tree: ScenarioTree, n_dims: Sequence[int], m: int,
                 f0: Mapping[int, PolyhedralFunction], A: Mapping[int, np.ndarray], b: Mapping[int, np.ndarray],
                 u: np.ndarray | None = None):
        self.tree = tree
        self.n_dims = tuple(int(v) for v in n_dims)
        self.m = int(m)
        L = tree.leaves.size
        self.f0: dict[int, PolyhedralFunction] = {}
        self.A: dict[int, np.ndarray] = {}
        self.b: dict[int, np.ndarray] = {}
        for k in range(len(tree)):
            nid = tree.ids[k]
            n = self.n_dims[tree.stage[k]]
            f = f0.get(nid, PolyhedralFunction.zero(n))
            if f.dim != n:
                raise ValueError(f"node {nid}: objective has dim {f.dim}, expected {n}")
            self.f0[k] = f
            self.A[k] = np.asarray(A.get(nid, np.zeros((self.m, n))), dtype=float).reshape(self.m, n)
            self.b[k] = np.asarray(b.get(nid, np.zeros(self.m)), dtype=float).reshape(self.m)
        self.u = np.zeros((L, self.m)) if u is None else np.asarray(u, dtype=float).reshape(L, self.m)

    def to_program(self) -> StochasticProgram:
        tr = self.tree
        T = tr.horizon
        hist = np.cumsum(self.n_dims)
        m_dims = [0] * T + [self.m]
        terms = {}
        for k in range(len(tr)):
            t = tr.stage[k]
            N = int(hist[t])
            cols = list(range(N - self.n_dims[t], N))
            f = compose_linear(self.f0[k], np.eye(N)[cols])
            if t == T:
                # constraint sum_s (A_s x_s + b_s) + u <= 0 over the path, with u in the last m slots
                M = np.zeros((self.m, N + self.m))
                c = np.zeros(self.m)
                for j in tr.path(k):
                    s = tr.stage[j]
                    lo = int(hist[s]) - self.n_dims[s]
                    M[:, lo:lo + self.n_dims[s]] = self.A[j]
                    c += self.b[j]
                M[:, N:] = np.eye(self.m)
                f = compose_linear(f, np.eye(N, N + self.m))
                dom = f.domain
                f = PolyhedralFunction(f.dim, f.A, f.b,
                                       Polyhedron(f.dim, np.vstack([dom.G, M]), np.concatenate([dom.h, -c]), dom.E, dom.e))
            terms[tr.ids[k]] = f
        u = ScenarioProcess(tr, [np.zeros((tr.leaves.size, d)) for d in m_dims[:-1]] + [self.u])
        return StochasticProgram(tr, self.n_dims, m_dims, terms, u)


def _dual_pieces(f: PolyhedralFunction):
    """Rows of ``inf_x {f(x) + c.x}`` dualized: returns (A, b, G, h, E, e) of f with the empty-piece convention."""
    A, b = f._eff_pieces()
    return A, b, f.domain.G, f.domain.h, f.domain.E, f.domain.e


def _add_inner_dual(B: _lp.LPBuilder, f: PolyhedralFunction, lin_terms: list[tuple[np.ndarray, list[int]]],
                    weight: float) -> None:
    """Add ``weight * inf_x {f(x) + sum_j (M_j^T v_j).x}`` to a maximization LP.

    ``lin_terms`` lists ``(M_j, cols_j)`` where ``v_j`` are existing LP columns;
    the inner infimum is replaced by its LP dual
    ``max  mu.b - lam.h - nu.e  s.t.  A^T mu + G^T lam + E^T nu + sum M_j^T v_j = 0, sum mu = 1``.
    Objective coefficients are stored negated (the builder minimizes).
    """
    A, b, G, h, E, e = _dual_pieces(f)
    n = f.dim
    mu = [B.add_var(cost=-weight * bv, lower=0.0) for bv in b]
    lam = [B.add_var(cost=weight * hv, lower=0.0) for hv in h]
    nu = [B.add_var(cost=weight * ev) for ev in e]
    B.add_row([(j, 1.0) for j in mu], 1.0, eq=True)
    for i in range(n):
        row = [(mu[r], A[r, i]) for r in range(len(mu))]
        row += [(lam[r], G[r, i]) for r in range(len(lam))]
        row += [(nu[r], E[r, i]) for r in range(len(nu))]
        for M, cols in lin_terms:
            row += [(cols[j], M[j, i]) for j in range(len(cols))]
        B.add_row(row, 0.0, eq=True)


def martingale_dual(tsp: TimeSeparableProgram) -> tuple[float, AdaptedProcess | None, _lp.LPSolution]:
    """``sup { E[u.y_T] + E sum_t g_t(y_t) : y nonnegative martingale }`` as one LP."""
    tr = tsp.tree
    B = _lp.LPBuilder()
    m = tsp.m
    ycols = [[B.add_var(lower=0.0) for _ in range(m)] for _ in range(len(tr))]
    P = tr.prob
    for k in range(len(tr)):
        # g_t(y) = y.b + inf_x { f0(x) + (A^T y).x }
        for i in range(m):
            B.add_cost(ycols[k][i], -P[k] * tsp.b[k][i])
        _add_inner_dual(B, tsp.f0[k], [(tsp.A[k], ycols[k])], P[k])
        ch = tr.children[k]
        if ch:
            for i in range(m):
                B.add_row([(ycols[k][i], -1.0)] + [(ycols[c][i], tr.cond_prob[c]) for c in ch], 0.0, eq=True)
    for pos, k in enumerate(tr.leaves):
        for i in range(m):
            B.add_cost(ycols[k][i], -P[k] * tsp.u[pos, i])
    lp = B.build()
    sol = _lp.solve(lp)
    if sol.status is _lp.Status.INFEASIBLE:
        return -np.inf, None, sol
    if sol.status is _lp.Status.UNBOUNDED:
        return np.inf, None, sol
    y = AdaptedProcess(tr, [m] * (tr.horizon + 1), [sol.x[c] for c in ycols], "y")
    return -sol.objective_value, y, sol


def _gap_martingale(tsp: TimeSeparableProgram) -> GapReport:
    sp = tsp.to_program()
    pr = solve_primal(sp)
    val, y, sol = martingale_dual(tsp)
    st = {"primal": pr.status.value, "dual": sol.status.value}
    if y is None:
        return GapReport(pr.value, val, _gap(pr.value, val), pr.x, None, st, "martingale")
    tr = tsp.tree
    yT = ScenarioProcess(tr, [np.zeros((tr.leaves.size, d)) for d in sp.m_dims[:-1]] + [y.stage_array(tr.horizon)])
    g = dual_objective(sp, yT)
    dual = sp.u.pairing(yT) + g
    return GapReport(pr.value, dual, _gap(pr.value, dual), pr.x, y, st, "martingale",
                     {"dual_lp_value": val, "g": g})


# ---------------------------------------------------------------------------
# shadow price of information


class ShadowPriceProgram:
    """``minimize E h(x + u)`` over adapted ``x``, with ``h`` given per leaf on ``R^n``.

    ``n = n_0 + ... + n_T``; ``u`` is a leaf-indexed ``(#leaves, n)`` array.
    """

    def __init__(self, tree: ScenarioTree, n_dims: Sequence[int], h: Mapping[int, PolyhedralFunction],
                 u: np.ndarray | None = None):
        self.tree = tree
        self.n_dims = tuple(int(v) for v in n_dims)
        self.n = int(sum(self.n_dims))
        self.h: list[PolyhedralFunction] = []
        for k in tree.leaves:
            nid = tree.ids[k]
            if nid not in h:
                raise KeyError(f"no objective at leaf {nid}")
            if h[nid].dim != self.n:
                raise ValueError(f"leaf {nid}: objective has dim {h[nid].dim}, expected {self.n}")
            self.h.append(h[nid])
        L = tree.leaves.size
        self.u = np.zeros((L, self.n)) if u is None else np.asarray(u, dtype=float).reshape(L, self.n)

    def stage_slices(self) -> list[slice]:
        off = np.concatenate([[0], np.cumsum(self.n_dims)])
        return [slice(int(off[t]), int(off[t + 1])) for t in range(len(self.n_dims))]

    def to_program(self) -> StochasticProgram:
        tr = self.tree
        T = tr.horizon
        n = self.n
        terms = {}
        for pos, k in enumerate(tr.leaves):
            terms[tr.ids[k]] = compose_linear(self.h[pos], np.hstack([np.eye(n), np.eye(n)]))
        m_dims = [0] * T + [n]
        u = ScenarioProcess(tr, [np.zeros((tr.leaves.size, 0))] * T + [self.u])
        return StochasticProgram(tr, self.n_dims, m_dims, terms, u)

    def dual_process(self, y: np.ndarray) -> ScenarioProcess:
        """Stage-blocked view of a leaf-indexed ``(#leaves, n)`` dual variable."""
        y = np.asarray(y, dtype=float).reshape(self.tree.leaves.size, self.n)
        return ScenarioProcess(self.tree, [y[:, s] for s in self.stage_slices()], "y")


def is_orthogonal(spp: ShadowPriceProgram, y: np.ndarray, tol: float = 1e-9) -> bool:
    from .tree import is_orthogonal_to_adapted
    return is_orthogonal_to_adapted(spp.dual_process(y), tol)


def shadow_price_bound(spp: ShadowPriceProgram, y: np.ndarray, tol: float = 1e-9) -> float:
    """``E inf_x { h(x + u) - x.y }`` with ``x`` chosen scenario by scenario.

    Requires ``y`` orthogonal to adapted processes; then the value is a lower
    bound for the adapted optimum.
    """
    y = np.asarray(y, dtype=float).reshape(spp.tree.leaves.size, spp.n)
    if not is_orthogonal(spp, y, tol):
        raise ValueError("penalty y is not orthogonal to adapted processes (E_t y_t != 0)")
    tr = spp.tree
    total = 0.0
    for pos, k in enumerate(tr.leaves):
        h = spp.h[pos]
        # substitute w = x + u: inf_w h(w) - w.y + u.y
        A, b = h._eff_pieces()
        n = spp.n
        G = np.vstack([np.hstack([A, -np.ones((A.shape[0], 1))]), np.hstack([h.domain.G, np.zeros((h.domain.n_ineq, 1))])])
        hh = np.concatenate([-b, h.domain.h])
        E = np.hstack([h.domain.E, np.zeros((h.domain.n_eq, 1))])
        lp = _lp.LinearProgram(np.concatenate([-y[pos], [1.0]]), np.vstack([G, E]), np.concatenate([hh, h.domain.e]),
                               np.r_[np.zeros(G.shape[0], bool), np.ones(E.shape[0], bool)])
        sol = _lp.solve(lp)
        if sol.status is _lp.Status.UNBOUNDED:
            return -np.inf
        if sol.status is _lp.Status.INFEASIBLE:
            return np.inf
        total += tr.prob[k] * (sol.objective_value + spp.u[pos] @ y[pos])
    return float(total)


def orthogonal_dual(spp: ShadowPriceProgram) -> tuple[float, np.ndarray | None, _lp.LPSolution]:
    """``sup { E[u.y - h*(y)] : E_t y_t = 0 for all t }`` as one LP."""
    tr = spp.tree
    B = _lp.LPBuilder()
    n = spp.n
    L = tr.leaves.size
    P = tr.prob[tr.leaves]
    ycols = [[B.add_var(cost=-P[pos] * spp.u[pos, i]) for i in range(n)] for pos in range(L)]
    for pos in range(L):
        # -h*(y) = inf_w { h(w) - y.w }
        _add_inner_dual(B, spp.h[pos], [(-np.eye(n), ycols[pos])], P[pos])
    for t, sl in enumerate(spp.stage_slices()):
        for k in tr.stage_nodes[t]:
            under = tr.leaves_under(k)
            for i in range(sl.start, sl.stop):
                B.add_row([(ycols[pos][i], P[pos]) for pos in under], 0.0, eq=True)
    sol = _lp.solve(B.build())
    if sol.status is _lp.Status.INFEASIBLE:
        return -np.inf, None, sol
    if sol.status is _lp.Status.UNBOUNDED:
        return np.inf, None, sol
    y = np.array([[sol.x[c] for c in row] for row in ycols]).reshape(L, n)
    return -sol.objective_value, y, sol


def _gap_orthogonal(spp: ShadowPriceProgram) -> GapReport:
    sp = spp.to_program()
    pr = solve_primal(sp)
    val, y, sol = orthogonal_dual(spp)
    st = {"primal": pr.status.value, "dual": sol.status.value}
    if y is None:
        return GapReport(pr.value, val, _gap(pr.value, val), pr.x, None, st, "orthogonal")
    # project away round-off before the orthogonality precondition
    from .tree import orthogonal_part
    yp = orthogonal_part(spp.dual_process(y))
    y = np.hstack(yp.blocks)
    bound = shadow_price_bound(spp, y)
    return GapReport(pr.value, bound, _gap(pr.value, bound), pr.x, spp.dual_process(y), st, "orthogonal",
                     {"dual_lp_value": val})


# ---------------------------------------------------------------------------
# Bolza problems


def bolza_program(tree: ScenarioTree, d: int, L: Mapping[int, PolyhedralFunction],
                  u: ScenarioProcess | AdaptedProcess | None = None) -> StochasticProgram:
    """``minimize E sum_t L_t(x_t, x_t - x_{t-1} + u_t)`` with ``x_{-1} = 0``.

    ``L`` maps node ids to functions on ``R^{2d}``.
    """
    T = tree.horizon
    terms = {}
    for k in range(len(tree)):
        nid = tree.ids[k]
        t = tree.stage[k]
        f = L.get(nid)
        if f is None:
            continue
        if f.dim != 2 * d:
            raise ValueError(f"node {nid}: Bolza term has dim {f.dim}, expected {2 * d}")
        N = d * (t + 1)
        # (x_hist, u) -> (x_t, x_t - x_{t-1} + u)
        M = np.zeros((2 * d, N + d))
        M[:d, N - d:N] = np.eye(d)
        M[d:, N - d:N] = np.eye(d)
        if t > 0:
            M[d:, N - 2 * d:N - d] = -np.eye(d)
        M[d:, N:] = np.eye(d)
        terms[nid] = compose_linear(f, M)
    return StochasticProgram(tree, [d] * (T + 1), [d] * (T + 1), terms, u)


def bolza_dual_value(tree: ScenarioTree, d: int, L: Mapping[int, PolyhedralFunction], y: AdaptedProcess,
                     conjugates: dict | None = None) -> float:
    """``g(y) = -E sum_t L*_t(E_t[y_{t+1}] - y_t, y_t)`` with ``y_{T+1} = 0``.

    Nodes without a term use ``L = 0``, whose conjugate is the indicator of
    ``{(0, 0)}``.  ``conjugates`` may carry precomputed ``L*`` by node id.
    """
    if tuple(y.dims) != (d,) * (tree.horizon + 1):
        raise ValueError(f"y must have dimension {d} at every stage")
    conjugates = {} if conjugates is None else conjugates
    total = 0.0
    for k in range(len(tree)):
        nid = tree.ids[k]
        ch = tree.children[k]
        ey = sum(tree.cond_prob[c] * y.at(c) for c in ch) if ch else np.zeros(d)
        w = ey - y.at(k)
        if nid in L:
            Ls = conjugates.get(nid)
            if Ls is None:
                Ls = conjugates[nid] = conjugate(L[nid])
            v = Ls(np.concatenate([w, y.at(k)]))
        else:
            v = 0.0 if np.abs(np.concatenate([w, y.at(k)])).max(initial=0) <= 1e-9 else np.inf
        if v == np.inf:
            return -np.inf
        total += tree.prob[k] * v
    return float(-total)


# ---------------------------------------------------------------------------
# interchange of minimization and integration; Jensen


def interchange_check(tree: ScenarioTree, h: Mapping[int, PolyhedralFunction]) -> tuple[float, float]:
    """``(inf_u E h(u(omega), omega), E inf_u h(u, omega))`` for leaf-wise ``h``.

    The left side is one LP over a scenario-indexed (non-adapted) ``u``; the
    right side is one LP per scenario.
    """
    B = _lp.LPBuilder()
    separate = 0.0
    for k in tree.leaves:
        f = h[tree.ids[k]]
        p = float(tree.prob[k])
        cols = [B.add_var() for _ in range(f.dim)]
        A, b = f._eff_pieces()
        s = B.add_var(cost=p)
        for a, bv in zip(A, b):
            B.add_row(list(zip(cols, a)) + [(s, -1.0)], -bv)
        for g, hv in zip(f.domain.G, f.domain.h):
            B.add_row(list(zip(cols, g)), hv)
        for g, ev in zip(f.domain.E, f.domain.e):
            B.add_row(list(zip(cols, g)), ev, eq=True)
        separate += p * _minimize(f)
    sol = _lp.solve(B.build())
    joint = _lp_value(sol)
    return joint, float(separate)


def _minimize(f: PolyhedralFunction) -> float:
    A, b = f._eff_pieces()
    G = np.vstack([np.hstack([A, -np.ones((A.shape[0], 1))]), np.hstack([f.domain.G, np.zeros((f.domain.n_ineq, 1))])])
    h = np.concatenate([-b, f.domain.h])
    E = np.hstack([f.domain.E, np.zeros((f.domain.n_eq, 1))])
    c = np.zeros(f.dim + 1)
    c[-1] = 1.0
    sol = _lp.solve(_lp.LinearProgram(c, np.vstack([G, E]), np.concatenate([h, f.domain.e]),
                                      np.r_[np.zeros(G.shape[0], bool), np.ones(E.shape[0], bool)]))
    return _lp_value(sol)


def _lp_value(sol: _lp.LPSolution) -> float:
    if sol.status is _lp.Status.INFEASIBLE:
        return np.inf
    if sol.status is _lp.Status.UNBOUNDED:
        return -np.inf
    return float(sol.objective_value)


def jensen_sides(tree: ScenarioTree, h: Mapping[int, PolyhedralFunction], x: np.ndarray, t: int) -> tuple[float, float]:
    """``(E h(E_t x), E h(x))`` for ``F_t``-measurable ``h`` (one function per stage-``t`` node)
    and a leaf-indexed random vector ``x``."""
    x = np.asarray(x, dtype=float).reshape(tree.leaves.size, -1)
    ex = leaf_conditional_expectation(tree, x, t)
    nodes = tree.stage_nodes[t]
    lhs = sum(tree.prob[k] * h[tree.ids[k]](ex[i]) for i, k in enumerate(nodes))
    rhs = sum(tree.prob[tree.leaves[pos]] * h[tree.ids[tree.leaf_ancestors[t][pos]]](x[pos])
              for pos in range(tree.leaves.size))
    return float(lhs), float(rhs)
