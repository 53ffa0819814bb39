"""Market models with portfolio constraints and transaction costs on a scenario tree.

At each node the market is given by two polyhedra in ``R^d``: ``C`` (portfolios
that can be acquired at zero cost) and ``D`` (admissible holdings).  A strategy
``x`` superhedges a claim ``u`` (what the seller delivers) when
``x_t - x_{t-1} + u_t in C_t``, ``x_t in D_t`` and ``x_T = 0``, with ``x_{-1} = 0``.
Asset ``0`` is cash throughout.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lp as _lp
from .duality import GapReport, _gap
from .polyhedral import Polyhedron, PolyhedralCone, PolyhedralFunction, polar_cone
from .tree import AdaptedProcess, ScenarioTree, is_martingale

EPS_STRICT = 1e-6
ARB_TOL = 1e-9


class MarketModelError(ValueError):
    """Raised when market data violate a model invariant."""


def cash_delivery_cone(S: PolyhedralFunction) -> Polyhedron:
    """``{(z0, z) : z0 + S(z) <= 0}`` for a polyhedral cost function ``S`` on ``R^{d-1}``."""
    d = S.dim + 1
    A, b = S._eff_pieces()
    G = [np.concatenate([[1.0], a]) for a in A]
    h = list(-b)
    for g, hv in zip(S.domain.G, S.domain.h):
        G.append(np.concatenate([[0.0], g]))
        h.append(hv)
    E = np.hstack([np.zeros((S.domain.n_eq, 1)), S.domain.E])
    cls = PolyhedralCone if np.all(b == 0) and np.all(S.domain.h == 0) and np.all(S.domain.e == 0) else Polyhedron
    if cls is PolyhedralCone:
        return PolyhedralCone(d, np.array(G), None, E, None)
    return Polyhedron(d, np.array(G), np.array(h), E, S.domain.e)


def liquid_cone(s) -> PolyhedralCone:
    """``{(x0, x1) : x0 + s.x1 <= 0}``: trading at prices ``s`` without cost."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return PolyhedralCone(s.size + 1, np.concatenate([[1.0], s])[None, :])


def bid_ask_cone(bid, ask) -> PolyhedralCone:
    """Proportional transaction costs: buy risky asset ``i`` at ``ask[i]``, sell at ``bid[i]``."""
    bid = np.atleast_1d(np.asarray(bid, dtype=float))
    ask = np.atleast_1d(np.asarray(ask, dtype=float))
    k = bid.size
    # cost S(z) = sum_i max(ask_i z_i, bid_i z_i); expand the max over sign patterns
    rows = []
    for signs in np.array(np.meshgrid(*[[0, 1]] * k, indexing="ij")).reshape(k, -1).T:
        rows.append(np.concatenate([[1.0], np.where(signs == 1, ask, bid)]))
    return PolyhedralCone(k + 1, np.array(rows))


class MarketModel:
    """Per-node ``C`` and ``D`` polyhedra in ``R^d`` on a scenario tree.

    The terminal ``D`` is replaced by ``{0}`` (the strategy must be
    liquidated); a non-trivial terminal ``D`` in the input triggers a warning.
    """

    def __init__(self, tree: ScenarioTree, d: int, C: Mapping[int, Polyhedron], D: Mapping[int, Polyhedron] | None = None,
                 conical: bool | None = None, prices: AdaptedProcess | None = None, name: str = ""):
        self.tree = tree
        self.d = int(d)
        self.name = name
        self.warnings: list[str] = []
        self.C: list[Polyhedron] = []
        self.D: list[Polyhedron] = []
        zero = np.zeros(self.d)
        for k in range(len(tree)):
            nid = tree.ids[k]
            if nid not in C:
                raise MarketModelError(f"no C set at node {nid}")
            c = C[nid]
            if c.dim != self.d:
                raise MarketModelError(f"node {nid}: C lives in R^{c.dim}, expected R^{self.d}")
            if not c.contains(zero):
                raise MarketModelError(f"node {nid}: invariant 0 in C violated (the zero trade must be freely available)")
            self.C.append(c)
            dset = (D or {}).get(nid, Polyhedron(self.d))
            if dset.dim != self.d:
                raise MarketModelError(f"node {nid}: D lives in R^{dset.dim}, expected R^{self.d}")
            if not dset.contains(zero):
                raise MarketModelError(f"node {nid}: invariant 0 in D violated (the empty position must be admissible)")
            if tree.stage[k] == tree.horizon:
                is_zero = dset.n_eq >= self.d and np.linalg.matrix_rank(dset.E) == self.d
                if not is_zero and D is not None and nid in D:
                    msg = f"node {nid}: terminal D replaced by {{0}} (positions are liquidated at the horizon)"
                    self.warnings.append(msg)
                    warnings.warn(msg, stacklevel=2)
                dset = PolyhedralCone(self.d, None, None, np.eye(self.d), None)
            self.D.append(dset)
        cones = all(c.is_cone() for c in self.C) and all(x.is_cone() for x in self.D)
        if conical is None:
            conical = cones
        elif conical and not cones:
            raise MarketModelError("model flagged conical but some C or D has a nonzero right-hand side")
        self.conical = bool(conical)
        self.prices = prices

    @classmethod
    def liquid(cls, tree: ScenarioTree, prices: AdaptedProcess, name: str = "") -> "MarketModel":
        """Perfectly liquid model: ``C_t = {x0 + s_t.x1 <= 0}``, ``D = R^d``."""
        d = prices.dims[0] + 1
        C = {nid: liquid_cone(prices[nid]) for nid in tree.ids}
        return cls(tree, d, C, None, True, prices, name)

    def is_liquid(self) -> bool:
        return self.prices is not None

    def node_count(self) -> int:
        return len(self.tree)

    # -- JSON ---------------------------------------------------------------
    def to_json(self) -> dict:
        tr = self.tree
        out = {"d": self.d, "tree": tr.to_json()}
        if self.prices is not None:
            out["liquid"] = {"prices": {str(tr.ids[k]): self.prices.at(k).tolist() for k in range(len(tr))}}
        else:
            out["C"] = {str(tr.ids[k]): self.C[k].to_json() for k in range(len(tr))}
            out["D"] = {str(tr.ids[k]): self.D[k].to_json() for k in range(len(tr))}
        return out

    @classmethod
    def from_json(cls, data: Mapping, tree: ScenarioTree | None = None) -> "MarketModel":
        tree = ScenarioTree.from_json(data["tree"]) if tree is None else tree
        if "liquid" in data:
            pr = data["liquid"]["prices"]
            vals = {nid: pr[str(nid)] if str(nid) in pr else pr[nid] for nid in tree.ids}
            k = len(np.atleast_1d(next(iter(vals.values()))))
            prices = AdaptedProcess(tree, [k] * (tree.horizon + 1), vals, "s")
            return cls.liquid(tree, prices, data.get("name", ""))
        d = int(data["d"])
        C, D = {}, {}
        for nid in tree.ids:
            key = str(nid)
            if "cash_delivery" in data and key in data["cash_delivery"]:
                C[nid] = cash_delivery_cone(PolyhedralFunction.from_json(data["cash_delivery"][key]))
            elif "C" in data and key in data["C"]:
                C[nid] = Polyhedron.from_json(data["C"][key])
            elif "C_default" in data:
                C[nid] = Polyhedron.from_json(data["C_default"])
            if "D" in data and key in data["D"]:
                D[nid] = Polyhedron.from_json(data["D"][key])
            elif "D_default" in data and tree.stage[tree.idx(nid)] < tree.horizon:
                D[nid] = Polyhedron.from_json(data["D_default"])
        return cls(tree, d, C, D, data.get("conical"), None, data.get("name", ""))


# ---------------------------------------------------------------------------
# helpers


def _claim_array(model: MarketModel, u) -> np.ndarray:
    """Node-ordered ``(#nodes, d)`` array from an AdaptedProcess, mapping or array."""
    n = len(model.tree)
    if u is None:
        return np.zeros((n, model.d))
    if isinstance(u, AdaptedProcess):
        if set(u.dims) != {model.d}:
            raise ValueError(f"claim has dims {u.dims}, market has {model.d} assets")
        return u.as_array()
    arr = np.asarray(u, dtype=float)
    if arr.shape != (n, model.d):
        raise ValueError(f"claim array must have shape {(n, model.d)}")
    return arr


def _add_membership(B: _lp.LPBuilder, S: Polyhedron, terms: list[tuple[list[int], np.ndarray]], const: np.ndarray) -> None:
    """Rows for ``sum_j M_j v_j + const in S``; ``terms`` are ``(cols, M)`` with ``M`` of shape ``(dim, len(cols))``."""
    for rows, rhs, eq in ((S.G, S.h, False), (S.E, S.e, True)):
        for g, hv in zip(rows, rhs):
            coefs = []
            for cols, M in terms:
                gm = g @ M
                coefs += [(c, v) for c, v in zip(cols, gm)]
            B.add_row(coefs, hv - g @ const, eq)


def _add_support(B: _lp.LPBuilder, S: Polyhedron, y_terms: list[tuple[list[int], np.ndarray]], weight: float) -> None:
    """Add ``weight * sigma_S(v)`` to a minimization LP, ``v = sum_j M_j y_j``.

    Uses ``sigma_S(v) = min { h.lam + e.mu : G^T lam + E^T mu = v, lam >= 0 }``.
    """
    lam = [B.add_var(cost=weight * hv, lower=0.0) for hv in S.h]
    mu = [B.add_var(cost=weight * ev) for ev in S.e]
    for i in range(S.dim):
        row = [(lam[r], S.G[r, i]) for r in range(len(lam))] + [(mu[r], S.E[r, i]) for r in range(len(mu))]
        for cols, M in y_terms:
            row += [(c, -v) for c, v in zip(cols, M[i])]
        B.add_row(row, 0.0, eq=True)


def _strategy_vars(B: _lp.LPBuilder, model: MarketModel) -> list[list[int]]:
    return [[B.add_var() for _ in range(model.d)] for _ in range(len(model.tree))]


def _add_superhedge_rows(B, model: MarketModel, xcols, extra_terms, const) -> None:
    """``x_t - x_{t-1} + (extra) + const_t in C_t``, ``x_t in D_t``."""
    tr = model.tree
    I = np.eye(model.d)
    for k in range(len(tr)):
        terms = [(xcols[k], I)]
        if tr.parent[k] >= 0:
            terms.append((xcols[tr.parent[k]], -I))
        terms += extra_terms(k)
        _add_membership(B, model.C[k], terms, const[k])
        _add_membership(B, model.D[k], [(xcols[k], I)], np.zeros(model.d))


def _proc(model: MarketModel, arr: np.ndarray, name: str) -> AdaptedProcess:
    return AdaptedProcess(model.tree, [model.d] * (model.tree.horizon + 1), list(arr), name)


def _status_value(sol: _lp.LPSolution, sense: int = 1) -> float:
    if sol.status is _lp.Status.INFEASIBLE:
        return np.inf * sense
    if sol.status is _lp.Status.UNBOUNDED:
        return -np.inf * sense
    if sol.status is not _lp.Status.OPTIMAL:
        raise RuntimeError(f"LP failed: {sol.status.value}")
    return float(sol.objective_value) * sense


# ---------------------------------------------------------------------------
# superhedging


def superhedges(model: MarketModel, x: AdaptedProcess, u, tol: float = 1e-9) -> bool:
    """Node-wise check of ``x_t - x_{t-1} + u_t in C_t``, ``x_t in D_t`` (``D_T = {0}``)."""
    if set(x.dims) != {model.d}:
        raise ValueError(f"strategy has dims {x.dims}, market has {model.d} assets")
    U = _claim_array(model, u)
    tr = model.tree
    for k in range(len(tr)):
        prev = x.at(tr.parent[k]) if tr.parent[k] >= 0 else np.zeros(model.d)
        if not model.C[k].contains(x.at(k) - prev + U[k], tol):
            return False
        if not model.D[k].contains(x.at(k), tol):
            return False
    return True


def _superhedge_primal(model: MarketModel, U: np.ndarray, Pm: np.ndarray) -> tuple[_lp.LPSolution, list, int]:
    B = _lp.LPBuilder()
    alpha = B.add_var(cost=1.0)
    xcols = _strategy_vars(B, model)
    _add_superhedge_rows(B, model, xcols, lambda k: [([alpha], -Pm[k][:, None])], U)
    return _lp.solve(B.build()), xcols, alpha


def superhedge_cost(model: MarketModel, u, p=None) -> GapReport:
    """``phi(u) = inf { alpha : u - alpha p superhedgeable at zero cost }`` and its dual.

    The dual is ``sup E sum_t [u_t.y_t - sigma_C(y_t) - sigma_D(E_t dy_{t+1})]``
    over adapted ``y`` with ``E sum_t p_t.y_t = 1``, assembled as a separate LP.
    ``p`` defaults to one unit of cash at the root.  Instances where the
    premium is freely available (``phi(0) = -inf``) are rejected.
    """
    tr = model.tree
    U = _claim_array(model, u)
    if p is None:
        Pm = np.zeros((len(tr), model.d))
        Pm[tr.stage_nodes[0][0], 0] = 1.0
    else:
        Pm = _claim_array(model, p)
    sol0, _, _ = _superhedge_primal(model, np.zeros_like(U), Pm)
    if sol0.status is _lp.Status.UNBOUNDED:
        raise MarketModelError("premium process is freely available: superhedging cost of the zero claim is -inf")
    sol, xcols, alpha = _superhedge_primal(model, U, Pm)
    primal = _status_value(sol)
    xproc = _proc(model, np.array([[sol.x[c] for c in row] for row in xcols]), "x") if sol.optimal else None

    dval, y, dsol = superhedge_dual(model, U, Pm)
    st = {"primal": sol.status.value, "dual": dsol.status.value}
    rep = GapReport(primal, dval, _gap(primal, dval), xproc, y, st, "consistent_price_systems",
                    {"alpha": float(sol.x[alpha]) if sol.optimal else None})
    return rep


def superhedge_dual(model: MarketModel, U: np.ndarray, Pm: np.ndarray) -> tuple[float, AdaptedProcess | None, _lp.LPSolution]:
    tr = model.tree
    P = tr.prob
    B = _lp.LPBuilder()
    ycols = [[B.add_var(cost=-P[k] * U[k, i]) for i in range(model.d)] for k in range(len(tr))]
    I = np.eye(model.d)
    for k in range(len(tr)):
        _add_support(B, model.C[k], [(ycols[k], I)], P[k])
        ch = tr.children[k]
        if ch:
            terms = [(ycols[k], -I)] + [(ycols[c], tr.cond_prob[c] * I) for c in ch]
            _add_support(B, model.D[k], terms, P[k])
    B.add_row([(ycols[k][i], P[k] * Pm[k, i]) for k in range(len(tr)) for i in range(model.d) if Pm[k, i]], 1.0, eq=True)
    sol = _lp.solve(B.build())
    if sol.status is _lp.Status.INFEASIBLE:
        return -np.inf, None, sol
    if sol.status is _lp.Status.UNBOUNDED:
        return np.inf, None, sol
    y = _proc(model, np.array([[sol.x[c] for c in row] for row in ycols]), "y")
    return -float(sol.objective_value), y, sol


def consistent_price_sup(model: MarketModel, u, p=None) -> tuple[float, AdaptedProcess | None]:
    """``sup { E sum u_t.y_t : y consistent, E sum p_t.y_t = 1 }`` for conical models.

    Uses explicit facet descriptions of the polar cones (double description),
    independent of the multiplier form in :func:`superhedge_dual`.
    """
    if not model.conical:
        raise MarketModelError("consistent price systems are defined for conical models")
    tr = model.tree
    U = _claim_array(model, u)
    if p is None:
        Pm = np.zeros((len(tr), model.d))
        Pm[tr.stage_nodes[0][0], 0] = 1.0
    else:
        Pm = _claim_array(model, p)
    P = tr.prob
    B = _lp.LPBuilder()
    ycols = [[B.add_var(cost=-P[k] * U[k, i]) for i in range(model.d)] for k in range(len(tr))]
    I = np.eye(model.d)
    zero = np.zeros(model.d)
    for k in range(len(tr)):
        _add_membership(B, polar_cone(model.C[k]), [(ycols[k], I)], zero)
        ch = tr.children[k]
        if ch:
            terms = [(ycols[k], -I)] + [(ycols[c], tr.cond_prob[c] * I) for c in ch]
            _add_membership(B, polar_cone(model.D[k]), terms, zero)
    B.add_row([(ycols[k][i], P[k] * Pm[k, i]) for k in range(len(tr)) for i in range(model.d) if Pm[k, i]], 1.0, eq=True)
    sol = _lp.solve(B.build())
    val = _status_value(sol, -1)
    y = _proc(model, np.array([[sol.x[c] for c in row] for row in ycols]), "y") if sol.optimal else None
    return val, y


# ---------------------------------------------------------------------------
# consistent price systems


def _polar_of_recession(model: MarketModel, which: str, k: int) -> PolyhedralCone:
    cache = model.__dict__.setdefault("_polar_cache", {})
    key = (which, k)
    if key not in cache:
        S = (model.C if which == "C" else model.D)[k]
        cache[key] = polar_cone(S.recession_cone())
    return cache[key]


def is_consistent(model: MarketModel, y: AdaptedProcess, tol: float = 1e-9) -> bool:
    """``sigma_C(y_t) < inf`` and ``sigma_D(E_t dy_{t+1}) < inf`` at every node.

    A support function is finite exactly on the polar of the recession cone,
    so membership is tested there, with ``tol`` scaled by the size of ``y``.
    """
    tr = model.tree
    scale = max(1.0, float(np.abs(y.as_array()).max(initial=0.0)))
    for k in range(len(tr)):
        if not _polar_of_recession(model, "C", k).contains(y.at(k), tol * scale):
            return False
        ch = tr.children[k]
        if ch:
            inc = sum(tr.cond_prob[c] * y.at(c) for c in ch) - y.at(k)
            if not _polar_of_recession(model, "D", k).contains(inc, tol * scale):
                return False
    return True


def find_consistent_price_system(model: MarketModel, strict: bool = False,
                                 eps: float = EPS_STRICT) -> AdaptedProcess | None:
    """A consistent price system with ``y_0`` cash component ``1``, or ``None``.

    With ``strict=True`` the LP maximizes a uniform lower bound ``delta`` on all
    components (capped at 1) and succeeds only if ``delta >= eps``.
    """
    if not model.conical:
        raise MarketModelError("consistent price systems are defined for conical models")
    tr = model.tree
    B = _lp.LPBuilder()
    ycols = [[B.add_var() for _ in range(model.d)] for _ in range(len(tr))]
    I = np.eye(model.d)
    for k in range(len(tr)):
        _add_support(B, model.C[k], [(ycols[k], I)], 0.0)
        ch = tr.children[k]
        if ch:
            terms = [(ycols[k], -I)] + [(ycols[c], tr.cond_prob[c] * I) for c in ch]
            _add_support(B, model.D[k], terms, 0.0)
    root = tr.stage_nodes[0][0]
    B.add_row([(ycols[root][0], 1.0)], 1.0, eq=True)
    if strict:
        delta = B.add_var(cost=-1.0, upper=1.0)
        for row in ycols:
            for c in row:
                B.add_row([(delta, 1.0), (c, -1.0)], 0.0)
    sol = _lp.solve(B.build())
    if not sol.optimal:
        return None
    if strict and sol.x[delta] < eps:
        return None
    return _proc(model, np.array([[sol.x[c] for c in row] for row in ycols]), "y")


# ---------------------------------------------------------------------------
# arbitrage


@dataclass
class ArbitrageReport:
    no_arbitrage: bool
    value: float
    claim: AdaptedProcess | None = None
    hedge: AdaptedProcess | None = None
    price_system: AdaptedProcess | None = None


def check_no_arbitrage(model: MarketModel, tol: float = ARB_TOL, with_price_system: bool = True) -> ArbitrageReport:
    """Decide whether a nonzero nonnegative claim can be superhedged at zero cost.

    One LP maximizes ``E sum_t sum_i u_t^i`` over claims ``0 <= u <= 1`` that
    some strategy superhedges; arbitrage iff the maximum exceeds ``tol``.  The
    certificate is the claim and its hedge, or (no arbitrage, conical model) a
    strictly positive consistent price system.
    """
    tr = model.tree
    B = _lp.LPBuilder()
    P = tr.prob
    ucols = [[B.add_var(cost=-P[k], lower=0.0, upper=1.0) for _ in range(model.d)] for k in range(len(tr))]
    xcols = _strategy_vars(B, model)
    I = np.eye(model.d)
    _add_superhedge_rows(B, model, xcols, lambda k: [(ucols[k], I)], np.zeros((len(tr), model.d)))
    sol = _lp.solve(B.build())
    if not sol.optimal:
        raise RuntimeError(f"arbitrage LP failed: {sol.status.value}")
    val = -float(sol.objective_value)
    if val > tol:
        claim = _proc(model, np.array([[sol.x[c] for c in row] for row in ucols]), "u")
        hedge = _proc(model, np.array([[sol.x[c] for c in row] for row in xcols]), "x")
        return ArbitrageReport(False, val, claim, hedge)
    y = find_consistent_price_system(model, strict=True) if (with_price_system and model.conical) else None
    return ArbitrageReport(True, val, price_system=y)


@dataclass
class FTAPReport:
    no_arbitrage: bool
    martingale_measure: bool
    agree: bool
    Q: np.ndarray | None
    price_system: AdaptedProcess | None
    arbitrage: ArbitrageReport

    def summary(self) -> str:
        q = "none" if self.Q is None else "[" + ", ".join(f"{v:.4f}" for v in self.Q) + "]"
        return f"no-arbitrage: {str(self.no_arbitrage).lower()}; Q = {q}"


def martingale_measure_from(model: MarketModel, y: AdaptedProcess) -> np.ndarray:
    """Leaf probabilities ``Q(leaf) = P(leaf) y^0_T(leaf) / y^0_0``."""
    tr = model.tree
    y0 = y.at(tr.stage_nodes[0][0])[0]
    return np.array([tr.prob[k] * y.at(k)[0] / y0 for k in tr.leaves])


def is_martingale_under(tree: ScenarioTree, Q: np.ndarray, s: AdaptedProcess, tol: float = 1e-8) -> bool:
    """Check ``E^Q_t s_{t+1} = s_t`` node-wise for leaf probabilities ``Q``."""
    Qn = np.zeros(len(tree))
    for pos, k in enumerate(tree.leaves):
        for j in tree.path(k):
            Qn[j] += Q[pos]
    for k in range(len(tree)):
        ch = tree.children[k]
        if ch:
            if Qn[k] <= 0:
                return False
            es = sum(Qn[c] * s.at(c) for c in ch) / Qn[k]
            if np.abs(es - s.at(k)).max() > tol * max(1.0, np.abs(s.at(k)).max()):
                return False
    return True


def ftap_equivalence(model: MarketModel) -> FTAPReport:
    """Run both sides of the fundamental theorem on a perfectly liquid model."""
    if not model.is_liquid():
        raise MarketModelError("ftap_equivalence needs a perfectly liquid model (price process given)")
    if np.any(model.prices.as_array() <= 0):
        raise MarketModelError("prices must be strictly positive")
    arb = check_no_arbitrage(model, with_price_system=False)
    y = find_consistent_price_system(model, strict=True)
    Q = None
    mm = False
    if y is not None:
        Q = martingale_measure_from(model, y)
        mm = bool(np.all(Q > 0) and abs(Q.sum() - 1) <= 1e-8 and is_martingale_under(model.tree, Q, model.prices))
        if not mm:
            Q = None
    arb.price_system = y
    return FTAPReport(arb.no_arbitrage, mm, arb.no_arbitrage == mm, Q, y, arb)


# ---------------------------------------------------------------------------
# optimal consumption


def optimal_consumption(model: MarketModel, F: Mapping[int, PolyhedralFunction], endowment=None) -> GapReport:
    """``maximize E sum_t U_t(c_t)`` with ``U_t = -F_t`` subject to
    ``x_t - x_{t-1} + c_t - w_t in C_t``, ``x_t in D_t``.

    The upper bound is
    ``inf_y E sum_t [w_t.y_t + F*_t(-y_t) + sigma_C(y_t) + sigma_D(E_t dy_{t+1})]``,
    solved as one LP; the report's ``gap`` is upper bound minus primal value.
    Nodes without ``F`` use ``U = 0`` on ``c >= 0`` (no negative consumption).
    """
    tr = model.tree
    P = tr.prob
    W = _claim_array(model, endowment)
    d = model.d
    nonneg = PolyhedralFunction.indicator(Polyhedron(d, -np.eye(d), np.zeros(d)))
    Fs = [F.get(tr.ids[k], nonneg) for k in range(len(tr))]
    for k, f in enumerate(Fs):
        if f.dim != d:
            raise ValueError(f"node {tr.ids[k]}: utility has dim {f.dim}, expected {d}")

    # primal: min E sum F(c)
    B = _lp.LPBuilder()
    xcols = _strategy_vars(B, model)
    ccols = [[B.add_var() for _ in range(d)] for _ in range(len(tr))]
    I = np.eye(d)
    _add_superhedge_rows(B, model, xcols, lambda k: [(ccols[k], I)], -W)
    for k, f in enumerate(Fs):
        A, b = f._eff_pieces()
        s = B.add_var(cost=P[k])
        for a, bv in zip(A, b):
            B.add_row(list(zip(ccols[k], a)) + [(s, -1.0)], -bv)
        _add_membership(B, f.domain, [(ccols[k], I)], np.zeros(d))
    sol = _lp.solve(B.build())
    primal = _status_value(sol, -1)   # utility = -min
    cproc = _proc(model, np.array([[sol.x[c] for c in row] for row in ccols]), "c") if sol.optimal else None

    # dual upper bound
    B = _lp.LPBuilder()
    ycols = [[B.add_var(cost=P[k] * W[k, i]) for i in range(d)] for k in range(len(tr))]
    for k, f in enumerate(Fs):
        _add_support(B, model.C[k], [(ycols[k], I)], P[k])
        ch = tr.children[k]
        if ch:
            terms = [(ycols[k], -I)] + [(ycols[c], tr.cond_prob[c] * I) for c in ch]
            _add_support(B, model.D[k], terms, P[k])
        _add_conjugate(B, f, [(ycols[k], -I)], P[k])
    dsol = _lp.solve(B.build())
    upper = _status_value(dsol)
    yproc = _proc(model, np.array([[dsol.x[c] for c in row] for row in ycols]), "y") if dsol.optimal else None
    gap = 0.0 if (np.isinf(upper) and upper == primal) else upper - primal
    st = {"primal": sol.status.value, "dual": dsol.status.value}
    return GapReport(primal, upper, gap, cproc, yproc, st, "consistent_price_systems", {"sense": "max"})


def _add_conjugate(B: _lp.LPBuilder, f: PolyhedralFunction, z_terms, weight: float) -> None:
    """Add ``weight * f*(z)``, ``z = sum_j M_j y_j``, to a minimization LP.

    ``f*(z) = min { -b.mu + h.lam + e.nu : A^T mu + G^T lam + E^T nu = z, sum mu = 1, mu, lam >= 0 }``.
    """
    A, b = f._eff_pieces()
    dom = f.domain
    mu = [B.add_var(cost=-weight * bv, lower=0.0) for bv in b]
    lam = [B.add_var(cost=weight * hv, lower=0.0) for hv in dom.h]
    nu = [B.add_var(cost=weight * ev) for ev in dom.e]
    B.add_row([(j, 1.0) for j in mu], 1.0, eq=True)
    for i in range(f.dim):
        row = [(mu[r], A[r, i]) for r in range(len(mu))]
        row += [(lam[r], dom.G[r, i]) for r in range(len(lam))]
        row += [(nu[r], dom.E[r, i]) for r in range(len(nu))]
        for cols, M in z_terms:
            row += [(c, -v) for c, v in zip(cols, M[i])]
        B.add_row(row, 0.0, eq=True)


# ---------------------------------------------------------------------------
# recession linearity


@dataclass
class LinearityReport:
    linear: bool
    value: float
    witness: AdaptedProcess | None = None


def recession_linearity_check(model: MarketModel, tol: float = 1e-9) -> LinearityReport:
    """Is ``K = {x adapted : dx_t in C_t^inf, x_t in D_t^inf, x_T = 0}`` a linear space?

    ``K = {x : M x <= 0, E x = 0}`` is linear iff every inequality row vanishes
    on ``K``; one LP maximizes ``sum_i -(M x)_i`` with each term capped at 1.
    A positive optimum yields a witness ``x`` in ``K`` with ``-x`` outside ``K``.
    """
    tr = model.tree
    d = model.d
    B = _lp.LPBuilder()
    xcols = _strategy_vars(B, model)
    I = np.eye(d)
    rows = []
    for k in range(len(tr)):
        Crec = model.C[k].recession_cone()
        Drec = model.D[k].recession_cone()
        terms = [(xcols[k], I)]
        if tr.parent[k] >= 0:
            terms.append((xcols[tr.parent[k]], -I))
        for S, tm in ((Crec, terms), (Drec, [(xcols[k], I)])):
            for g in S.G:
                coefs = []
                for cols, M in tm:
                    coefs += list(zip(cols, g @ M))
                rows.append(coefs)
            for g in S.E:
                coefs = []
                for cols, M in tm:
                    coefs += list(zip(cols, g @ M))
                B.add_row(coefs, 0.0, eq=True)
    for coefs in rows:
        # slack s = -(row . x) in [0, 1]
        s = B.add_var(cost=-1.0, lower=0.0, upper=1.0)
        B.add_row(coefs + [(s, 1.0)], 0.0, eq=True)
    sol = _lp.solve(B.build())
    if not sol.optimal:
        raise RuntimeError(f"linearity LP failed: {sol.status.value}")
    val = -float(sol.objective_value)
    if val > tol:
        return LinearityReport(False, val, _proc(model, np.array([[sol.x[c] for c in row] for row in xcols]), "x"))
    return LinearityReport(True, val)


# ---------------------------------------------------------------------------
# Bolza encoding


def bolza_terms(model: MarketModel) -> dict[int, PolyhedralFunction]:
    """``L_t(x, v) = indicator{x in D_t, v in C_t}`` on ``R^{2d}`` (``D_T = {0}``)."""
    d = model.d
    out = {}
    for k, nid in enumerate(model.tree.ids):
        Dk, Ck = model.D[k], model.C[k]
        G = np.vstack([np.hstack([Dk.G, np.zeros((Dk.n_ineq, d))]), np.hstack([np.zeros((Ck.n_ineq, d)), Ck.G])])
        h = np.concatenate([Dk.h, Ck.h])
        E = np.vstack([np.hstack([Dk.E, np.zeros((Dk.n_eq, d))]), np.hstack([np.zeros((Ck.n_eq, d)), Ck.E])])
        e = np.concatenate([Dk.e, Ck.e])
        out[nid] = PolyhedralFunction.indicator(Polyhedron(2 * d, G, h, E, e))
    return out
