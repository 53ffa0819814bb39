"""Dense two-phase revised simplex with dual multipliers and certificates.

Sign convention
---------------
Every program is a minimization.  A row ``g.x <= h`` carries a multiplier
``lam >= 0`` and an equality row a free multiplier, so that the Lagrangian reads
``c.x + lam.(G x - h)``.  Increasing ``h_i`` by one unit moves the optimal value
by ``-lam_i``.  Reduced costs are ``r = c + G^T lam``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
OPT_TOL = 1e-9
REFACTOR_EVERY = 40


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL = "numerical_failure"


@dataclass
class LinearProgram:
    """``minimize c.x`` subject to ``G x (<= | =) h`` and ``lower <= x <= upper``.

    ``eq`` flags the equality rows.  Missing bounds default to a free variable.
    """

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, c, G=None, h=None, eq=None, lower=None, upper=None):
        self.c = np.asarray(c, dtype=float).reshape(-1)
        n = self.c.size
        self.G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
        k = self.G.shape[0]
        self.h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
        self.eq = np.zeros(k, dtype=bool) if eq is None else np.asarray(eq, dtype=bool).reshape(-1)
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float).reshape(-1)
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(-1)
        if self.h.size != k or self.eq.size != k:
            raise ValueError(f"rows: G has {k} rows but h has {self.h.size} and eq {self.eq.size}")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError(f"bounds must have length {n}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.h.size

    def to_json(self) -> dict:
        def fin(v):
            return [None if not np.isfinite(t) else float(t) for t in v]

        return {
            "c": self.c.tolist(),
            "rows": [
                {"g": self.G[i].tolist(), "h": float(self.h[i]), "sense": "=" if self.eq[i] else "<="}
                for i in range(self.n_rows)
            ],
            "lower": fin(self.lower),
            "upper": fin(self.upper),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "LinearProgram":
        c = data["c"]
        rows = data.get("rows", [])
        n = len(c)
        G = np.array([r["g"] for r in rows], dtype=float).reshape(-1, n)
        h = [r["h"] for r in rows]
        eq = [r.get("sense", "<=") == "=" for r in rows]
        lo = [(-np.inf if v is None else v) for v in data.get("lower", [None] * n)]
        up = [(np.inf if v is None else v) for v in data.get("upper", [None] * n)]
        return cls(c, G, h, eq, lo, up)


@dataclass
class LPSolution:
    status: Status
    x: np.ndarray
    dual: np.ndarray
    objective_value: float
    certificate: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class LPBuilder:
    """Incremental assembly of a :class:`LinearProgram` from sparse rows."""

    def __init__(self):
        self._c: list[float] = []
        self._lo: list[float] = []
        self._up: list[float] = []
        self._rows: list[tuple[dict[int, float], float, bool]] = []

    @property
    def n_vars(self) -> int:
        return len(self._c)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def add_var(self, cost: float = 0.0, lower: float = -np.inf, upper: float = np.inf) -> int:
        self._c.append(float(cost))
        self._lo.append(float(lower))
        self._up.append(float(upper))
        return len(self._c) - 1

    def add_vars(self, count: int, cost=0.0, lower=-np.inf, upper=np.inf) -> np.ndarray:
        return np.array([self.add_var(cost, lower, upper) for _ in range(count)], dtype=int)

    def add_cost(self, var: int, cost: float) -> None:
        self._c[var] += float(cost)

    def add_row(self, coefs: Mapping[int, float] | Sequence[tuple[int, float]], rhs: float, eq: bool = False) -> int:
        items = coefs.items() if isinstance(coefs, Mapping) else coefs
        row: dict[int, float] = {}
        for j, v in items:
            if v != 0.0:
                row[int(j)] = row.get(int(j), 0.0) + float(v)
        self._rows.append((row, float(rhs), bool(eq)))
        return len(self._rows) - 1

    def add_dense_row(self, idx, vals, rhs: float, eq: bool = False) -> int:
        return self.add_row(list(zip(np.asarray(idx, dtype=int).tolist(), np.asarray(vals, dtype=float).tolist())), rhs, eq)

    def build(self) -> LinearProgram:
        n = len(self._c)
        G = np.zeros((len(self._rows), n))
        for i, (row, _, _) in enumerate(self._rows):
            for j, v in row.items():
                G[i, j] = v
        h = np.array([r[1] for r in self._rows])
        eq = np.array([r[2] for r in self._rows], dtype=bool)
        return LinearProgram(self._c, G, h, eq, self._lo, self._up)


# ---------------------------------------------------------------------------
# standard form


@dataclass
class _StandardForm:
    A: np.ndarray          # m x N, columns = structural z then slacks
    b: np.ndarray          # >= 0 after row flips
    cost: np.ndarray       # phase-2 cost over N columns
    T: np.ndarray          # n x n_struct, x = x0 + T z
    x0: np.ndarray
    sign: np.ndarray       # row flip factors
    n_struct: int
    n_orig_rows: int
    slack_of_row: np.ndarray  # column index of the slack, -1 for equalities
    const: float


def _standard_form(lp: LinearProgram) -> _StandardForm:
    n = lp.n_vars
    cols: list[tuple[int, float]] = []   # (orig var, coefficient)
    x0 = np.zeros(n)
    bound_rows: list[tuple[int, float]] = []  # (struct col, width)
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(up):
                bound_rows.append((len(cols) - 1, up - lo))
        elif np.isfinite(up):
            x0[j] = up
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    T = np.zeros((n, ns))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s

    k_rows = lp.n_rows
    m = k_rows + len(bound_rows)
    ineq = np.concatenate([~lp.eq, np.ones(len(bound_rows), dtype=bool)])
    n_slack = int(ineq.sum())
    A = np.zeros((m, ns + n_slack))
    b = np.zeros(m)
    A[:k_rows, :ns] = lp.G @ T
    b[:k_rows] = lp.h - lp.G @ x0
    for r, (col, width) in enumerate(bound_rows):
        A[k_rows + r, col] = 1.0
        b[k_rows + r] = width
    slack_of_row = np.full(m, -1, dtype=int)
    s = ns
    for i in range(m):
        if ineq[i]:
            A[i, s] = 1.0
            slack_of_row[i] = s
            s += 1
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    cost = np.zeros(ns + n_slack)
    cost[:ns] = T.T @ lp.c
    return _StandardForm(A, b, cost, T, x0, sign, ns, k_rows, slack_of_row, float(lp.c @ x0))


# ---------------------------------------------------------------------------
# simplex core


class _Simplex:
    """Revised simplex on ``min cost.z, A z = b, z >= 0`` from a feasible basis."""

    def __init__(self, A, b, basis, rule: str, max_iter: int):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.rule = rule
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self._since = 0

    def run(self, cost, allowed: np.ndarray):
        """Return ("optimal", None) or ("unbounded", entering column)."""
        degenerate_streak = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit", None
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            scale = 1.0 + np.abs(cost).max(initial=0.0)
            cand = np.flatnonzero(d < -OPT_TOL * scale)
            if cand.size == 0:
                return "optimal", None
            use_bland = self.rule == "bland" or degenerate_streak >= 30
            j = int(cand[0]) if use_bland else int(cand[np.argmin(d[cand])])
            alpha = self.Binv @ self.A[:, j]
            pos = np.flatnonzero(alpha > PIVOT_TOL)
            if pos.size == 0:
                return "unbounded", (j, alpha)
            ratios = self.xB[pos] / alpha[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
            if ties.size > 1:
                # Bland: leave with the smallest variable index
                r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            else:
                r = int(ties[0])
            degenerate_streak = degenerate_streak + 1 if rmin <= 1e-12 else 0
            self.pivot(r, j, alpha)

    def pivot(self, r: int, j: int, alpha: np.ndarray):
        self.iterations += 1
        theta = self.xB[r] / alpha[r]
        self.xB -= theta * alpha
        self.xB[r] = theta
        prow = self.Binv[r] / alpha[r]
        self.Binv -= np.outer(alpha, prow)
        self.Binv[r] = prow
        self.basis[r] = j
        self._since += 1
        if self._since >= REFACTOR_EVERY:
            self.refactor()
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self.xB = np.maximum(self.xB, 0.0)


def solve(lp: LinearProgram, rule: str = "bland", max_iter: int = 200_000) -> LPSolution:
    """Solve ``lp`` by the two-phase revised simplex method.

    ``rule="bland"`` uses Bland's smallest-index rule throughout.  ``"dantzig"``
    prices by the most negative reduced cost and falls back to Bland's rule
    after a run of degenerate pivots, which preserves finite termination.
    """
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    n, k = lp.n_vars, lp.n_rows
    sf = _standard_form(lp)
    m, N = sf.A.shape

    # phase 1: slack basis where possible, artificials elsewhere
    basis = []
    art_rows = []
    for i in range(m):
        s = sf.slack_of_row[i]
        if s >= 0 and sf.sign[i] > 0:
            basis.append(s)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    A1 = np.hstack([sf.A, np.zeros((m, n_art))])
    for a, i in enumerate(art_rows):
        A1[i, N + a] = 1.0
        basis[i] = N + a
    cost1 = np.zeros(N + n_art)
    cost1[N:] = 1.0
    allowed = np.ones(N + n_art, dtype=bool)

    if m == 0:
        return _solve_no_rows(lp, sf)

    sx = _Simplex(A1, sf.b, basis, rule, max_iter)
    if n_art:
        state, _ = sx.run(cost1, allowed)
        if state == "iteration_limit":
            return _numerical(n, k, sx.iterations)
        infeas = float(cost1[sx.basis] @ sx.xB)
        if infeas > FEAS_TOL * max(1.0, float(np.abs(sf.b).max(initial=0.0))):
            y1 = cost1[sx.basis] @ sx.Binv
            farkas = -sf.sign[:k] * y1[:k]
            # a valid Farkas vector has nonnegative entries on inequality rows
            farkas[~lp.eq] = np.maximum(farkas[~lp.eq], 0.0)
            return LPSolution(Status.INFEASIBLE, np.full(n, np.nan), np.full(k, np.nan), np.inf,
                              certificate=farkas, iterations=sx.iterations)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if sx.basis[r] < N:
                continue
            row = sx.Binv[r] @ sf.A
            row[[b for b in sx.basis if b < N]] = 0.0
            cands = np.flatnonzero(np.abs(row) > 1e-9)
            if cands.size:
                j = int(cands[0])
                sx.pivot(r, j, sx.Binv @ A1[:, j])
            else:
                # the artificial's own row is a combination of the other rows: drop it
                keep[art_rows[sx.basis[r] - N]] = False
        rows = np.flatnonzero(keep)
        basis2 = [b for b in sx.basis if b < N]
        sx2 = _Simplex(sf.A[rows], sf.b[rows], basis2, rule, max_iter - sx.iterations)
        sx2.iterations = sx.iterations
    else:
        rows = np.arange(m)
        sx2 = sx
        sx2.A = sf.A
        sx2.refactor()

    allowed2 = np.ones(N, dtype=bool)
    state, info = sx2.run(sf.cost, allowed2)
    if state == "iteration_limit":
        return _numerical(n, k, sx2.iterations)
    if state == "unbounded":
        j, alpha = info
        zdir = np.zeros(N)
        zdir[j] = 1.0
        zdir[sx2.basis] = -alpha
        ray = sf.T @ zdir[: sf.n_struct]
        ray /= max(np.abs(ray).max(), 1e-300)
        return LPSolution(Status.UNBOUNDED, np.full(n, np.nan), np.full(k, np.nan), -np.inf,
                          certificate=ray, iterations=sx2.iterations)
    z = np.zeros(N)
    z[sx2.basis] = sx2.xB
    x = sf.x0 + sf.T @ z[: sf.n_struct]
    ystd = np.zeros(m)
    ystd[rows] = sf.cost[sx2.basis] @ sx2.Binv
    dual = -sf.sign[:k] * ystd[:k]
    dual[np.abs(dual) < 1e-14] = 0.0
    return LPSolution(Status.OPTIMAL, x, dual, float(lp.c @ x), iterations=sx2.iterations)


def _numerical(n, k, iters) -> LPSolution:
    return LPSolution(Status.NUMERICAL, np.full(n, np.nan), np.full(k, np.nan), np.nan, iterations=iters)


def _solve_no_rows(lp: LinearProgram, sf: _StandardForm) -> LPSolution:
    # only bounds: each variable sits at the bound its cost prefers
    x = np.empty(lp.n_vars)
    for j, cj in enumerate(lp.c):
        lo, up = lp.lower[j], lp.upper[j]
        target = lo if cj > 0 else up if cj < 0 else (lo if np.isfinite(lo) else up if np.isfinite(up) else 0.0)
        if not np.isfinite(target):
            ray = np.zeros(lp.n_vars)
            ray[j] = -np.sign(cj)
            return LPSolution(Status.UNBOUNDED, np.full(lp.n_vars, np.nan), np.zeros(0), -np.inf, certificate=ray)
        x[j] = target
    return LPSolution(Status.OPTIMAL, x, np.zeros(0), float(lp.c @ x))


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.checks) and all(self.checks.values())


def _box_min(r: np.ndarray, lo: np.ndarray, up: np.ndarray) -> float:
    """``min r.x`` over the box, ``-inf`` when unbounded."""
    total = 0.0
    for rj, l, u in zip(r, lo, up):
        if rj > 0:
            total += rj * l
        elif rj < 0:
            total += rj * u
    return total


def verify(lp: LinearProgram, sol: LPSolution, tol: float = 1e-7) -> VerificationReport:
    """Independently re-check an optimal solution: primal and dual feasibility,
    complementary slackness and equality of primal and dual objectives."""
    rep = VerificationReport()
    if sol.status is not Status.OPTIMAL:
        rep.checks["status_optimal"] = False
        return rep
    x, lam = sol.x, sol.dual
    G, h, eq = lp.G, lp.h, lp.eq
    ineq = ~eq
    slack = h - G @ x
    rowscale = np.maximum(1.0, np.abs(h))
    viol_rows = np.concatenate([np.maximum(-slack[ineq], 0.0), np.abs(slack[eq])]) / np.concatenate([rowscale[ineq], rowscale[eq]])
    viol_bounds = np.concatenate([np.maximum(lp.lower - x, 0.0), np.maximum(x - lp.upper, 0.0)])
    primal_res = float(max(viol_rows.max(initial=0.0), viol_bounds.max(initial=0.0)))
    rep.residuals["primal_feasibility"] = primal_res
    rep.checks["primal_feasibility"] = primal_res <= tol

    r = lp.c + G.T @ lam
    lo_f, up_f = np.isfinite(lp.lower), np.isfinite(lp.upper)
    sign_viol = np.maximum(-lam[ineq], 0.0).max(initial=0.0)
    rc_viol = np.zeros_like(r)
    free = ~lo_f & ~up_f
    rc_viol[free] = np.abs(r[free])
    only_lo = lo_f & ~up_f
    rc_viol[only_lo] = np.maximum(-r[only_lo], 0.0)
    only_up = ~lo_f & up_f
    rc_viol[only_up] = np.maximum(r[only_up], 0.0)
    cscale = max(1.0, float(np.abs(lp.c).max(initial=0.0)))
    dual_res = float(max(sign_viol, rc_viol.max(initial=0.0) / cscale))
    rep.residuals["dual_feasibility"] = dual_res
    rep.checks["dual_feasibility"] = dual_res <= tol

    cs_rows = np.abs(lam[ineq] * slack[ineq]) / rowscale[ineq] if ineq.any() else np.zeros(0)
    rp, rn = np.maximum(r, 0.0), np.maximum(-r, 0.0)
    cs_lo = np.zeros_like(r)
    cs_lo[lo_f] = rp[lo_f] * np.abs(x[lo_f] - lp.lower[lo_f])
    cs_up = np.zeros_like(r)
    cs_up[up_f] = rn[up_f] * np.abs(lp.upper[up_f] - x[up_f])
    cs_res = float(max(cs_rows.max(initial=0.0), cs_lo.max(initial=0.0) / cscale, cs_up.max(initial=0.0) / cscale))
    rep.residuals["complementary_slackness"] = cs_res
    rep.checks["complementary_slackness"] = cs_res <= tol

    primal = float(lp.c @ x)
    r_clean = np.where(np.abs(r) <= tol * cscale, 0.0, r)
    dual = float(-h @ lam + _box_min(r_clean, lp.lower, lp.upper))
    gap = abs(primal - dual) / max(1.0, abs(primal))
    rep.residuals["objective_match"] = gap
    rep.checks["objective_match"] = gap <= tol
    return rep


def check_certificate(lp: LinearProgram, sol: LPSolution, tol: float = 1e-7) -> bool:
    """Validate the Farkas vector of an infeasible program or the ray of an
    unbounded one."""
    cert = sol.certificate
    if cert is None:
        return False
    if sol.status is Status.INFEASIBLE:
        lam = cert
        if np.any(lam[~lp.eq] < -tol):
            return False
        v = lp.G.T @ lam
        lo_f, up_f = np.isfinite(lp.lower), np.isfinite(lp.upper)
        scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
        if np.any(np.abs(v[~lo_f & ~up_f]) > tol * scale):
            return False
        if np.any(v[lo_f & ~up_f] < -tol * scale) or np.any(v[~lo_f & up_f] > tol * scale):
            return False
        vv = v.copy()
        vv[np.abs(vv) <= tol * scale] = 0.0
        # every feasible x would give lam.(Gx - h) <= 0
        return _box_min(vv, lp.lower, lp.upper) - lam @ lp.h > tol * scale
    if sol.status is Status.UNBOUNDED:
        d = cert
        Gd = lp.G @ d
        if np.any(Gd[~lp.eq] > tol) or np.any(np.abs(Gd[lp.eq]) > tol):
            return False
        if np.any(d[np.isfinite(lp.lower)] < -tol) or np.any(d[np.isfinite(lp.upper)] > tol):
            return False
        return float(lp.c @ d) < -tol
    return False


def dumps(lp: LinearProgram) -> str:
    return json.dumps(lp.to_json(), indent=1)
