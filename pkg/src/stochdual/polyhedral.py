"""Polyhedral sets, cones and extended-real polyhedral convex functions.

A :class:`PolyhedralFunction` is ``max_i (a_i . z + b_i)`` on a polyhedral
domain and ``+inf`` elsewhere; with no pieces it is ``0`` on its domain.  The
class is closed under conjugation and partial minimization, both computed
exactly via the double-description method in :mod:`stochdual._dd`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lp as _lp
from ._dd import cone_generators, cone_hrep

TOL = 1e-9


class ImproperFunctionError(ValueError):
    """Raised for functions that are identically +inf or take the value -inf."""


def _mat(M, d) -> np.ndarray:
    if M is None:
        return np.zeros((0, d))
    return np.asarray(M, dtype=float).reshape(-1, d)


def _vec(v, k) -> np.ndarray:
    if v is None:
        return np.zeros(k)
    return np.asarray(v, dtype=float).reshape(k)


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True)
class VRep:
    """``conv(points) + cone(rays) + span(lineality)``."""

    points: np.ndarray
    rays: np.ndarray
    lineality: np.ndarray


class Polyhedron:
    """``{z in R^dim : G z <= h, E z = e}``."""

    def __init__(self, dim: int, G=None, h=None, E=None, e=None):
        self.dim = int(dim)
        self.G = _mat(G, self.dim)
        self.h = _vec(h, self.G.shape[0])
        self.E = _mat(E, self.dim)
        self.e = _vec(e, self.E.shape[0])
        for a in (self.G, self.h, self.E, self.e):
            a.setflags(write=False)

    # constructors ----------------------------------------------------------
    @classmethod
    def whole_space(cls, dim: int) -> "Polyhedron":
        return cls(dim)

    @classmethod
    def point(cls, z) -> "Polyhedron":
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return cls(z.size, E=np.eye(z.size), e=z)

    @classmethod
    def box(cls, lower, upper) -> "Polyhedron":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        up = np.atleast_1d(np.asarray(upper, dtype=float))
        d = lo.size
        G, h = [], []
        for i in range(d):
            if np.isfinite(up[i]):
                G.append(np.eye(d)[i]); h.append(up[i])
            if np.isfinite(lo[i]):
                G.append(-np.eye(d)[i]); h.append(-lo[i])
        return cls(d, G or None, h or None)

    @classmethod
    def from_vrep(cls, dim: int, points, rays=None, lineality=None) -> "Polyhedron":
        P = _mat(points, dim)
        if P.shape[0] == 0:
            raise ValueError("a V-representation needs at least one point")
        R = _mat(rays, dim)
        L = _mat(lineality, dim)
        # homogenize: generators (p, 1), (r, 0), (l, 0); facets (a, c) mean a.z + c*t <= 0
        gens = np.vstack([np.hstack([P, np.ones((P.shape[0], 1))]), np.hstack([R, np.zeros((R.shape[0], 1))])])
        lin = np.hstack([L, np.zeros((L.shape[0], 1))])
        A, Eh = cone_hrep(gens, lin, dim + 1)
        A = A[np.abs(A[:, :dim]).max(axis=1, initial=0) > TOL] if A.size else A  # drop 0 <= t rows
        return cls(dim, A[:, :dim], -A[:, dim], Eh[:, :dim], -Eh[:, dim])

    # queries ---------------------------------------------------------------
    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    @property
    def n_eq(self) -> int:
        return self.E.shape[0]

    def is_cone(self) -> bool:
        return bool(np.all(self.h == 0) and np.all(self.e == 0))

    def contains(self, z, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.dim:
            raise ValueError(f"point has length {z.size}, polyhedron lives in R^{self.dim}")
        scale_g = np.maximum(1.0, np.abs(self.h))
        scale_e = np.maximum(1.0, np.abs(self.e))
        return bool(np.all(self.G @ z - self.h <= tol * scale_g) and np.all(np.abs(self.E @ z - self.e) <= tol * scale_e))

    def as_lp_rows(self):
        G = np.vstack([self.G, self.E])
        h = np.concatenate([self.h, self.e])
        eq = np.concatenate([np.zeros(self.n_ineq, bool), np.ones(self.n_eq, bool)])
        return G, h, eq

    def is_empty(self) -> bool:
        G, h, eq = self.as_lp_rows()
        sol = _lp.solve(_lp.LinearProgram(np.zeros(self.dim), G, h, eq))
        return sol.status is _lp.Status.INFEASIBLE

    def vrep(self) -> VRep:
        """Points, rays and lineality; ``points`` is empty iff the set is empty."""
        d = self.dim
        # homogenized cone {(z, t): G z - h t <= 0, E z - e t = 0, t >= 0}
        rows = [np.hstack([self.G, -self.h[:, None]]),
                np.hstack([self.E, -self.e[:, None]]),
                np.hstack([-self.E, self.e[:, None]]),
                np.hstack([np.zeros((1, d)), -np.ones((1, 1))])]
        R, L = cone_generators(np.vstack(rows), d + 1)
        t = R[:, d]
        pts = R[t > TOL]
        pts = pts[:, :d] / pts[:, d:]
        rays = R[np.abs(t) <= TOL][:, :d]
        rays = rays[np.abs(rays).max(axis=1, initial=0) > TOL] if rays.size else rays
        return VRep(pts, rays.reshape(-1, d), L[:, :d].reshape(-1, d))

    def recession_cone(self) -> "PolyhedralCone":
        if self.is_empty():
            raise ValueError("recession cone of an empty polyhedron")
        return PolyhedralCone(self.dim, self.G, None, self.E, None)

    def support(self, y) -> float:
        return support_function(self, y)

    def issubset(self, other: "Polyhedron", tol: float = 1e-7) -> bool:
        """Containment, decided by one LP per row of ``other``."""
        if self.is_empty():
            return True
        for g, hv in list(zip(other.G, other.h)) + list(zip(other.E, other.e)) + list(zip(-other.E, -other.e)):
            if support_function(self, g) > hv + tol * max(1.0, abs(hv)):
                return False
        return True

    def equals(self, other: "Polyhedron", tol: float = 1e-7) -> bool:
        return self.issubset(other, tol) and other.issubset(self, tol)

    def to_json(self) -> dict:
        return {"dim": self.dim,
                "ineq": [list(map(float, g)) + [float(hv)] for g, hv in zip(self.G, self.h)],
                "eq": [list(map(float, g)) + [float(ev)] for g, ev in zip(self.E, self.e)]}

    @classmethod
    def from_json(cls, data: Mapping) -> "Polyhedron":
        d = int(data["dim"])
        ineq = np.asarray(data.get("ineq", []), dtype=float).reshape(-1, d + 1)
        eq = np.asarray(data.get("eq", []), dtype=float).reshape(-1, d + 1)
        return cls(d, ineq[:, :d], ineq[:, d], eq[:, :d], eq[:, d])

    def __repr__(self) -> str:
        return f"Polyhedron(dim={self.dim}, ineq={self.n_ineq}, eq={self.n_eq})"


class PolyhedralCone(Polyhedron):
    """A polyhedron with all right-hand sides zero."""

    def __init__(self, dim: int, G=None, h=None, E=None, e=None):
        super().__init__(dim, G, None, E, None)
        if h is not None and np.any(np.asarray(h, dtype=float) != 0):
            raise ValueError("cone rows must have zero right-hand side")
        if e is not None and np.any(np.asarray(e, dtype=float) != 0):
            raise ValueError("cone rows must have zero right-hand side")

    @classmethod
    def from_generators(cls, dim: int, rays, lineality=None) -> "PolyhedralCone":
        A, E = cone_hrep(_mat(rays, dim), _mat(lineality, dim), dim)
        return cls(dim, A, None, E, None)

    @classmethod
    def nonneg_orthant(cls, dim: int) -> "PolyhedralCone":
        return cls(dim, -np.eye(dim))

    def generators(self) -> tuple[np.ndarray, np.ndarray]:
        return cone_generators(np.vstack([self.G, self.E, -self.E]), self.dim)

    def recession_cone(self) -> "PolyhedralCone":
        return self

    def __repr__(self) -> str:
        return f"PolyhedralCone(dim={self.dim}, ineq={self.n_ineq}, eq={self.n_eq})"


def recession_cone(S: Polyhedron) -> PolyhedralCone:
    """``{z : x + a z in S for all x in S, a > 0}`` = the set with zero right-hand sides."""
    return S.recession_cone()


def polar_cone(K: Polyhedron) -> PolyhedralCone:
    """``{y : y.z <= 0 for all z in K}`` for a cone ``K``."""
    if not K.is_cone():
        raise ValueError("polar_cone expects a cone (all right-hand sides zero)")
    R, L = cone_generators(np.vstack([K.G, K.E, -K.E]), K.dim)
    return PolyhedralCone(K.dim, R, None, L, None)


def support_function(S: Polyhedron, y) -> float:
    """``sup {y.z : z in S}``; ``+inf`` when unbounded."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != S.dim:
        raise ValueError(f"direction has length {y.size}, set lives in R^{S.dim}")
    G, h, eq = S.as_lp_rows()
    sol = _lp.solve(_lp.LinearProgram(-y, G, h, eq))
    if sol.status is _lp.Status.INFEASIBLE:
        raise ValueError("support function of an empty set")
    if sol.status is _lp.Status.UNBOUNDED:
        return np.inf
    if sol.status is not _lp.Status.OPTIMAL:
        raise RuntimeError(f"LP failed: {sol.status}")
    return -sol.objective_value


# ---------------------------------------------------------------------------
# functions


class PolyhedralFunction:
    """``z -> max_i (A[i].z + b[i])`` on ``domain``, ``+inf`` off it.

    With ``minus_inf=True`` the function is ``-inf`` on its domain instead
    (the improper result of a partial minimization that is unbounded below).
    """

    def __init__(self, dim: int, A=None, b=None, domain: Polyhedron | None = None, minus_inf: bool = False):
        self.dim = int(dim)
        self.A = _mat(A, self.dim)
        self.b = _vec(b, self.A.shape[0])
        self.A.setflags(write=False)
        self.b.setflags(write=False)
        self.domain = domain if domain is not None else Polyhedron(self.dim)
        if self.domain.dim != self.dim:
            raise ValueError(f"domain lives in R^{self.domain.dim}, function in R^{self.dim}")
        self.minus_inf = bool(minus_inf)

    # constructors ----------------------------------------------------------
    @classmethod
    def affine(cls, a, b: float = 0.0) -> "PolyhedralFunction":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return cls(a.size, a[None, :], [b])

    @classmethod
    def max_affine(cls, A, b, domain: Polyhedron | None = None) -> "PolyhedralFunction":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(A.shape[1], A, b, domain)

    @classmethod
    def indicator(cls, S: Polyhedron) -> "PolyhedralFunction":
        return cls(S.dim, None, None, S)

    @classmethod
    def zero(cls, dim: int) -> "PolyhedralFunction":
        return cls(dim)

    @classmethod
    def abs_sum(cls, dim: int, center=None, weight: float = 1.0) -> "PolyhedralFunction":
        """``weight * ||z - center||_1`` as ``2^dim`` pieces."""
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * dim, indexing="ij")).reshape(dim, -1).T * weight
        return cls(dim, signs, -signs @ c)

    # pieces used for evaluation: an empty piece list means the constant 0
    def _eff_pieces(self):
        if self.A.shape[0] == 0:
            return np.zeros((1, self.dim)), np.zeros(1)
        return self.A, self.b

    @property
    def n_pieces(self) -> int:
        return self.A.shape[0]

    def is_indicator(self) -> bool:
        return self.A.shape[0] == 0

    # evaluation ------------------------------------------------------------
    def __call__(self, z) -> float:
        return evaluate(self, z)

    def value_on_domain(self, z) -> float:
        A, b = self._eff_pieces()
        return float(np.max(A @ np.asarray(z, dtype=float) + b))

    # algebra ---------------------------------------------------------------
    def __add__(self, other: "PolyhedralFunction") -> "PolyhedralFunction":
        return add(self, other)

    def scale(self, lam: float) -> "PolyhedralFunction":
        if lam < 0:
            raise ValueError("only nonnegative scaling preserves convexity")
        return PolyhedralFunction(self.dim, self.A * lam, self.b * lam, self.domain, self.minus_inf)

    def add_linear(self, a, c: float = 0.0) -> "PolyhedralFunction":
        """``z -> f(z) + a.z + c``."""
        a = np.asarray(a, dtype=float).reshape(self.dim)
        A, b = self._eff_pieces()
        return PolyhedralFunction(self.dim, A + a, b + c, self.domain, self.minus_inf)

    def to_json(self) -> dict:
        out = {"dim": self.dim, "pieces": [list(map(float, a)) + [float(bv)] for a, bv in zip(self.A, self.b)]}
        dj = self.domain.to_json()
        out["ineq"] = dj["ineq"]
        out["eq"] = dj["eq"]
        if self.minus_inf:
            out["minus_inf"] = True
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "PolyhedralFunction":
        d = int(data["dim"])
        P = np.asarray(data.get("pieces", []), dtype=float).reshape(-1, d + 1)
        dom = Polyhedron.from_json({"dim": d, "ineq": data.get("ineq", []), "eq": data.get("eq", [])})
        return cls(d, P[:, :d], P[:, d], dom, bool(data.get("minus_inf", False)))

    def __repr__(self) -> str:
        flag = ", minus_inf" if self.minus_inf else ""
        return f"PolyhedralFunction(dim={self.dim}, pieces={self.n_pieces}, domain={self.domain!r}{flag})"

    # epigraph --------------------------------------------------------------
    def epigraph(self) -> Polyhedron:
        """``{(z, s) : z in dom, s >= f(z)}`` in ``R^{dim+1}``."""
        if self.minus_inf:
            raise ImproperFunctionError("epigraph of a function taking the value -inf")
        A, b = self._eff_pieces()
        d = self.dim
        G = np.vstack([np.hstack([A, -np.ones((A.shape[0], 1))]),
                       np.hstack([self.domain.G, np.zeros((self.domain.n_ineq, 1))])])
        h = np.concatenate([-b, self.domain.h])
        E = np.hstack([self.domain.E, np.zeros((self.domain.n_eq, 1))])
        return Polyhedron(d + 1, G, h, E, self.domain.e)


def evaluate(f: PolyhedralFunction, z, tol: float = 1e-9) -> float:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != f.dim:
        raise ValueError(f"argument has length {z.size}, function lives on R^{f.dim}")
    if not f.domain.contains(z, tol):
        return np.inf
    if f.minus_inf:
        return -np.inf
    return f.value_on_domain(z)


def add(f: PolyhedralFunction, g: PolyhedralFunction) -> PolyhedralFunction:
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    if f.minus_inf or g.minus_inf:
        raise ImproperFunctionError("sum with a -inf-valued function")
    Af, bf = f._eff_pieces()
    Ag, bg = g._eff_pieces()
    A = (Af[:, None, :] + Ag[None, :, :]).reshape(-1, f.dim)
    b = (bf[:, None] + bg[None, :]).reshape(-1)
    dom = intersect(f.domain, g.domain)
    return simplify(PolyhedralFunction(f.dim, A, b, dom))


def intersect(S: Polyhedron, T: Polyhedron) -> Polyhedron:
    return Polyhedron(S.dim, np.vstack([S.G, T.G]), np.concatenate([S.h, T.h]),
                      np.vstack([S.E, T.E]), np.concatenate([S.e, T.e]))


def _dedupe_rows(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if M.shape[0] <= 1:
        return M
    R = np.round(M / tol) * tol if tol else M
    _, idx = np.unique(R, axis=0, return_index=True)
    return M[np.sort(idx)]


def simplify(f: PolyhedralFunction) -> PolyhedralFunction:
    """Drop duplicate and pointwise-dominated pieces and duplicate domain rows."""
    if f.A.shape[0] == 0:
        P = np.zeros((0, f.dim + 1))
    else:
        P = _dedupe_rows(np.hstack([f.A, f.b[:, None]]), 1e-12)
        # a piece with the same slope as another but smaller offset never attains the max
        keep = []
        for i in range(P.shape[0]):
            same = np.all(np.abs(P[:, :-1] - P[i, :-1]) <= 1e-12, axis=1)
            if not np.any(same & (P[:, -1] > P[i, -1])):
                keep.append(i)
        P = P[keep]
    dom = f.domain
    if dom.n_ineq:
        Gh = _dedupe_rows(np.hstack([dom.G, dom.h[:, None]]), 1e-12)
        Gh = Gh[~(np.all(Gh[:, :-1] == 0, axis=1) & (Gh[:, -1] >= 0))]
        dom = Polyhedron(f.dim, Gh[:, :-1], Gh[:, -1], dom.E, dom.e)
    return PolyhedralFunction(f.dim, P[:, :-1], P[:, -1], dom, f.minus_inf)


def conjugate(f: PolyhedralFunction) -> PolyhedralFunction:
    """``f*(y) = sup_z {y.z - f(z)}``, computed from the generators of ``epi f``.

    Points ``(z_k, s_k)`` of the epigraph become pieces ``y.z_k - s_k``; rays
    ``(r, rho)`` become domain rows ``y.r <= rho``; lineality directions become
    domain equalities.
    """
    if f.minus_inf:
        raise ImproperFunctionError("conjugate of a function taking the value -inf")
    V = f.epigraph().vrep()
    d = f.dim
    if V.points.shape[0] == 0:
        raise ImproperFunctionError("conjugate of the function identically +inf")
    rays = V.rays
    keep = np.abs(rays[:, :d]).max(axis=1, initial=0) > TOL
    if np.any(~keep & (rays[:, d] < -TOL)):
        raise ImproperFunctionError("function is unbounded below")
    rays = rays[keep]
    lin = V.lineality
    if lin.shape[0] and np.any(np.abs(lin[:, :d]).max(axis=1) <= TOL):
        raise ImproperFunctionError("function is unbounded below")
    A = V.points[:, :d]
    b = -V.points[:, d]
    dom = Polyhedron(d, rays[:, :d], rays[:, d], lin[:, :d], lin[:, d])
    return simplify(PolyhedralFunction(d, A, b, dom))


def conjugate_value(f: PolyhedralFunction, y) -> float:
    """``f*(y)`` by a single LP over the epigraph (independent of :func:`conjugate`)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    epi = f.epigraph()
    G, h, eq = epi.as_lp_rows()
    c = np.concatenate([-y, [1.0]])
    sol = _lp.solve(_lp.LinearProgram(c, G, h, eq))
    if sol.status is _lp.Status.UNBOUNDED:
        return np.inf
    if sol.status is _lp.Status.INFEASIBLE:
        raise ImproperFunctionError("function identically +inf")
    return -sol.objective_value


def _from_epigraph_generators(dim: int, points, rays, lineality) -> PolyhedralFunction:
    """Function whose epigraph is ``conv(points) + cone(rays) + span(lineality)`` in ``R^{dim+1}``."""
    d = dim
    S = Polyhedron.from_vrep(d + 1, points, rays, lineality)
    beta = S.G[:, d] if S.n_ineq else np.zeros(0)
    piece = beta < -TOL
    dom_rows = np.abs(beta) <= TOL
    if np.any(beta > TOL) or (S.n_eq and np.any(np.abs(S.E[:, d]) > TOL)):
        raise RuntimeError("epigraph facet bounding s from above; numerical trouble")
    if not np.any(piece):
        # no facet bounds s from below: the function is -inf on its domain
        dom = Polyhedron(d, S.G[dom_rows, :d], S.h[dom_rows], S.E[:, :d], S.e)
        return PolyhedralFunction(d, None, None, dom, minus_inf=True)
    A = S.G[piece, :d] / -beta[piece, None]
    b = -S.h[piece] / -beta[piece]
    dom = Polyhedron(d, S.G[dom_rows, :d], S.h[dom_rows], S.E[:, :d], S.e)
    return simplify(PolyhedralFunction(d, A, b, dom))


def partial_inf(f: PolyhedralFunction, y, nx: int | None = None) -> PolyhedralFunction:
    """``l(x) = inf_u { f(x, u) - u.y }`` where ``f`` lives on ``(x, u)``.

    ``nx`` is the x-dimension (default ``f.dim - len(y)``).  A result that is
    ``-inf`` on its domain is returned with ``minus_inf=True``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float)).reshape(-1)
    nu = y.size
    nx = f.dim - nu if nx is None else nx
    if nx + nu != f.dim:
        raise ValueError(f"x-dim {nx} + u-dim {nu} != function dim {f.dim}")
    if f.minus_inf:
        raise ImproperFunctionError("partial minimization of a -inf-valued function")
    g = f.add_linear(np.concatenate([np.zeros(nx), -y]))
    V = g.epigraph().vrep()
    if V.points.shape[0] == 0:
        raise ImproperFunctionError("function identically +inf")
    keep = np.r_[np.arange(nx), f.dim]
    return _from_epigraph_generators(nx, V.points[:, keep], V.rays[:, keep], V.lineality[:, keep])


def partial_inf_value(f: PolyhedralFunction, x, y) -> float:
    """``inf_u { f(x, u) - u.y }`` at one ``x`` by LP (oracle for :func:`partial_inf`)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nx, nu = x.size, y.size
    A, b = f._eff_pieces()
    dom = f.domain
    # variables (u, s): min s - y.u  s.t. A_u u - s <= -b - A_x x, domain rows
    G = np.vstack([np.hstack([A[:, nx:], -np.ones((A.shape[0], 1))]),
                   np.hstack([dom.G[:, nx:], np.zeros((dom.n_ineq, 1))])])
    h = np.concatenate([-b - A[:, :nx] @ x, dom.h - dom.G[:, :nx] @ x])
    E = np.hstack([dom.E[:, nx:], np.zeros((dom.n_eq, 1))])
    e = dom.e - dom.E[:, :nx] @ x
    lp = _lp.LinearProgram(np.concatenate([-y, [1.0]]), np.vstack([G, E]), np.concatenate([h, e]),
                           np.r_[np.zeros(G.shape[0], bool), np.ones(E.shape[0], bool)])
    sol = _lp.solve(lp)
    if sol.status is _lp.Status.INFEASIBLE:
        return np.inf
    if sol.status is _lp.Status.UNBOUNDED:
        return -np.inf
    return sol.objective_value


def compose_linear(f: PolyhedralFunction, M, c=None) -> PolyhedralFunction:
    """``z -> f(M z + c)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != f.dim:
        raise ValueError(f"map has {M.shape[0]} outputs, function expects {f.dim}")
    c = np.zeros(f.dim) if c is None else np.asarray(c, dtype=float).reshape(f.dim)
    k = M.shape[1]
    dom = f.domain
    newdom = Polyhedron(k, dom.G @ M, dom.h - dom.G @ c, dom.E @ M, dom.e - dom.E @ c)
    if f.A.shape[0] == 0:
        return PolyhedralFunction(k, None, None, newdom, f.minus_inf)
    return PolyhedralFunction(k, f.A @ M, f.b + f.A @ c, newdom, f.minus_inf)


def lift(f: PolyhedralFunction, dim: int, coords: Sequence[int]) -> PolyhedralFunction:
    """View ``f`` as a function on ``R^dim`` that depends only on ``z[coords]``."""
    M = np.zeros((f.dim, dim))
    for i, j in enumerate(coords):
        M[i, j] = 1.0
    return compose_linear(f, M)


def epigraph_vertices_bruteforce(f: PolyhedralFunction) -> np.ndarray:
    """Vertices of ``epi f`` by enumerating all square subsystems (test oracle)."""
    import itertools

    epi = f.epigraph()
    G, h = np.vstack([epi.G, epi.E, -epi.E]), np.concatenate([epi.h, epi.e, -epi.e])
    n = epi.dim
    verts = []
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        v = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ v <= h + 1e-9) and not any(np.allclose(v, w) for w in verts):
            verts.append(v)
    return np.array(verts).reshape(-1, n)
