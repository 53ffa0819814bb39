"""Double-description conversion between H- and V-representations of cones.

Every polyhedral object in the package is reduced to a homogeneous cone
``{x : A x <= 0}``; this module turns such a cone into generators
``cone(rays) + span(lineality)`` and back.
"""
from __future__ import annotations

import numpy as np

ZERO_TOL = 1e-9


def _normalize_rows(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return M
    s = np.abs(M).max(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return M / s


def snap(M: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """Round entries lying within ``tol`` of an integer onto it (removes DD round-off)."""
    r = np.round(M)
    return np.where(np.abs(M - r) <= tol * np.maximum(1.0, np.abs(M)), r, M)


def _dedupe(R: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    if R.shape[0] <= 1:
        return R
    R = _normalize_rows(R)
    keep = []
    for i in range(R.shape[0]):
        if all(np.abs(R[i] - R[j]).max() > tol for j in keep):
            keep.append(i)
    return R[keep]


def cone_generators(A: np.ndarray, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Generators of ``{x in R^d : A x <= 0}``.

    Returns ``(rays, lineality)`` with one generator per row, so that the cone
    equals ``cone(rays) + span(lineality)`` and the rays are extreme modulo the
    lineality space.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[1] if A.ndim == 2 and A.shape[1] else int(dim or 0)
    A = _normalize_rows(A.reshape(-1, d))
    A = A[np.abs(A).max(axis=1) > 0] if A.size else A
    lin = np.eye(d)
    rays = np.zeros((0, d))
    processed: list[int] = []
    for i in range(A.shape[0]):
        a = A[i]
        al = lin @ a if lin.size else np.zeros(0)
        if al.size and np.abs(al).max() > ZERO_TOL:
            k = int(np.argmax(np.abs(al)))
            l0 = lin[k]
            c0 = al[k]
            others = np.delete(np.arange(lin.shape[0]), k)
            lin = lin[others] - np.outer(al[others] / c0, l0)
            if rays.shape[0]:
                ar = rays @ a
                rays = rays - np.outer(ar / c0, l0)
            r0 = -l0 if c0 > 0 else l0
            rays = np.vstack([rays, r0[None, :]])
            lin = _orthonormalize(lin)
            rays = _normalize_rows(rays)
            processed.append(i)
            continue
        ar = rays @ a if rays.shape[0] else np.zeros(0)
        pos = np.flatnonzero(ar > ZERO_TOL)
        if pos.size == 0:
            processed.append(i)
            continue
        neg = np.flatnonzero(ar < -ZERO_TOL)
        zero = np.flatnonzero(np.abs(ar) <= ZERO_TOL)
        new = [rays[zero], rays[neg]]
        if neg.size:
            P = A[processed]
            Z = np.abs(rays @ P.T) <= ZERO_TOL if processed else np.zeros((rays.shape[0], 0), dtype=bool)
            need = d - lin.shape[0] - 2
            combos = []
            for p in pos:
                inter = Z[p] & Z[neg]                      # (len(neg), n_processed)
                counts = inter.sum(axis=1)
                for jn, nidx in enumerate(neg):
                    if counts[jn] < need:
                        continue
                    common = inter[jn]
                    # adjacent iff no third ray is tight on every common constraint
                    covers = ~((common & ~Z).any(axis=1))
                    covers[p] = False
                    covers[nidx] = False
                    if covers.any():
                        continue
                    r = ar[p] * rays[nidx] - ar[nidx] * rays[p]
                    combos.append(r)
            if combos:
                new.append(np.array(combos))
        rays = _normalize_rows(np.vstack(new)) if any(x.size for x in new) else np.zeros((0, d))
        processed.append(i)
    return snap(_dedupe(rays)), snap(_normalize_rows(lin))


def _orthonormalize(L: np.ndarray) -> np.ndarray:
    if L.shape[0] == 0:
        return L
    q, r = np.linalg.qr(L.T)
    keep = np.abs(np.diag(r)) > 1e-12
    return q[:, keep].T


def cone_hrep(rays: np.ndarray, lineality: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Facet description of ``cone(rays) + span(lineality)``.

    Returns ``(A, E)``: the cone is ``{x : A x <= 0, E x = 0}``.
    """
    rays = np.asarray(rays, dtype=float).reshape(-1, dim)
    lineality = np.asarray(lineality, dtype=float).reshape(-1, dim)
    # polar cone {w : w.r <= 0, w.l = 0}; its generators are the facet normals
    M = np.vstack([rays, lineality, -lineality])
    A, E = cone_generators(M, dim)
    return A, E
