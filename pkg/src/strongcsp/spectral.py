"""Spectra of the normalized adjacency, threshold ranks and Cheeger sweeps.

Eigenvalues always refer to ``D^{-1/2} A D^{-1/2}`` with self-loops on the
diagonal of ``A`` and included in ``D``. Degree-0 vertices contribute a zero
row and column, hence an eigenvalue 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import Graph, GraphError, VertexSet, connected_components, with_self_loops

DENSE_CAP = 2000


class SpectralError(RuntimeError):
    def __init__(self, msg: str, best_residual: float = float("nan")):
        super().__init__(msg)
        self.best_residual = best_residual


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # descending
    vectors: np.ndarray | None
    tol: float


def _residuals(a, vals, vecs):
    r = a @ vecs - vecs * vals
    return np.linalg.norm(r, axis=0) / np.maximum(np.linalg.norm(vecs, axis=0), 1e-300)


def _dense_spectrum(g: Graph):
    a = g.normalized_adjacency(dense=True)
    vals, vecs = np.linalg.eigh(a)
    return a, vals[::-1], vecs[:, ::-1]


def lanczos_top(matvec, n: int, m: int, tol: float = 1e-10, seed: int = 0, max_dim: int | None = None, block: int | None = None):
    """Block Lanczos with full reorthogonalization for the ``m`` largest eigenpairs.

    A block of width ``block`` (default ``m + 2``) recovers eigenvalues of
    multiplicity up to the block width. Invariant subspaces are extended
    with fresh random directions, so the method finishes exactly once the
    basis spans the whole space.
    """
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    rng = np.random.default_rng(seed)
    b = min(n, block or m + 2)
    max_dim = n if max_dim is None else min(n, max_dim)
    q, _ = np.linalg.qr(rng.standard_normal((n, b)))
    basis = q
    images = matvec(q)
    best = np.inf
    while True:
        t = basis.T @ images
        t = 0.5 * (t + t.T)
        vals, ys = np.linalg.eigh(t)
        top = np.argsort(vals)[::-1][:m]
        theta = vals[top]
        x = basis @ ys[:, top]
        res = np.linalg.norm(images @ ys[:, top] - x * theta, axis=0)
        worst = float(res.max())
        best = min(best, worst)
        if worst <= tol or basis.shape[1] >= n:
            return theta, x, worst
        if basis.shape[1] >= max_dim:
            raise SpectralError("Lanczos did not converge", best)
        z = images[:, -b:] if images.shape[1] >= b else images
        for _ in range(2):
            z = z - basis @ (basis.T @ z)
        width = min(b, n - basis.shape[1])
        qz, rz = np.linalg.qr(z)
        keep = np.abs(np.diag(rz)) > 1e-10 * max(1.0, np.abs(rz).max(initial=0.0))
        qz = qz[:, keep][:, :width]
        while qz.shape[1] < width:
            extra = rng.standard_normal((n, width - qz.shape[1]))
            cur = np.hstack([basis, qz])
            for _ in range(2):
                extra = extra - cur @ (cur.T @ extra)
            qe, re = np.linalg.qr(extra)
            good = np.abs(np.diag(re)) > 1e-10
            qz = np.hstack([qz, qe[:, good]])
        basis = np.hstack([basis, qz])
        images = np.hstack([images, matvec(qz)])


def spectrum_top(g: Graph, m: int, tol: float = 1e-10, method: str = "auto", dense_cap: int = DENSE_CAP, seed: int = 0) -> Spectrum:
    """The ``m`` algebraically largest eigenpairs of the normalized adjacency."""
    if not 1 <= m <= g.n:
        raise ValueError("need 1 <= m <= n")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "auto":
        method = "dense" if g.n <= dense_cap else "lanczos"
    if method == "dense":
        a, vals, vecs = _dense_spectrum(g)
        vals, vecs = vals[:m], vecs[:, :m]
        res = _residuals(a, vals, vecs)
        worst = float(res.max())
        if worst > max(tol, 1e-8):
            raise SpectralError("dense eigensolve residual too large", worst)
        return Spectrum(vals, vecs, worst)
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    a = g.normalized_adjacency()
    vals, vecs, worst = lanczos_top(lambda x: a @ x, g.n, m, tol=tol, seed=seed)
    return Spectrum(vals, vecs, worst)


def full_spectrum(g: Graph, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """All eigenvalues, descending."""
    if g.n > dense_cap:
        raise SpectralError(f"dense eigensolve limited to n <= {dense_cap}")
    if g.n == 0:
        return np.zeros(0)
    return np.linalg.eigvalsh(g.normalized_adjacency(dense=True))[::-1]


def _eigs_desc(g: Graph, need: int, dense_cap: int, tol: float) -> np.ndarray:
    """At least the top ``need`` eigenvalues (all of them on the dense path)."""
    if g.n <= dense_cap:
        return full_spectrum(g, dense_cap)
    return spectrum_top(g, min(need, g.n), tol=tol, method="lanczos").eigenvalues


@dataclass(frozen=True)
class RankReport:
    rank: int
    borderline: int
    threshold: float
    eigenvalues: np.ndarray


def threshold_rank_report(g: Graph, eps: float, tol: float = 1e-9, dense_cap: int = DENSE_CAP) -> RankReport:
    """Count eigenvalues ``>= 1 - eps``; values within ``tol`` below are counted and flagged."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if g.n == 0:
        raise ValueError("empty graph")
    cut = 1.0 - eps
    need = min(g.n, 8)
    while True:
        vals = _eigs_desc(g, need, dense_cap, tol=min(tol, 1e-10))
        if vals.size == g.n or vals[-1] < cut - tol:
            break
        need = min(g.n, 2 * need)
    counted = vals >= cut - tol
    borderline = counted & (vals < cut)
    return RankReport(int(counted.sum()), int(borderline.sum()), cut, vals)


def threshold_rank(g: Graph, eps: float, tol: float = 1e-9, dense_cap: int = DENSE_CAP) -> int:
    return threshold_rank_report(g, eps, tol, dense_cap).rank


def negative_threshold_rank(g: Graph, tau: float, dense_cap: int = DENSE_CAP) -> int:
    """Count eigenvalues ``<= tau`` (``tau < 0``)."""
    if tau >= 0:
        raise ValueError("tau must be negative")
    if g.n <= dense_cap:
        return int((full_spectrum(g, dense_cap) <= tau).sum())
    a = g.normalized_adjacency()
    need = min(g.n, 8)
    while True:
        vals, _, _ = lanczos_top(lambda x: -(a @ x), g.n, need)
        vals = -vals
        if need == g.n or vals[-1] > tau:
            return int((vals <= tau).sum())
        need = min(g.n, 2 * need)


def second_eigenvalue(g: Graph, dense_cap: int = DENSE_CAP) -> float:
    """lambda_2 of the normalized adjacency (``-inf`` for a single vertex)."""
    if g.n < 2:
        return float("-inf")
    return float(_eigs_desc(g, 2, dense_cap, 1e-10)[1])


def laplacian_eigenvalue(g: Graph, k: int, dense_cap: int = DENSE_CAP) -> float:
    """k-th smallest eigenvalue (1-based) of ``I - D^{-1/2} A D^{-1/2}``."""
    vals = _eigs_desc(g, k, dense_cap, 1e-10)
    return float(1.0 - vals[k - 1])


@dataclass(frozen=True)
class SweepResult:
    members: VertexSet
    phi: float
    lambda2_laplacian: float


def sweep_conductances(g: Graph, x: np.ndarray):
    """Order by ``x`` and return (order, phi of every proper prefix)."""
    order = np.argsort(x, kind="stable")
    pos = np.empty(g.n, dtype=np.int64)
    pos[order] = np.arange(g.n)
    cuts = _kernels.sweep_cuts(pos[g.src], pos[g.dst], g.weight, g.n)
    vol = np.cumsum(g.deg[order])[: g.n - 1]
    total = float(g.deg.sum())
    small = np.minimum(vol, total - vol)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(small > 0, cuts / np.where(small > 0, small, 1.0), np.where(cuts > 0, np.inf, 0.0))
    return order, phi


def cheeger_sweep(g: Graph, dense_cap: int = DENSE_CAP) -> SweepResult:
    """Best prefix of the ``D^{-1/2}``-scaled second eigenvector.

    A disconnected graph returns one component (cut 0). Components of
    positive volume are preferred; if only isolated vertices split off, they
    are returned together.
    """
    if g.n < 2:
        raise GraphError("cheeger sweep needs at least two vertices")
    comps = connected_components(g)
    if len(comps) > 1:
        vols = [float(g.deg[c].sum()) for c in comps]
        positive = [i for i, v in enumerate(vols) if v > 0]
        if len(positive) >= 2:
            i = min(positive, key=lambda j: (vols[j], comps[j].size))
            part = comps[i]
        else:
            part = np.flatnonzero(g.deg == 0)
        return SweepResult(VertexSet.of(part, g.n), 0.0, 0.0)
    if g.n <= dense_cap:
        _, vals, vecs = _dense_spectrum(g)
        lam2, v2 = vals[1], vecs[:, 1]
    else:
        spec = spectrum_top(g, 2, method="lanczos")
        lam2, v2 = spec.eigenvalues[1], spec.vectors[:, 1]
    x = v2 * g.inv_sqrt_deg
    order, phi = sweep_conductances(g, x)
    t = int(np.argmin(phi))
    return SweepResult(VertexSet.of(order[: t + 1], g.n), float(phi[t]), float(1.0 - lam2))


@dataclass(frozen=True)
class DominationReport:
    gaps: np.ndarray
    passed: bool
    worst_gap: float


def verify_spectral_domination(g_before: Graph, f, tol: float = 1e-8, dense_cap: int = DENSE_CAP) -> DominationReport:
    """Compare spectra before and after turning the edges in ``f`` into loops.

    Gap ``i`` is ``lambda_i(with loops) - lambda_i(before)``; all gaps must be
    ``>= -tol``.
    """
    if g_before.n > dense_cap:
        raise SpectralError(f"dense eigensolve limited to n <= {dense_cap}")
    after = with_self_loops(g_before, f)
    gaps = full_spectrum(after, dense_cap) - full_spectrum(g_before, dense_cap)
    worst = float(gaps.min()) if gaps.size else 0.0
    return DominationReport(gaps, bool(worst >= -tol), worst)
