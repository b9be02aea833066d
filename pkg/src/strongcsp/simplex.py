"""Dense two-phase revised simplex.

Pricing is Dantzig's rule (most negative reduced cost). After a run of
degenerate pivots the solver switches to Bland's rule for the rest of the
phase, which rules out cycling. Pivoting is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SimplexError(RuntimeError):
    pass


@dataclass
class SimplexResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    fun: float
    iterations: int
    gap: float
    bland: bool


def _dense(a, ncols):
    if a is None:
        return np.zeros((0, ncols))
    if sp.issparse(a):
        return a.toarray().astype(np.float64)
    return np.asarray(a, dtype=np.float64).reshape(-1, ncols)


class _Tableau:
    def __init__(self, a, b, tol, max_iter, degenerate_limit):
        self.a = a
        self.b = b
        self.tol = tol
        self.max_iter = max_iter
        self.degenerate_limit = degenerate_limit
        self.iterations = 0
        self.bland = False
        self.pivot_tol = 1e-7

    def refactor(self):
        self.binv = np.linalg.inv(self.a[:, self.basis])

    def run(self, c, allowed):
        a, b, tol = self.a, self.b, self.tol
        m = a.shape[0]
        degenerate = 0
        bland = False
        since_refactor = 0
        while True:
            if since_refactor >= 25:
                self.refactor()
                since_refactor = 0
            xb = self.binv @ b
            y = c[self.basis] @ self.binv
            d = c - y @ a
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            if bland:
                cand = np.flatnonzero(d < -tol)
                if cand.size == 0:
                    return "optimal"
                j = int(cand[0])
            else:
                j = int(np.argmin(d))
                if d[j] >= -tol:
                    return "optimal"
            col = self.binv @ a[:, j]
            pos = col > self.pivot_tol * max(1.0, float(np.abs(col).max()))
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = np.maximum(xb[pos], 0.0) / col[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + tol)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(col[ties])])
            degenerate = degenerate + 1 if rmin <= tol else 0
            if degenerate > self.degenerate_limit:
                bland = True
                self.bland = True
            piv = col[r]
            self.binv[r] /= piv
            others = np.arange(m) != r
            self.binv[others] -= np.outer(col[others], self.binv[r])
            self.basis[r] = j
            since_refactor += 1
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise SimplexError("iteration cap exceeded")


def linprog_simplex(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, ub=None, tol: float = 1e-9,
                    max_iter: int = 50000, degenerate_limit: int = 50) -> SimplexResult:
    """Minimize ``c @ x`` subject to ``a_ub x <= b_ub``, ``a_eq x = b_eq`` and ``0 <= x <= ub``."""
    c = np.asarray(c, dtype=np.float64)
    nv = c.size
    a_ub = _dense(a_ub, nv)
    a_eq = _dense(a_eq, nv)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=np.float64)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=np.float64)
    ub = np.full(nv, np.inf) if ub is None else np.asarray(ub, dtype=np.float64)
    fin = np.flatnonzero(np.isfinite(ub))
    a_box = np.zeros((fin.size, nv))
    a_box[np.arange(fin.size), fin] = 1.0
    # rows needing a slack: ub rows and variable bounds
    a_slack = np.vstack([a_ub, a_box])
    b_slack = np.concatenate([b_ub, ub[fin]])
    ns = a_slack.shape[0]
    m = ns + a_eq.shape[0]
    a = np.zeros((m, nv + ns))
    a[:ns, :nv] = a_slack
    a[:ns, nv:] = np.eye(ns)
    a[ns:, :nv] = a_eq
    b = np.concatenate([b_slack, b_eq])
    flip = b < 0
    a[flip] *= -1
    b[flip] *= -1
    ncol = nv + ns
    if m == 0:
        if (c < -tol).any():
            return SimplexResult("unbounded", None, float("-inf"), 0, float("nan"), False)
        return SimplexResult("optimal", np.zeros(nv), 0.0, 0, 0.0, False)
    # phase 1 with one artificial per row
    full = np.hstack([a, np.eye(m)])
    tab = _Tableau(full, b, tol, max_iter, degenerate_limit)
    tab.basis = np.arange(ncol, ncol + m)
    tab.binv = np.eye(m)
    c1 = np.concatenate([np.zeros(ncol), np.ones(m)])
    allowed = np.ones(ncol + m, dtype=bool)
    tab.run(c1, allowed)
    tab.refactor()
    xb = tab.binv @ b
    infeas = float(c1[tab.basis] @ xb)
    if infeas > tol * max(1.0, float(np.abs(b).max(initial=0.0))) * 10:
        return SimplexResult("infeasible", None, float("nan"), tab.iterations, float("nan"), tab.bland)
    # drive artificials out of the basis where possible
    for r in range(m):
        if tab.basis[r] >= ncol:
            row = tab.binv[r] @ a
            row[tab.basis[tab.basis < ncol]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                col = tab.binv @ full[:, j]
                tab.binv[r] /= col[r]
                others = np.arange(m) != r
                tab.binv[others] -= np.outer(col[others], tab.binv[r])
                tab.basis[r] = j
    allowed[ncol:] = False
    c2 = np.concatenate([c, np.zeros(ns + m)])
    status = tab.run(c2, allowed)
    if status == "unbounded":
        return SimplexResult("unbounded", None, float("-inf"), tab.iterations, float("nan"), tab.bland)
    tab.refactor()
    xb = tab.binv @ b
    z = np.zeros(ncol + m)
    z[tab.basis] = xb
    x = np.maximum(z[:nv], 0.0)
    y = c2[tab.basis] @ tab.binv
    fun = float(c @ x)
    gap = abs(fun - float(y @ b))
    return SimplexResult("optimal", x, fun, tab.iterations, gap, tab.bland)
