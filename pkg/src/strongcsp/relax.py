"""Local-distribution LP relaxations for the deletion CSPs, and their solver.

Every program materializes one local per vertex, one per graph edge and
one per (pool vertex, other vertex) pair. Variable ``x[T, alpha]`` is the
probability that the tuple ``T`` takes the assignment ``alpha``. At level three
and above every triangle of the graph also gets a local. The rounding code
conditions on longer seeds by pinning labels and re-solving.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .graph import Graph
from .pseudodist import DEL, STAR, Alphabet, PseudoDistribution
from .simplex import linprog_simplex

TAGS = ("simplex", "consistency", "cardinality", "edge-slack", "partition", "coloring-anticorrelation", "objective")
SECONDARY_WEIGHT = 1e-2
SIMPLEX_MAX_VARS = 400


class RelaxError(RuntimeError):
    pass


class Infeasible(RelaxError):
    def __init__(self, msg: str, tags: tuple[str, ...] = ()):
        super().__init__(msg)
        self.tags = tags


# ------------------------------------------------------------------ instances


def _check_perm(p, k):
    p = np.asarray(p, dtype=np.int64)
    if p.shape != (k,) or sorted(p.tolist()) != list(range(k)):
        raise ValueError(f"not a bijection on [{k}]: {p.tolist()}")
    return p


@dataclass(frozen=True, eq=False)
class UGInstance:
    """Unique Games: ``perms[e][a]`` is the label forced on ``dst[e]`` by label ``a`` on ``src[e]``."""

    graph: Graph
    k: int
    perms: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.perms, dtype=np.int64).reshape(self.graph.m, self.k)
        for row in p:
            _check_perm(row, self.k)
        object.__setattr__(self, "perms", p)

    @classmethod
    def from_dict(cls, g: Graph, k: int, perms: Mapping[tuple[int, int], Sequence[int]]) -> "UGInstance":
        """Build from per-direction bijections; both directions, when given, must be inverse."""
        out = np.zeros((g.m, k), dtype=np.int64)
        seen = np.zeros(g.m, dtype=bool)
        idx = g.edge_index()
        for (i, j), p in perms.items():
            p = _check_perm(p, k)
            if (min(i, j), max(i, j)) not in idx:
                raise ValueError(f"({i}, {j}) is not an edge")
            e = idx[(min(i, j), max(i, j))]
            fwd = p if i < j else np.argsort(p)
            if seen[e] and not np.array_equal(out[e], fwd):
                raise ValueError(f"perms on ({i}, {j}) and ({j}, {i}) are not inverse")
            out[e] = fwd
            seen[e] = True
        if not seen.all():
            raise ValueError("missing bijection on some edge")
        return cls(g, k, out)

    def perm(self, i: int, j: int) -> np.ndarray:
        e = self.graph.edge_index()[(min(i, j), max(i, j))]
        return self.perms[e] if i < j else np.argsort(self.perms[e])

    def satisfied(self, labels: np.ndarray) -> np.ndarray:
        g = self.graph
        return self.perms[np.arange(g.m), labels[g.src]] == labels[g.dst]


@dataclass(frozen=True, eq=False)
class CSPInstance:
    """Binary CSP. ``relations[e]`` lists constraints on edge ``e`` as ``k x k`` boolean tables (src label, dst label)."""

    graph: Graph
    k: int
    relations: tuple

    def __post_init__(self):
        if len(self.relations) != self.graph.m:
            raise ValueError("one relation list per edge required")
        rel = []
        for e, lst in enumerate(self.relations):
            lst = [lst] if isinstance(lst, np.ndarray) and lst.ndim == 2 else list(lst)
            if not lst:
                raise ValueError(f"edge {e} carries no relation")
            tabs = []
            for r in lst:
                r = np.asarray(r, dtype=bool)
                if r.shape != (self.k, self.k):
                    raise ValueError(f"relation on edge {e} has shape {r.shape}")
                if not r.any():
                    raise ValueError(f"empty relation on edge {e}")
                tabs.append(r)
            rel.append(tuple(tabs))
        object.__setattr__(self, "relations", tuple(rel))

    @property
    def allowed(self) -> np.ndarray:
        """Conjunction of each edge's relations, shape ``(m, k, k)``."""
        out = np.ones((self.graph.m, self.k, self.k), dtype=bool)
        for e, lst in enumerate(self.relations):
            for r in lst:
                out[e] &= r
        return out

    def satisfied(self, labels: np.ndarray) -> np.ndarray:
        g = self.graph
        return self.allowed[np.arange(g.m), labels[g.src], labels[g.dst]]


@dataclass(frozen=True, eq=False)
class SeparatorProblem:
    graph: Graph
    gamma: float
    slack: float


@dataclass(frozen=True, eq=False)
class ColoringProblem:
    graph: Graph


def ug_alphabet(k: int) -> Alphabet:
    return Alphabet(k, (STAR,))


# -------------------------------------------------------------------- program


@dataclass
class RowBlock:
    tag: str
    desc: str
    start: int
    stop: int


@dataclass
class RelaxationProgram:
    kind: str
    instance: object
    n: int
    alphabet: Alphabet
    level: int
    pairs: np.ndarray  # (p, 2), sorted rows
    a: sp.csr_matrix
    sense: np.ndarray  # "E" or "L" per row
    rhs: np.ndarray
    blocks: list[RowBlock]
    c_primary: np.ndarray
    c_secondary: np.ndarray
    maximize: bool
    pool: tuple[int, ...]
    params: dict
    triples: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    pins: dict[int, int] = field(default_factory=dict)

    @property
    def q(self) -> int:
        return self.alphabet.size

    @property
    def n_vars(self) -> int:
        return self.n * self.q + self.pairs.shape[0] * self.q ** 2 + self.triples.shape[0] * self.q ** 3

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    @property
    def tags(self) -> set[str]:
        return {b.tag for b in self.blocks if b.stop > b.start} | {"objective"}

    @property
    def materialized(self) -> list[tuple[int, ...]]:
        return ([(i,) for i in range(self.n)] + [tuple(int(x) for x in p) for p in self.pairs]
                + [tuple(int(x) for x in t) for t in self.triples])

    def objective(self) -> np.ndarray:
        """The vector handed to the minimizer."""
        c = self.c_primary + SECONDARY_WEIGHT * self.c_secondary
        return -c if self.maximize else c

    def upper_bounds(self) -> np.ndarray:
        ub = np.full(self.n_vars, np.inf)
        q = self.q
        for v, a in self.pins.items():
            row = np.arange(v * q, (v + 1) * q)
            ub[row[row != v * q + a]] = 0.0
        return ub

    def pinned(self, pins: Mapping[int, int]) -> "RelaxationProgram":
        out = RelaxationProgram(**{f: getattr(self, f) for f in self.__dataclass_fields__})
        out.pins = {**self.pins, **{int(k): int(v) for k, v in pins.items()}}
        return out

    def row_name(self, r: int) -> str:
        for b in self.blocks:
            if b.start <= r < b.stop:
                return f"{b.tag}:{b.desc}#{r - b.start}"
        raise IndexError(r)

    def var_name(self, j: int) -> str:
        q, n = self.q, self.n
        if j < n * q:
            return f"x[{j // q}|{self.alphabet.symbol(j % q)}]"
        j -= n * q
        sym = self.alphabet.symbol
        if j < self.pairs.shape[0] * q * q:
            t, rest = divmod(j, q * q)
            u, v = self.pairs[t]
            a, b = divmod(rest, q)
            return f"x[{u},{v}|{sym(a)},{sym(b)}]"
        t, rest = divmod(j - self.pairs.shape[0] * q * q, q ** 3)
        a, b, c = np.unravel_index(rest, (q, q, q))
        u, v, w = self.triples[t]
        return f"x[{u},{v},{w}|{sym(a)},{sym(b)},{sym(c)}]"

    def locals_of(self, x: np.ndarray) -> dict[tuple[int, ...], np.ndarray]:
        q, n = self.q, self.n
        p = self.pairs.shape[0]
        single = x[: n * q].reshape(n, q)
        pair = x[n * q: n * q + p * q * q].reshape(-1, q, q)
        trip = x[n * q + p * q * q:].reshape(-1, q, q, q)
        out = {(i,): single[i] for i in range(n)}
        for t, (u, v) in enumerate(self.pairs):
            out[(int(u), int(v))] = pair[t]
        for t, tri in enumerate(self.triples):
            out[tuple(int(v) for v in tri)] = trip[t]
        return out

    def vector_of(self, pd: PseudoDistribution) -> np.ndarray:
        """Read every materialized local of ``pd`` into a variable vector."""
        q, n = self.q, self.n
        x = np.empty(self.n_vars)
        for i in range(n):
            x[i * q:(i + 1) * q] = np.asarray(pd.marginal((i,)), dtype=np.float64)
        base = n * q
        for t, (u, v) in enumerate(self.pairs):
            x[base + t * q * q: base + (t + 1) * q * q] = np.asarray(pd.marginal((u, v)), dtype=np.float64).ravel()
        base += self.pairs.shape[0] * q * q
        for t, tri in enumerate(self.triples):
            x[base + t * q ** 3: base + (t + 1) * q ** 3] = np.asarray(pd.marginal(tri), dtype=np.float64).ravel()
        return x

    def violation(self, x: np.ndarray) -> float:
        r = self.a @ x - self.rhs
        eq = self.sense == "E"
        worst = max(float(np.abs(r[eq]).max(initial=0.0)), float(r[~eq].max(initial=0.0)))
        worst = max(worst, float(-x.min(initial=0.0)))
        ub = self.upper_bounds()
        fin = np.isfinite(ub)
        return max(worst, float((x[fin] - ub[fin]).max(initial=0.0)))

    def dumps(self) -> str:
        """Plain-text LP listing: objective, named constraints, then bounds."""
        lines = ["maximize" if self.maximize else "minimize"]
        c = self.c_primary + SECONDARY_WEIGHT * self.c_secondary
        terms = [f"{c[j]:+.12g} {self.var_name(j)}" for j in np.flatnonzero(c)]
        lines.append(" obj: " + (" ".join(terms) if terms else "0"))
        lines.append("subject to")
        a = self.a.tocsr()
        op = {"E": "=", "L": "<="}
        for r in range(a.shape[0]):
            lo, hi = a.indptr[r], a.indptr[r + 1]
            terms = " ".join(f"{a.data[t]:+.12g} {self.var_name(a.indices[t])}" for t in range(lo, hi))
            lines.append(f" {self.row_name(r)}: {terms} {op[self.sense[r]]} {self.rhs[r]:.12g}")
        lines.append("bounds")
        ub = self.upper_bounds()
        for j in np.flatnonzero(np.isfinite(ub)):
            lines.append(f" 0 <= {self.var_name(j)} <= {ub[j]:.12g}")
        lines.append("end")
        return "\n".join(lines) + "\n"


class _Rows:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.sense, self.rhs = [], []
        self.blocks: list[RowBlock] = []
        self.count = 0

    def add(self, tag, desc, local_rows, cols, vals, sense, rhs):
        """Append a block of rows given in COO form with block-local row ids."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
        nr = rhs.size
        self.rows.append(np.asarray(local_rows, dtype=np.int64) + self.count)
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.broadcast_to(np.asarray(vals, dtype=np.float64), np.shape(cols)).copy())
        self.sense.append(np.full(nr, sense))
        self.rhs.append(rhs)
        self.blocks.append(RowBlock(tag, desc, self.count, self.count + nr))
        self.count += nr

    def matrix(self, nv):
        if not self.rows:
            return sp.csr_matrix((0, nv)), np.zeros(0, dtype="<U1"), np.zeros(0)
        a = sp.csr_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(self.count, nv))
        a.sum_duplicates()
        return a, np.concatenate(self.sense), np.concatenate(self.rhs)


class _Layout:
    """Variable indexing for singleton, pair and triple locals."""

    def __init__(self, n, q, pairs, triples=None):
        self.n, self.q = n, q
        self.pairs = pairs
        self.triples = np.zeros((0, 3), dtype=np.int64) if triples is None else triples
        self.base = n * q
        self.base3 = self.base + pairs.shape[0] * q * q
        self.nv = self.base3 + self.triples.shape[0] * q ** 3
        self.pair_id = {(int(u), int(v)): t for t, (u, v) in enumerate(pairs)}

    def triple(self, t, a, b, c):
        q = self.q
        return self.base3 + np.asarray(t) * q ** 3 + (np.asarray(a) * q + np.asarray(b)) * q + np.asarray(c)

    def single(self, i, a):
        return np.asarray(i) * self.q + np.asarray(a)

    def pair(self, t, a, b):
        return self.base + np.asarray(t) * self.q * self.q + np.asarray(a) * self.q + np.asarray(b)

    def pair_oriented(self, s, i, a_s, a_i):
        """Variable for ``X_s = a_s, X_i = a_i`` whatever the stored order."""
        if s < i:
            return self.pair(self.pair_id[(s, i)], a_s, a_i)
        return self.pair(self.pair_id[(i, s)], a_i, a_s)


def _pairs_for(g: Graph, pool: Sequence[int], n: int) -> np.ndarray:
    keys = set(zip(g.src.tolist(), g.dst.tolist()))
    for s in pool:
        for i in range(n):
            if i != s:
                keys.add((min(s, i), max(s, i)))
    if not keys:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(keys), dtype=np.int64)


def graph_triangles(g: Graph) -> np.ndarray:
    """All triangles ``i < j < l`` of ``g``."""
    adj = [set(g.neighbors(v).tolist()) for v in range(g.n)]
    out = []
    for u, v in zip(g.src.tolist(), g.dst.tolist()):
        for w in adj[u] & adj[v]:
            if w > v:
                out.append((u, v, w))
    return np.array(sorted(out), dtype=np.int64).reshape(-1, 3)


def _triple_rows(lay: _Layout, rows: _Rows):
    q, tri = lay.q, lay.triples
    nt = tri.shape[0]
    if not nt:
        return
    t = np.repeat(np.arange(nt), q ** 3)
    rows.add("simplex", "triple", t, lay.base3 + t * q ** 3 + np.tile(np.arange(q ** 3), nt), 1.0, "E", np.ones(nt))
    grid = np.array(np.unravel_index(np.arange(q ** 3), (q, q, q)))  # (3, q^3)
    for drop in range(3):
        keep = [x for x in range(3) if x != drop]
        lr, cols, vals = [], [], []
        for ti in range(nt):
            pid = lay.pair_id[(int(tri[ti, keep[0]]), int(tri[ti, keep[1]]))]
            local = ti * q * q + grid[keep[0]] * q + grid[keep[1]]
            lr.append(local)
            cols.append(lay.triple(ti, grid[0], grid[1], grid[2]))
            vals.append(np.ones(q ** 3))
            ab = np.arange(q * q)
            lr.append(ti * q * q + ab)
            cols.append(lay.pair(pid, ab // q, ab % q))
            vals.append(-np.ones(q * q))
        rows.add("consistency", f"triple-drop{drop}", np.concatenate(lr), np.concatenate(cols), np.concatenate(vals),
                 "E", np.zeros(nt * q * q))


def _base_rows(lay: _Layout, rows: _Rows):
    n, q, pairs = lay.n, lay.q, lay.pairs
    p = pairs.shape[0]
    # simplex rows
    i = np.repeat(np.arange(n), q)
    a = np.tile(np.arange(q), n)
    rows.add("simplex", "singleton", i, lay.single(i, a), 1.0, "E", np.ones(n))
    if p:
        t = np.repeat(np.arange(p), q * q)
        ab = np.tile(np.arange(q * q), p)
        rows.add("simplex", "pair", t, lay.base + t * q * q + ab, 1.0, "E", np.ones(p))
        # consistency: sum over the other coordinate equals the singleton
        for side in (0, 1):
            r_t = np.repeat(np.arange(p), q)  # one row per (pair, label)
            r_a = np.tile(np.arange(q), p)
            local = np.arange(p * q)
            lr = np.repeat(local, q)
            tt = np.repeat(r_t, q)
            aa = np.repeat(r_a, q)
            bb = np.tile(np.arange(q), p * q)
            cols = lay.pair(tt, aa, bb) if side == 0 else lay.pair(tt, bb, aa)
            vert = pairs[r_t, side]
            lr = np.concatenate([lr, local])
            cols = np.concatenate([cols, lay.single(vert, r_a)])
            vals = np.concatenate([np.ones(p * q * q), -np.ones(p * q)])
            rows.add("consistency", f"side{side}", lr, cols, vals, "E", np.zeros(p * q))


def _count_rows(lay: _Layout, rows: _Rows, tag: str, pool, inset: np.ndarray, bound: float, sense: str,
                negate: bool = False):
    """``sum_i Pr[X_i in L] (sense) bound`` plus copies conditioned on each pool vertex label.

    ``L`` is the label mask ``inset``; ``negate`` flips the row to express ``>=``.
    """
    n, q = lay.n, lay.q
    sign = -1.0 if negate else 1.0
    labs = np.flatnonzero(inset)
    i = np.repeat(np.arange(n), labs.size)
    a = np.tile(labs, n)
    rows.add(tag, "global", np.zeros(i.size), lay.single(i, a), sign, sense, [sign * bound])
    for s in pool:
        others = np.array([v for v in range(n) if v != s], dtype=np.int64)
        lr, cols, vals = [], [], []
        for a_s in range(q):
            vv = np.repeat(others, labs.size)
            bb = np.tile(labs, others.size)
            lo = np.minimum(vv, s)
            hi = np.maximum(vv, s)
            tid = np.array([lay.pair_id[(int(x), int(y))] for x, y in zip(lo, hi)], dtype=np.int64)
            first = vv > s  # s is the first coordinate of the stored pair
            c = np.where(first, lay.pair(tid, a_s, bb), lay.pair(tid, bb, a_s))
            self_coef = (1.0 if inset[a_s] else 0.0) - bound
            lr.append(np.full(c.size + 1, a_s))
            cols.append(np.concatenate([c, [lay.single(s, a_s)]]))
            vals.append(sign * np.concatenate([np.ones(c.size), [self_coef]]))
        rows.add(tag, f"given x{s}", np.concatenate(lr), np.concatenate(cols), np.concatenate(vals), sense, np.zeros(q))


def _mask(q, labels):
    m = np.zeros(q, dtype=bool)
    m[list(labels)] = True
    return m


def _edge_pair_ids(lay: _Layout, g: Graph) -> np.ndarray:
    return np.array([lay.pair_id[(int(u), int(v))] for u, v in zip(g.src, g.dst)], dtype=np.int64)


def _forbid(lay: _Layout, rows: _Rows, tag: str, desc: str, edge_t, mask, sense="E"):
    """One row ``x[e, a, b] = 0`` per forbidden ``(a, b)``; ``mask`` has shape (m, q, q)."""
    e, a, b = np.nonzero(mask)
    cols = lay.pair(edge_t[e], a, b)
    rows.add(tag, desc, np.arange(e.size), cols, 1.0, sense, np.zeros(e.size))


def _pool(n: int, pool, pool_size: int, rng) -> tuple[int, ...]:
    if pool is not None:
        return tuple(sorted(int(v) for v in pool))
    if pool_size <= 0 or n == 0:
        return ()
    rng = np.random.default_rng(rng)
    return tuple(sorted(int(v) for v in rng.choice(n, size=min(pool_size, n), replace=False)))


def _assemble(kind, inst, n, alpha, level, lay, rows, c_primary, c_secondary, maximize, pool, params):
    if level < 2:
        raise ValueError("level must be at least 2")
    a, sense, rhs = rows.matrix(lay.nv)
    return RelaxationProgram(kind, inst, n, alpha, level, lay.pairs, a, sense, rhs, rows.blocks,
                             c_primary, c_secondary, maximize, pool, params, lay.triples)


def _layout(g: Graph, q: int, pool, level: int) -> _Layout:
    tri = graph_triangles(g) if level >= 3 else None
    return _Layout(g.n, q, _pairs_for(g, pool, g.n), tri)


def _violation_objective(lay, g, edge_t, bad):
    c = np.zeros(lay.nv)
    if g.m:
        e, a, b = np.nonzero(bad)
        c[lay.pair(edge_t[e], a, b)] = 1.0 / g.m
    return c


def _star_objective(lay, n, star):
    c = np.zeros(lay.nv)
    c[lay.single(np.arange(n), star)] = 1.0 / max(n, 1)
    return c


def build_strong_ug(inst: UGInstance, delta: float, level: int = 2, pool=None, pool_size: int = 4, rng=0) -> RelaxationProgram:
    """Deletion UG: labels ``[k]`` plus STAR, STAR mass at most ``2 delta n``."""
    g, k = inst.graph, inst.k
    n = g.n
    alpha = ug_alphabet(k)
    q = alpha.size
    star = alpha.index(STAR)
    pool = _pool(n, pool, pool_size, rng)
    lay = _layout(g, q, pool, level)
    rows = _Rows()
    _base_rows(lay, rows)
    _triple_rows(lay, rows)
    _count_rows(lay, rows, "cardinality", pool, _mask(q, [star]), 2 * delta * n, "L")
    edge_t = _edge_pair_ids(lay, g)
    bad = np.zeros((g.m, q, q), dtype=bool)
    if g.m:
        bad[:, :k, :k] = np.arange(k)[None, None, :] != inst.perms[:, :, None]
    _forbid(lay, rows, "edge-slack", "bijection", edge_t, bad)
    return _assemble("ug", inst, n, alpha, level, lay, rows, _violation_objective(lay, g, edge_t, bad),
                     _star_objective(lay, n, star), False, pool, {"delta": delta})


def build_separator(g: Graph, delta: float, gamma_balance: float, level: int = 2, slack: float = 0.1,
                    pool=None, pool_size: int = 4, rng=0) -> RelaxationProgram:
    """Sides ``0``/``1`` plus STAR; no edge joins the two sides; side-0 mass near ``gamma n``."""
    n = g.n
    alpha = Alphabet(2, (STAR,))
    q, star = 3, 2
    pool = _pool(n, pool, pool_size, rng)
    lay = _layout(g, q, pool, level)
    rows = _Rows()
    _base_rows(lay, rows)
    _triple_rows(lay, rows)
    _count_rows(lay, rows, "cardinality", pool, _mask(q, [star]), 2 * delta * n, "L")
    edge_t = _edge_pair_ids(lay, g)
    bad = np.zeros((g.m, q, q), dtype=bool)
    bad[:, 0, 1] = bad[:, 1, 0] = True
    _forbid(lay, rows, "edge-slack", "same side", edge_t, bad)
    side0 = _mask(q, [0])
    _count_rows(lay, rows, "partition", pool, side0, (gamma_balance + slack) * n, "L")
    _count_rows(lay, rows, "partition", pool, side0, (gamma_balance - slack) * n, "L", negate=True)
    inst = SeparatorProblem(g, gamma_balance, slack)
    return _assemble("separator", inst, n, alpha, level, lay, rows, _violation_objective(lay, g, edge_t, bad),
                     _star_objective(lay, n, star), False, pool, {"delta": delta, "gamma": gamma_balance, "slack": slack})


def build_coloring(g: Graph, delta: float, level: int = 2, pool=None, pool_size: int = 4, rng=0) -> RelaxationProgram:
    """Colors ``0, 1, 2`` plus STAR; monochromatic edge mass is zero; STAR mass at most ``delta n``."""
    n = g.n
    alpha = Alphabet(3, (STAR,))
    q, star = 4, 3
    pool = _pool(n, pool, pool_size, rng)
    lay = _layout(g, q, pool, level)
    rows = _Rows()
    _base_rows(lay, rows)
    _triple_rows(lay, rows)
    _count_rows(lay, rows, "cardinality", pool, _mask(q, [star]), delta * n, "L")
    edge_t = _edge_pair_ids(lay, g)
    if g.m:
        e = np.repeat(np.arange(g.m), 3)
        a = np.tile(np.arange(3), g.m)
        rows.add("coloring-anticorrelation", "monochromatic", e, lay.pair(edge_t[e], a, a), 1.0, "L", np.zeros(g.m))
    bad = np.zeros((g.m, q, q), dtype=bool)
    bad[:, np.arange(3), np.arange(3)] = True
    return _assemble("coloring", ColoringProblem(g), n, alpha, level, lay, rows, _violation_objective(lay, g, edge_t, bad),
                     _star_objective(lay, n, star), False, pool, {"delta": delta})


def build_subset_csp(inst: CSPInstance, eps_size: float, level: int = 2, pool=None, pool_size: int = 4, rng=0,
                     count: str = "kept") -> RelaxationProgram:
    """Labels ``[k]`` plus DEL; maximize satisfied edge mass with exactly ``eps n`` kept.

    ``count="kept"`` fixes the non-DEL mass at ``eps n``; ``count="deleted"``
    fixes the DEL mass at ``eps n`` instead.
    """
    if not 0 < eps_size <= 1:
        raise ValueError("eps_size must lie in (0, 1]")
    if count not in ("kept", "deleted"):
        raise ValueError("count must be 'kept' or 'deleted'")
    g, k = inst.graph, inst.k
    n = g.n
    alpha = Alphabet(k, (DEL,))
    q, dl = k + 1, k
    pool = _pool(n, pool, pool_size, rng)
    lay = _layout(g, q, pool, level)
    rows = _Rows()
    _base_rows(lay, rows)
    _triple_rows(lay, rows)
    counted = ~_mask(q, [dl]) if count == "kept" else _mask(q, [dl])
    _count_rows(lay, rows, "cardinality", pool, counted, eps_size * n, "E")
    edge_t = _edge_pair_ids(lay, g)
    good = np.zeros((g.m, q, q), dtype=bool)
    if g.m:
        good[:, :k, :k] = inst.allowed
    c = _violation_objective(lay, g, edge_t, good)
    return _assemble("subset", inst, n, alpha, level, lay, rows, c, np.zeros(lay.nv), True, pool,
                     {"eps": eps_size, "count": count})


# ----------------------------------------------------------------- solving


@dataclass
class RelaxationSolution:
    pd: PseudoDistribution
    value: float
    stats: dict
    program: RelaxationProgram
    x: np.ndarray


@dataclass
class _Reduced:
    """The program with provably-zero variables removed."""

    c: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    live: np.ndarray  # kept columns of the full program
    infeasible: bool


def _presolve(a: sp.csr_matrix, sense: np.ndarray, rhs: np.ndarray, c: np.ndarray, ub: np.ndarray, tol: float) -> _Reduced:
    """Fix variables to zero until no row forces more.

    A row with right-hand side 0 whose live coefficients all share one sign
    forces each of its live variables to 0 (variables are nonnegative). For
    ``<=`` rows only nonnegative coefficients qualify.
    """
    a = a.tocsr()
    zero = ub <= 0
    rows_alive = np.ones(a.shape[0], dtype=bool)
    is_eq = sense == "E"
    while True:
        live = sp.diags((~zero).astype(np.float64))
        al = (a @ live).tocsr()
        al.eliminate_zeros()
        pos = np.asarray(al.maximum(0).sum(axis=1)).ravel() > 0
        neg = np.asarray((-al).maximum(0).sum(axis=1)).ravel() > 0
        forcing = rows_alive & (np.abs(rhs) <= 0) & ((~neg) | (is_eq & ~pos)) & (pos | neg)
        if not forcing.any():
            break
        cols = al[np.flatnonzero(forcing)].indices
        zero[cols] = True
        rows_alive &= ~forcing
    live_cols = ~zero
    empty = np.diff(al.indptr) == 0
    bad_eq = empty & is_eq & (np.abs(rhs) > tol)
    bad_ub = empty & ~is_eq & (rhs < -tol)
    keep = rows_alive & ~empty
    ar = al[:, live_cols]
    eq = keep & is_eq
    le = keep & ~is_eq
    return _Reduced(c[live_cols], ar[le], rhs[le], ar[eq], rhs[eq], live_cols,
                    bool((bad_eq & rows_alive).any() or (bad_ub & rows_alive).any()))


def _run_highs(red: _Reduced, tol):
    a_ub, b_ub, a_eq, b_eq = red.a_ub, red.b_ub, red.a_eq, red.b_eq
    res = linprog(red.c, A_ub=a_ub if a_ub.shape[0] else None, b_ub=b_ub if a_ub.shape[0] else None,
                  A_eq=a_eq if a_eq.shape[0] else None, b_eq=b_eq if a_eq.shape[0] else None,
                  bounds=(0, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": tol * 0.1, "dual_feasibility_tolerance": tol * 0.1})
    if res.status == 2:
        return "infeasible", None, 0, float("nan")
    if res.status != 0:
        raise RelaxError(f"LP solver failed: {res.message}")
    dual = 0.0
    if a_ub.shape[0]:
        dual += float(res.ineqlin.marginals @ b_ub)
    if a_eq.shape[0]:
        dual += float(res.eqlin.marginals @ b_eq)
    gap = abs(float(res.fun) - dual)
    return "optimal", res.x, int(getattr(res, "nit", 0)), gap


def _run_simplex(red: _Reduced, tol):
    res = linprog_simplex(red.c, red.a_ub, red.b_ub, red.a_eq, red.b_eq, tol=min(tol, 1e-9))
    if res.status == "infeasible":
        return "infeasible", None, res.iterations, float("nan")
    if res.status != "optimal":
        raise RelaxError(f"LP solver failed: {res.status}")
    return "optimal", res.x, res.iterations, res.gap


def _run(a, sense, rhs, c, ub, method, tol):
    red = _presolve(a, sense, rhs, c, ub, tol)
    if red.infeasible:
        return "infeasible", None, 0, float("nan")
    if red.c.size == 0:
        x = np.zeros(0)
        status, iters, gap = "optimal", 0, 0.0
    else:
        status, x, iters, gap = (_run_highs if method == "highs" else _run_simplex)(red, tol)
        if status != "optimal":
            return status, None, iters, gap
    full = np.zeros(c.size)
    full[red.live] = x
    return status, full, iters, gap


def _feasible(prog, keep_rows, method, tol):
    return _run(prog.a.tocsr()[keep_rows], prog.sense[keep_rows], prog.rhs[keep_rows], np.zeros(prog.n_vars),
                prog.upper_bounds(), method, tol)[0] == "optimal"


def diagnose_infeasible(prog: RelaxationProgram, method: str = "highs", tol: float = 1e-7) -> tuple[str, ...]:
    """A minimal set of constraint tags whose rows alone (with simplex and consistency) are infeasible."""
    core = ("simplex", "consistency")
    optional = sorted({b.tag for b in prog.blocks} - set(core))
    keep = list(optional)

    def mask(tags):
        m = np.zeros(prog.n_rows, dtype=bool)
        for b in prog.blocks:
            if b.tag in core or b.tag in tags:
                m[b.start:b.stop] = True
        return m

    for t in list(keep):
        trial = [x for x in keep if x != t]
        if not _feasible(prog, mask(trial), method, tol):
            keep = trial
    return tuple(core) + tuple(keep) + (("pins",) if prog.pins else ())


def solve(prog: RelaxationProgram, method: str = "auto", tol: float = 1e-7, diagnose: bool = True) -> RelaxationSolution:
    """Optimal locals for ``prog``; raises :class:`Infeasible` when none exist."""
    if method == "auto":
        method = "simplex" if prog.n_vars <= SIMPLEX_MAX_VARS and prog.n_rows <= SIMPLEX_MAX_VARS else "highs"
    if method not in ("highs", "simplex"):
        raise ValueError(f"unknown method {method!r}")
    t0 = time.perf_counter()
    c = prog.objective()
    ub = prog.upper_bounds()
    status, x, iters, gap = _run(prog.a, prog.sense, prog.rhs, c, ub, method, tol)
    if status == "infeasible":
        tags = diagnose_infeasible(prog, method, tol) if diagnose else ()
        raise Infeasible("relaxation is infeasible" + (f" (tags: {', '.join(tags)})" if tags else ""), tags)
    x = np.where(np.abs(x) < 1e-12, 0.0, x)
    viol = prog.violation(x)
    if viol > tol:
        raise RelaxError(f"numerical breakdown: constraint violation {viol:.3g}")
    x = np.clip(x, 0.0, None)
    pd = PseudoDistribution(prog.level, prog.n, prog.alphabet, prog.locals_of(x), tol=tol)
    value = float(prog.c_primary @ x)
    stats = {"solver": method, "iterations": iters, "max_violation": viol, "duality_gap": gap,
             "n_vars": prog.n_vars, "n_rows": prog.n_rows, "seconds": time.perf_counter() - t0,
             "pins": dict(prog.pins)}
    return RelaxationSolution(pd, value, stats, prog, x)


def evaluate_objective(inst, pd: PseudoDistribution) -> float:
    """Edge-average violation mass (satisfaction mass for a CSPInstance).

    Only base-label pairs can violate; pairs involving a special symbol
    never count as violations.
    """
    if isinstance(inst, RelaxationProgram):
        inst = inst.instance
    g = inst.graph
    if g.m == 0:
        return 0.0
    total = 0.0
    for e, (u, v) in enumerate(zip(g.src.tolist(), g.dst.tolist())):
        m = np.asarray(pd.marginal((u, v)), dtype=np.float64)
        if isinstance(inst, UGInstance):
            k = inst.k
            bad = np.arange(k)[None, :] != inst.perms[e][:, None]
            total += float(m[:k, :k][bad].sum())
        elif isinstance(inst, SeparatorProblem):
            total += float(m[0, 1] + m[1, 0])
        elif isinstance(inst, ColoringProblem):
            total += float(np.trace(m[:3, :3]))
        elif isinstance(inst, CSPInstance):
            k = inst.k
            total += float(m[:k, :k][inst.allowed[e]].sum())
        else:
            raise TypeError(f"unsupported instance {type(inst).__name__}")
    return total / g.m


# --------------------------------------------------------------- diagnostics


def moment_matrix(pd: PseudoDistribution) -> np.ndarray:
    n, q = pd.n, pd.alphabet.size
    dim = n * q + 1
    m = np.zeros((dim, dim))
    m[0, 0] = 1.0
    for i in range(n):
        p = np.asarray(pd.marginal((i,)), dtype=np.float64)
        sl = slice(1 + i * q, 1 + (i + 1) * q)
        m[0, sl] = m[sl, 0] = p
        m[sl, sl] = np.diag(p)
        for j in range(i + 1, n):
            pij = np.asarray(pd.marginal((i, j)), dtype=np.float64)
            sj = slice(1 + j * q, 1 + (j + 1) * q)
            m[sl, sj] = pij
            m[sj, sl] = pij.T
    return m


def psd_residual(pd: PseudoDistribution) -> float:
    """How far the second-moment matrix is from PSD (0 when it is PSD)."""
    lo = float(np.linalg.eigvalsh(moment_matrix(pd)).min())
    return max(0.0, -lo)


def psd_repair(pd: PseudoDistribution, rounds: int = 200, tol: float = 1e-9) -> tuple[PseudoDistribution, list[float]]:
    """Alternate between the PSD cone and the consistent, normalized locals.

    Works on the full pair moment matrix, so it is meant for small ``n``.
    Returns the repaired distribution and the residual after each round.
    """
    n, q = pd.n, pd.alphabet.size
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=np.int64).reshape(-1, 2)
    lay = _Layout(n, q, pairs)
    rows = _Rows()
    _base_rows(lay, rows)
    a, _, rhs = rows.matrix(lay.nv)
    a = a.toarray()
    pinv = np.linalg.pinv(a)
    x = np.empty(lay.nv)
    for i in range(n):
        x[lay.single(i, np.arange(q))] = pd.marginal((i,))
    for t, (i, j) in enumerate(pairs):
        x[lay.base + t * q * q: lay.base + (t + 1) * q * q] = np.asarray(pd.marginal((i, j))).ravel()
    history = []

    def to_pd(vec):
        locs = {(i,): vec[i * q:(i + 1) * q] for i in range(n)}
        for t, (i, j) in enumerate(pairs):
            locs[(int(i), int(j))] = vec[lay.base + t * q * q: lay.base + (t + 1) * q * q].reshape(q, q)
        return PseudoDistribution(2, n, pd.alphabet, locs, tol=1.0)

    for _ in range(rounds):
        cur = to_pd(np.clip(x, 0, None))
        res = psd_residual(cur)
        history.append(res)
        if res <= tol:
            break
        m = moment_matrix(cur)
        w, v = np.linalg.eigh(m)
        m = (v * np.clip(w, 0, None)) @ v.T
        for i in range(n):
            sl = slice(1 + i * q, 1 + (i + 1) * q)
            x[lay.single(i, np.arange(q))] = 0.5 * (m[0, sl] + np.diag(m[sl, sl]))
        for t, (i, j) in enumerate(pairs):
            sl = slice(1 + i * q, 1 + (i + 1) * q)
            sj = slice(1 + j * q, 1 + (j + 1) * q)
            x[lay.base + t * q * q: lay.base + (t + 1) * q * q] = m[sl, sj].ravel()
        x = np.clip(x - pinv @ (a @ x - rhs), 0, None)
    return to_pd(np.clip(x, 0, None)), history
