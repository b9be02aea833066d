"""Weighted undirected graphs with optional self-loops."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


def _as_members(s, n: int | None = None) -> np.ndarray:
    if isinstance(s, VertexSet):
        return s.members
    arr = np.unique(np.asarray(list(s) if not isinstance(s, np.ndarray) else s, dtype=np.int64))
    if n is not None and arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise GraphError("vertex id out of range")
    return arr


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Sorted duplicate-free vertex ids drawn from ``range(universe)``."""

    members: np.ndarray
    universe: int

    @classmethod
    def of(cls, members: Iterable[int], universe: int) -> "VertexSet":
        arr = _as_members(members, universe)
        arr.setflags(write=False)
        return cls(arr, int(universe))

    @classmethod
    def full(cls, universe: int) -> "VertexSet":
        return cls.of(range(universe), universe)

    def __len__(self) -> int:
        return int(self.members.size)

    def __iter__(self):
        return iter(int(v) for v in self.members)

    def __contains__(self, v) -> bool:
        i = np.searchsorted(self.members, v)
        return bool(i < self.members.size and self.members[i] == v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VertexSet):
            return NotImplemented
        return self.universe == other.universe and np.array_equal(self.members, other.members)

    def __hash__(self) -> int:
        return hash((self.universe, self.members.tobytes()))

    def __repr__(self) -> str:
        return f"VertexSet({self.members.tolist()}, universe={self.universe})"

    def complement(self) -> "VertexSet":
        return VertexSet.of(np.setdiff1d(np.arange(self.universe), self.members), self.universe)

    def union(self, other) -> "VertexSet":
        return VertexSet.of(np.union1d(self.members, _as_members(other)), self.universe)

    def minus(self, other) -> "VertexSet":
        return VertexSet.of(np.setdiff1d(self.members, _as_members(other)), self.universe)

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.universe, dtype=bool)
        out[self.members] = True
        return out


@dataclass(frozen=True)
class Partition:
    """Pairwise disjoint blocks; the union need not cover the universe."""

    blocks: tuple[VertexSet, ...]
    universe: int

    def __post_init__(self):
        seen = np.zeros(self.universe, dtype=bool)
        for b in self.blocks:
            if b.universe != self.universe:
                raise GraphError("block universe mismatch")
            if seen[b.members].any():
                raise GraphError("partition blocks overlap")
            seen[b.members] = True

    @property
    def covered(self) -> int:
        return sum(len(b) for b in self.blocks)

    def coverage(self) -> float:
        return self.covered / self.universe if self.universe else 1.0


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph. Edge ``e`` joins ``src[e] < dst[e]``."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    loops: np.ndarray
    deg: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n: int, edges: Iterable[Sequence] = (), loops=None) -> "Graph":
        """Build from ``(u, v)`` or ``(u, v, w)`` records, merging parallels.

        Records with ``u == v`` are folded into the loop weights.
        """
        n = int(n)
        if n < 0:
            raise GraphError("negative vertex count")
        rows = [tuple(e) for e in edges]
        loop_w = np.zeros(n, dtype=np.float64)
        if loops is not None:
            if isinstance(loops, np.ndarray) and loops.ndim == 1 and loops.shape[0] == n:
                loop_w += loops.astype(np.float64)
            else:
                for v, w in loops:
                    loop_w[int(v)] += _check_weight(w)
        if (loop_w < 0).any() or not np.isfinite(loop_w).all():
            raise GraphError("loop weights must be finite and nonnegative")
        us, vs, ws = [], [], []
        for r in rows:
            u, v = int(r[0]), int(r[1])
            w = _check_weight(r[2]) if len(r) > 2 else 1.0
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range")
            if w == 0:
                continue
            if u == v:
                loop_w[u] += w
                continue
            us.append(min(u, v))
            vs.append(max(u, v))
            ws.append(w)
        return cls._from_arrays(n, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64),
                                np.array(ws, dtype=np.float64), loop_w)

    @classmethod
    def _from_arrays(cls, n, u, v, w, loops) -> "Graph":
        if u.size:
            key = u * n + v
            uniq, inv = np.unique(key, return_inverse=True)
            wsum = np.zeros(uniq.size)
            np.add.at(wsum, inv, w)
            u, v, w = uniq // n, uniq % n, wsum
        deg = loops.astype(np.float64).copy()
        np.add.at(deg, u, w)
        np.add.at(deg, v, w)
        for a in (u, v, w, loops, deg):
            a.setflags(write=False)
        return cls(n, u, v, w, loops, deg)

    # --- basic views -------------------------------------------------------

    @property
    def m(self) -> int:
        return int(self.src.size)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.src, self.dst, self.weight)]

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @property
    def d_max(self) -> float:
        return float(self.deg.max()) if self.n else 0.0

    @property
    def d_avg(self) -> float:
        return float(self.deg.mean()) if self.n else 0.0

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric adjacency with loop weights on the diagonal."""
        rows = np.concatenate([self.src, self.dst, np.arange(self.n)])
        cols = np.concatenate([self.dst, self.src, np.arange(self.n)])
        vals = np.concatenate([self.weight, self.weight, self.loops])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def inv_sqrt_deg(self) -> np.ndarray:
        out = np.zeros(self.n)
        pos = self.deg > 0
        out[pos] = 1.0 / np.sqrt(self.deg[pos])
        return out

    def normalized_adjacency(self, dense: bool = False):
        """``D^{-1/2} A D^{-1/2}``; rows and columns of degree-0 vertices are zero."""
        s = sp.diags(self.inv_sqrt_deg)
        a = (s @ self.adjacency @ s).tocsr()
        return a.toarray() if dense else a

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        row = a.indices[a.indptr[v]: a.indptr[v + 1]]
        return row[row != v]

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): e for e, (a, b) in enumerate(zip(self.src, self.dst))}

    def volume(self, s) -> float:
        return float(self.deg[_as_members(s, self.n)].sum())

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m}, loops={int((self.loops > 0).sum())})"


def _check_weight(w) -> float:
    if isinstance(w, str):
        w = Fraction(w)
    x = float(w)
    if math.isnan(x) or math.isinf(x) or x < 0:
        raise GraphError(f"invalid weight {w!r}")
    return x


# ------------------------------------------------------------------ operations


def induced_subgraph(g: Graph, s) -> tuple[Graph, np.ndarray]:
    """``G[S]`` relabelled to ``0..|S|-1`` plus the new-to-old id map."""
    members = _as_members(s, g.n)
    if members.size == 0:
        raise GraphError("empty induced set")
    pos = np.full(g.n, -1, dtype=np.int64)
    pos[members] = np.arange(members.size)
    keep = (pos[g.src] >= 0) & (pos[g.dst] >= 0)
    sub = Graph._from_arrays(
        int(members.size), pos[g.src[keep]], pos[g.dst[keep]], g.weight[keep].copy(), g.loops[members].copy()
    )
    members = members.copy()
    members.setflags(write=False)
    return sub, members


def edge_boundary(g: Graph, s) -> tuple[float, list[tuple[int, int, float]]]:
    inside = np.zeros(g.n, dtype=bool)
    inside[_as_members(s, g.n)] = True
    cross = inside[g.src] != inside[g.dst]
    edges = [(int(a), int(b), float(c)) for a, b, c in zip(g.src[cross], g.dst[cross], g.weight[cross])]
    return float(g.weight[cross].sum()), edges


def boundary_weight(g: Graph, s) -> float:
    inside = np.zeros(g.n, dtype=bool)
    inside[_as_members(s, g.n)] = True
    return float(g.weight[inside[g.src] != inside[g.dst]].sum())


def internal_weight(g: Graph, s) -> float:
    inside = np.zeros(g.n, dtype=bool)
    inside[_as_members(s, g.n)] = True
    return float(g.weight[inside[g.src] & inside[g.dst]].sum())


def expansion(g: Graph, s) -> float:
    members = _as_members(s, g.n)
    vol_s = float(g.deg[members].sum())
    vol_rest = float(g.deg.sum()) - vol_s
    small = min(vol_s, vol_rest)
    if small <= 0:
        raise GraphError("zero-volume side")
    return boundary_weight(g, members) / small


def with_self_loops(g: Graph, f: Iterable[Sequence]) -> Graph:
    """Remove the edges in ``f`` and put their weight on both endpoints' loops."""
    index = g.edge_index()
    drop = np.zeros(g.m, dtype=bool)
    for rec in f:
        u, v = int(rec[0]), int(rec[1])
        key = (min(u, v), max(u, v))
        if key not in index:
            raise GraphError(f"({u}, {v}) is not an edge")
        drop[index[key]] = True
    loops = g.loops.copy()
    np.add.at(loops, g.src[drop], g.weight[drop])
    np.add.at(loops, g.dst[drop], g.weight[drop])
    keep = ~drop
    return Graph._from_arrays(g.n, g.src[keep].copy(), g.dst[keep].copy(), g.weight[keep].copy(), loops)


def connected_components(g: Graph) -> list[np.ndarray]:
    from scipy.sparse.csgraph import connected_components as cc

    if g.n == 0:
        return []
    _, labels = cc(g.adjacency, directed=False)
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    return [np.sort(c) for c in np.split(order, cuts)]


def disjoint_union(*graphs: Graph) -> Graph:
    us, vs, ws, ls = [], [], [], []
    off = 0
    for h in graphs:
        us.append(h.src + off)
        vs.append(h.dst + off)
        ws.append(h.weight)
        ls.append(h.loops)
        off += h.n
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    return Graph._from_arrays(off, cat(us, np.int64), cat(vs, np.int64), cat(ws, np.float64), cat(ls, np.float64))


# ------------------------------------------------------------ small families


def complete_graph(n: int) -> Graph:
    return Graph.build(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def cycle_graph(n: int) -> Graph:
    return Graph.build(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return Graph.build(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    return Graph.build(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def erdos_renyi(n: int, p: float, rng) -> Graph:
    rng = np.random.default_rng(rng)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph.build(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def random_regular(n: int, d: int, rng, max_tries: int = 100) -> Graph:
    """Configuration-model pairing made simple by degree-preserving switches.

    Loops and repeated pairs left by the random pairing are removed by
    swapping endpoints with uniformly chosen pairs; the degree sequence is
    untouched, so the result is exactly d-regular.
    """
    if d >= n or (n * d) % 2:
        raise GraphError("need d < n and n*d even")
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        stubs = rng.permutation(np.repeat(np.arange(n), d))
        pairs = stubs.reshape(-1, 2)
        if _repair_pairs(pairs, n, rng):
            u, v = np.minimum(pairs[:, 0], pairs[:, 1]), np.maximum(pairs[:, 0], pairs[:, 1])
            return Graph.build(n, zip(u.tolist(), v.tolist()))
    raise GraphError("could not sample a simple regular graph")


def _repair_pairs(pairs: np.ndarray, n: int, rng, max_switches: int = 100000) -> bool:
    from collections import Counter

    key = lambda a, b: (a, b) if a < b else (b, a)  # noqa: E731
    count = Counter(key(int(a), int(b)) for a, b in pairs)
    m = pairs.shape[0]

    def bad(i):
        a, b = int(pairs[i, 0]), int(pairs[i, 1])
        return a == b or count[key(a, b)] > 1

    queue = [i for i in range(m) if bad(i)]
    switches = 0
    while queue:
        i = queue.pop()
        if not bad(i):
            continue
        switches += 1
        if switches > max_switches:
            return False
        j = int(rng.integers(m))
        if j == i:
            queue.append(i)
            continue
        a, b = int(pairs[i, 0]), int(pairs[i, 1])
        c, e = int(pairs[j, 0]), int(pairs[j, 1])
        if rng.random() < 0.5:
            c, e = e, c
        new1, new2 = key(a, c), key(b, e)
        if a == c or b == e or count[new1] > 0 or count[new2] > 0 or new1 == new2:
            queue.append(i)
            continue
        count[key(a, b)] -= 1
        count[key(c, e)] -= 1
        count[new1] += 1
        count[new2] += 1
        pairs[i] = (a, c)
        pairs[j] = (b, e)
    return all(not bad(i) for i in range(m))


# ------------------------------------------------------------------------ JSON


def graph_to_dict(g: Graph) -> dict:
    return {
        "n": g.n,
        "edges": [[int(a), int(b), float(c)] for a, b, c in zip(g.src, g.dst, g.weight)],
        "loops": [[int(v), float(g.loops[v])] for v in np.flatnonzero(g.loops)],
    }


def graph_from_dict(d: dict) -> Graph:
    try:
        n = int(d["n"])
        edges = d.get("edges", [])
        loops = d.get("loops", [])
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph record: {exc}") from exc
    for rec in edges:
        if len(rec) != 3:
            raise GraphError("edge records must be [u, v, w]")
    return Graph.build(n, edges, [tuple(r) for r in loops])


def graph_to_json(g: Graph) -> str:
    return json.dumps(graph_to_dict(g))


def graph_from_json(text: str) -> Graph:
    return graph_from_dict(json.loads(text))
