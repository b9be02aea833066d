"""Spectral decomposition into induced expanders.

RankBisection, FindLowRankSet, LowRankDecomp and FindLowThresh, together
with partial vertex cover and the parameter schedule. Every returned set is
checked against its contract before it leaves the function.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .graph import Graph, VertexSet, boundary_weight, induced_subgraph, internal_weight, _as_members
from .spectral import cheeger_sweep, full_spectrum, laplacian_eigenvalue, threshold_rank_report


class DecompError(RuntimeError):
    pass


class ContractViolation(AssertionError):
    """An output failed its post-hoc check (points at a numerical bug)."""


class ScheduleWarning(UserWarning):
    pass


# ------------------------------------------------------------------ parameters


def _logk(k: float) -> float:
    return max(1.0, math.log2(k)) if k > 1 else 1.0


@dataclass(frozen=True)
class DecompParams:
    delta: float
    lambda_star: float
    cap_k: float
    eps: float
    gamma: float
    c0: float
    alpha: float
    d_guess: float = 0.0
    tol: float = 1e-9

    def __post_init__(self):
        for name in ("delta", "lambda_star", "eps", "alpha"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.cap_k < 1 or self.c0 < 1:
            raise ValueError("cap_k and c0 must be >= 1")

    @property
    def rounds(self) -> int:
        """Refinement rounds t = ceil(log2 K) + 1."""
        return int(math.ceil(math.log2(self.cap_k))) + 1 if self.cap_k > 1 else 1

    def size_floor(self, n: int) -> float:
        return self.gamma * n / (4.0 * self.cap_k**2)

    def guarantee_conditions(self) -> dict[str, bool]:
        k = self.cap_k
        eps_cap = (self.gamma**2 * self.lambda_star**2 * _logk(k) / (2**8 * k**4)) ** 2
        return {
            "eps_small": self.eps < eps_cap,
            "delta_small": self.delta <= 1.0 / (100.0 * _logk(k)),
            "gamma_large": self.gamma >= 32 * k**2 * max(self.alpha, self.c0 * self.delta),
            "gamma_below_half": self.gamma < 0.5,
        }

    @property
    def guarantee_holds(self) -> bool:
        c = self.guarantee_conditions()
        return c["eps_small"] and c["delta_small"] and c["gamma_large"]


def parameter_schedule(delta: float, cap_k: float, lambda_star: float = 0.5, warn: bool = True) -> DecompParams:
    """gamma = 32 delta^(1/10) K^2, C0 = delta^(-1/10), eps = delta^0.81, alpha = 2 delta^(1/10)."""
    gamma = 32.0 * delta**0.1 * cap_k**2
    c0 = delta**-0.1
    eps = delta**0.81
    alpha = min(2.0 * delta**0.1, 1 - 1e-12)
    p = DecompParams(delta=delta, lambda_star=lambda_star, cap_k=cap_k, eps=eps, gamma=gamma, c0=c0, alpha=alpha)
    if warn and gamma >= 0.5:
        warnings.warn(f"gamma = {gamma:.3g} >= 1/2: the size floor exceeds the graph", ScheduleWarning, stacklevel=2)
    if warn and not p.guarantee_holds:
        warnings.warn("parameters fall outside the range where the decomposition guarantee holds", ScheduleWarning, stacklevel=2)
    return p


# ------------------------------------------------------------ rank tests


def rank_at_most_one(g: Graph, eps: float, tol: float = 1e-9) -> tuple[bool, bool]:
    """(lambda_2 < 1 - eps - tol, borderline flag). Single vertices pass."""
    if g.n < 2:
        return True, False
    rep = threshold_rank_report(g, eps, tol)
    return rep.rank <= 1, rep.borderline > 0


# ----------------------------------------------------------- rank bisection


@dataclass(frozen=True)
class LargeExpander:
    s: np.ndarray
    t: np.ndarray
    steps: tuple = ()


@dataclass(frozen=True)
class BalancedCut:
    s: np.ndarray
    t: np.ndarray
    cut: float
    steps: tuple = ()


def bisection_clauses(g0: Graph, s, eps: float, tol: float = 1e-9) -> tuple[bool, bool]:
    """Evaluate both clauses of the bisection contract for the split (S, V0 - S)."""
    s = _as_members(s, g0.n)
    t = np.setdiff1d(np.arange(g0.n), s)
    n0 = g0.n
    clause_i = False
    if 4 * s.size >= 3 * n0:
        sub, _ = induced_subgraph(g0, s)
        clause_i = rank_at_most_one(sub, eps, tol)[0]
    bound = 2.0 * math.sqrt(eps) * g0.d_max * n0 + 1e-9 * max(1.0, g0.total_weight)
    clause_ii = (n0 <= 4 * t.size) and (t.size <= s.size) and (4 * s.size <= 3 * n0) and boundary_weight(g0, s) <= bound
    return clause_i, clause_ii


def rank_bisection(g0: Graph, eps: float, tol: float = 1e-9, check: bool = True):
    """Peel Cheeger cuts off ``V0`` until an expander of size >= 3|V0|/4 remains
    or the kept side drops below that size."""
    if g0.n == 0:
        raise DecompError("empty graph")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    n0 = g0.n
    s = np.arange(n0)
    steps = []
    expander = False
    while 4 * s.size >= 3 * n0:
        sub, ids = induced_subgraph(g0, s)
        ok, border = rank_at_most_one(sub, eps, tol)
        if ok:
            expander = True
            break
        sweep = cheeger_sweep(sub)
        side = ids[sweep.members.members]
        other = np.setdiff1d(ids, side)
        keep = side if side.size >= other.size else other
        steps.append({"size": int(s.size), "phi": sweep.phi, "lambda2_L": sweep.lambda2_laplacian,
                      "cut": boundary_weight(sub, sweep.members), "borderline": border})
        s = keep
    rest = np.setdiff1d(np.arange(n0), s)
    if expander:
        out = LargeExpander(s, rest, tuple(steps))
        claimed = 0
    else:
        a, b = (s, rest) if s.size >= rest.size else (rest, s)
        out = BalancedCut(a, b, boundary_weight(g0, a), tuple(steps))
        claimed = 1
    if check:
        clauses = bisection_clauses(g0, out.s, eps, tol)
        if not clauses[claimed]:
            raise ContractViolation(f"rank bisection clause {'i' if claimed == 0 else 'ii'} failed")
    return out


# -------------------------------------------------------- find low rank set


@dataclass(frozen=True)
class NotFound:
    partition: list
    trace: list


@dataclass
class _Found:
    members: np.ndarray
    trace: list


def find_low_rank_set(g: Graph, v_ell, params: DecompParams, n_total: int | None = None):
    """Refine ``V_ell`` by repeated rank bisection until some piece induces an
    expander that is large enough and has small boundary in ``G[V_ell]``.

    Returns the set (ids of ``g``) with its trace, or ``NotFound``.
    """
    n = g.n if n_total is None else n_total
    v_ell = _as_members(v_ell, g.n)
    if v_ell.size == 0:
        return NotFound([], [])
    sub, ids = induced_subgraph(g, v_ell)
    eps, tol = params.eps, params.tol
    floor = params.size_floor(n)
    waived = v_ell.size < floor
    if waived:
        floor = 0.0
    d_max = sub.d_max
    bound = 2.0 * math.sqrt(eps) * d_max * n + 1e-9 * max(1.0, sub.total_weight)
    trace = [{"round": 0, "blocks": [int(v_ell.size)], "new_cut": 0.0, "waived_floor": bool(waived),
              "d_max": d_max, "size_ref": int(v_ell.size)}]
    blocks = [np.arange(sub.n)]
    rejected = []

    def accept(local):
        if local.size < floor:
            rejected.append(("size", int(local.size)))
            return False
        if boundary_weight(sub, local) > bound:
            rejected.append(("boundary", int(local.size)))
            return False
        return True

    for rnd in range(1, params.rounds + 1):
        nxt = []
        new_cut = 0.0
        for block in blocks:
            g0, bids = induced_subgraph(sub, block)
            res = rank_bisection(g0, eps, tol)
            s_loc, t_loc = bids[res.s], bids[res.t]
            if isinstance(res, LargeExpander):
                if accept(s_loc):
                    trace.append({"round": rnd, "returned": int(s_loc.size), "rejected": rejected})
                    return _Found(ids[s_loc], trace)
                continue
            new_cut += res.cut
            for cand in (s_loc, t_loc):
                if cand.size == 0:
                    continue
                piece, _ = induced_subgraph(sub, cand)
                if rank_at_most_one(piece, eps, tol)[0] and accept(cand):
                    trace.append({"round": rnd, "returned": int(cand.size), "rejected": rejected})
                    return _Found(ids[cand], trace)
            nxt.extend([s_loc, t_loc])
        blocks = nxt
        trace.append({"round": rnd, "blocks": [int(b.size) for b in blocks], "new_cut": float(new_cut),
                      "d_max": d_max, "size_ref": int(v_ell.size), "rejected": list(rejected)})
        if not blocks:
            break
    return NotFound([ids[b] for b in blocks], trace)


def check_refinement_trace(trace: list, eps: float, n: int, tol: float = 1e-9) -> None:
    """Per-round cut growth and block-size window of the refinement."""
    for rec in trace:
        if "blocks" not in rec or rec["round"] == 0:
            continue
        i = rec["round"]
        growth_cap = math.sqrt(2.0 * (eps + tol)) * rec["d_max"] * n + 1e-9
        if rec["new_cut"] > growth_cap:
            raise ContractViolation(f"round {i}: cut growth {rec['new_cut']} exceeds {growth_cap}")
        ref = rec["size_ref"]
        for b in rec["blocks"]:
            if not (0.25**i * ref - 1e-9 <= b <= 0.75**i * ref + 1e-9):
                raise ContractViolation(f"round {i}: block size {b} outside window for |V_ell| = {ref}")


def higher_order_cheeger_gap(g: Graph, blocks: Sequence[np.ndarray], tol: float = 1e-9) -> tuple[float, float]:
    """(max expansion over blocks, lambda_K(L)/2) inside ``g`` with K = #blocks."""
    from .graph import expansion

    k = len(blocks)
    phis = []
    for b in blocks:
        try:
            phis.append(expansion(g, b))
        except ValueError:
            phis.append(float("inf"))
    return max(phis), laplacian_eigenvalue(g, k) / 2.0


# ------------------------------------------------------------ decomposition


@dataclass(frozen=True)
class SetStats:
    size: int
    lambda2_laplacian: float
    boundary: float
    internal_edges: float


@dataclass
class DecompOutput:
    sets: list[VertexSet]
    stats: list[SetStats]
    leftover: VertexSet
    trace: list
    incomplete: bool
    params: DecompParams
    universe_used: VertexSet

    @property
    def covered(self) -> np.ndarray:
        if not self.sets:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([s.members for s in self.sets]))


def set_stats(g: Graph, host, s) -> SetStats:
    """Stats of ``s`` with boundary measured inside ``G[host]``."""
    s = _as_members(s, g.n)
    host = _as_members(host, g.n)
    hg, hids = induced_subgraph(g, host)
    local = np.searchsorted(hids, s)
    sub, _ = induced_subgraph(g, s)
    lam2 = 1.0 - full_spectrum(sub)[1] if sub.n >= 2 else 1.0
    return SetStats(int(s.size), float(lam2), boundary_weight(hg, local), internal_weight(g, s))


def low_rank_decomp(g: Graph, v_prime, params: DecompParams, n_total: int | None = None) -> DecompOutput:
    """Repeatedly extract low-rank sets from ``V'`` while at least 2 gamma n vertices remain."""
    n = g.n if n_total is None else n_total
    vp = _as_members(v_prime, g.n)
    sets, stats, trace = [], [], []
    incomplete = False
    if vp.size:
        host, hids = induced_subgraph(g, vp)
        remaining = np.arange(host.n)
        while remaining.size and remaining.size >= 2 * params.gamma * n:
            res = find_low_rank_set(host, remaining, params, n_total=n)
            if isinstance(res, NotFound):
                incomplete = True
                trace.append({"found": False, "remaining": int(remaining.size), "steps": res.trace,
                              "partition": [b.tolist() for b in res.partition]})
                break
            members = np.sort(res.members)
            sets.append(VertexSet.of(hids[members], g.n))
            stats.append(set_stats(g, vp, hids[members]))
            trace.append({"found": True, "remaining": int(remaining.size), "size": int(members.size), "steps": res.trace})
            remaining = np.setdiff1d(remaining, members)
        leftover = hids[remaining]
    else:
        leftover = vp
    return DecompOutput(sets, stats, VertexSet.of(leftover, g.n), trace, incomplete, params, VertexSet.of(vp, g.n))


def check_decomposition_items(g: Graph, out: DecompOutput, d: float, boundary_const: float = 8.0) -> list[dict]:
    """Items (i)-(iv) for every set, using the run's own parameters.

    (i) boundary in G[V'] <= C K^2 sqrt(eps) d' n / gamma with C = 8 and
    d' = d_max(G[V']); (ii) size >= gamma n / (4 K^2) (the loop guard keeps
    the floor from being waived here); (iii) threshold rank <= 1;
    (iv) induced edge weight >= |S| d / 4.
    """
    p = out.params
    n = g.n
    vp = out.universe_used.members
    d_prime = induced_subgraph(g, vp)[0].d_max if vp.size else 0.0
    cap_i = boundary_const * p.cap_k**2 * math.sqrt(p.eps) * d_prime * n / p.gamma
    rows = []
    for s, st in zip(out.sets, out.stats):
        sub, _ = induced_subgraph(g, s)
        rows.append({
            "size": len(s),
            "i": st.boundary <= cap_i + 1e-9,
            "ii": len(s) >= p.size_floor(n) - 1e-9,
            "iii": rank_at_most_one(sub, p.eps, p.tol)[0],
            "iv": internal_weight(g, s) >= len(s) * d / 4.0 - 1e-9,
        })
    return rows


# ------------------------------------------------------ partial vertex cover


def _coverage(g: Graph, chosen: np.ndarray) -> float:
    inside = np.zeros(g.n, dtype=bool)
    inside[chosen] = True
    return float(g.weight[inside[g.src] | inside[g.dst]].sum())


def _prune(g: Graph, order: list[int], t: float) -> list[int]:
    """Drop vertices in reverse insertion order while coverage stays >= t."""
    keep = list(order)
    for v in reversed(order):
        trial = [u for u in keep if u != v]
        if _coverage(g, np.array(trial, dtype=np.int64)) >= t - 1e-9:
            keep = trial
    return keep


def _greedy_cover(g: Graph, t: float) -> list[int]:
    alive = np.ones(g.m, dtype=bool)
    chosen, got = [], 0.0
    while got < t - 1e-9:
        r = np.zeros(g.n)
        np.add.at(r, g.src[alive], g.weight[alive])
        np.add.at(r, g.dst[alive], g.weight[alive])
        v = int(np.argmax(r))
        chosen.append(v)
        hit = alive & ((g.src == v) | (g.dst == v))
        got += float(g.weight[hit].sum())
        alive &= ~hit
    return chosen


def _local_ratio_cover(g: Graph, t: float) -> list[int]:
    """Local ratio with homogeneous weights min(residual degree, residual target)."""
    alive = np.ones(g.m, dtype=bool)
    cost = np.ones(g.n)
    taken = np.zeros(g.n, dtype=bool)
    chosen, got = [], 0.0
    while got < t - 1e-9:
        r = np.zeros(g.n)
        np.add.at(r, g.src[alive], g.weight[alive])
        np.add.at(r, g.dst[alive], g.weight[alive])
        w = np.minimum(r, t - got)
        w[taken] = 0.0
        live = w > 1e-12
        ratio = np.full(g.n, np.inf)
        ratio[live] = cost[live] / w[live]
        step = float(ratio.min())
        cost[live] -= step * w[live]
        zero = np.flatnonzero(live & (cost <= 1e-12))
        v = int(zero[np.argmax(r[zero])])
        taken[v] = True
        chosen.append(v)
        hit = alive & ((g.src == v) | (g.dst == v))
        got += float(g.weight[hit].sum())
        alive &= ~hit
    return chosen


def partial_vertex_cover(g: Graph, t: float) -> VertexSet:
    """A small vertex set touching at least ``t`` edge weight.

    Runs local-ratio and max-degree greedy, prunes both in reverse insertion
    order, and returns the smaller cover.
    """
    if t > g.total_weight + 1e-9:
        raise DecompError(f"target {t} exceeds the total edge weight {g.total_weight}")
    if t <= 0:
        return VertexSet.of([], g.n)
    best = None
    for algo in (_local_ratio_cover, _greedy_cover):
        cand = _prune(g, algo(g, t), t)
        if best is None or len(cand) < len(best):
            best = cand
    return VertexSet.of(best, g.n)


def vertex_cover_2approx(g: Graph) -> np.ndarray:
    """Endpoints of a maximal matching."""
    used = np.zeros(g.n, dtype=bool)
    for a, b in zip(g.src, g.dst):
        if not used[a] and not used[b]:
            used[a] = used[b] = True
    return np.flatnonzero(used)


# -------------------------------------------------------------- FindLowThresh


@dataclass
class LowThreshResult:
    v_dd: VertexSet
    decomp: DecompOutput | None
    rank: int
    n_sets: int
    induced_edges: float
    d0: float | None
    accepted: bool
    candidates: list = field(default_factory=list)

    @property
    def no_accept(self) -> bool:
        return not self.accepted


def degree_grid(d_av: float, stride: float | None = None, cap: int = 64) -> list[float]:
    """1, 2, ... up to d_av (geometric steps of 1.25x beyond ``cap``)."""
    top = max(1, int(math.floor(d_av)))
    if stride is not None:
        return [float(x) for x in np.arange(1, top + 1, stride)]
    grid = list(range(1, min(top, cap) + 1))
    x = float(cap)
    while x * 1.25 <= top:
        x *= 1.25
        grid.append(int(round(x)))
    return [float(v) for v in dict.fromkeys(grid)]


def _apply_overrides(base: DecompParams, overrides) -> DecompParams:
    if overrides is None:
        return base
    if isinstance(overrides, DecompParams):
        return overrides
    names = {f.name for f in fields(DecompParams)}
    bad = set(overrides) - names
    if bad:
        raise ValueError(f"unknown parameter overrides {sorted(bad)}")
    return replace(base, **overrides)


def find_low_thresh(
    g: Graph,
    delta: float,
    overrides=None,
    *,
    cap_k: float = 1.0,
    grid: Sequence[float] | None = None,
    stride: float | None = None,
    cover_target: str = "listing",
    coverage_floor: float | None = None,
) -> LowThreshResult:
    """Search degree guesses for a large vertex set of low threshold rank.

    For each guess d0: remove a partial vertex cover, drop vertices of
    degree above c0 d0, decompose the rest, and accept the union of the
    sets if its rank is at most twice the number of sets and it covers
    enough vertices.
    """
    if g.n == 0 or g.total_weight <= 0:
        raise DecompError("no usable degree guess")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        base = _apply_overrides(parameter_schedule(delta, cap_k, warn=False), overrides)
    n = g.n
    d_av = 2.0 * g.total_weight / n
    floor = (1.0 - 2.0 * delta ** (1.0 / 11.0)) if coverage_floor is None else coverage_floor
    factor = 2.0 if cover_target == "proof" else 1.0
    guesses = list(grid) if grid is not None else degree_grid(d_av, stride)
    best = None
    candidates = []
    for d0 in guesses:
        t = max(0.0, (d_av - factor * d0 * (1.0 - delta)) * n / 2.0)
        t = min(t, g.total_weight)
        cover = partial_vertex_cover(g, t)
        if len(cover) > 2 * delta * n:
            candidates.append({"d0": d0, "skipped": True, "cover": len(cover)})
            continue
        v0 = np.setdiff1d(np.arange(n), cover.members)
        if v0.size == 0:
            continue
        g0, ids0 = induced_subgraph(g, v0)
        v_prime = ids0[g0.deg <= base.c0 * d0 + 1e-12]
        params = replace(base, d_guess=d0)
        out = low_rank_decomp(g, v_prime, params)
        covered = out.covered
        if covered.size:
            gu, _ = induced_subgraph(g, covered)
            rank = threshold_rank_report(gu, params.eps, params.tol).rank
            e_in = gu.total_weight
        else:
            rank, e_in = 0, 0.0
        ok = covered.size > 0 and rank <= 2 * len(out.sets) and covered.size >= floor * n
        cand = LowThreshResult(VertexSet.of(covered, n), out, rank, len(out.sets), e_in, d0, ok)
        candidates.append({"d0": d0, "skipped": False, "cover": len(cover), "v_prime": int(v_prime.size),
                           "covered": int(covered.size), "rank": rank, "sets": len(out.sets), "accepted": ok})
        if ok:
            cand.candidates = candidates
            return cand
        if best is None or covered.size > len(best.v_dd):
            best = cand
    if best is None:
        best = LowThreshResult(VertexSet.of([], n), None, 0, 0, 0.0, None, False)
    best.accepted = False
    best.candidates = candidates
    return best
