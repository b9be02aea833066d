"""Seed selection, rounding of relaxation solutions, and labeling checks."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .decomp import vertex_cover_2approx
from .graph import Graph, induced_subgraph
from .pseudodist import (DEL, NULL_EVENT, STAR, Conditioning, PartialLabeling, PseudoDistError,
                         PseudoDistribution)
from .relax import (ColoringProblem, CSPInstance, Infeasible, RelaxationSolution, SeparatorProblem, UGInstance,
                    solve)


class RoundingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeedPolicy:
    strategy: str = "greedy-variance"  # or "random-uniform"
    budget: int = 4
    rng: int = 0
    retry_cap: int = 20
    tol: float = 1e-9
    on_exhaust: str = "raise"  # or "stop": keep the seed found so far

    def __post_init__(self):
        if self.strategy not in ("greedy-variance", "random-uniform"):
            raise ValueError(f"unknown seed strategy {self.strategy!r}")
        if self.on_exhaust not in ("raise", "stop"):
            raise ValueError(f"unknown on_exhaust {self.on_exhaust!r}")
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")


# ------------------------------------------------------------- conditioning


class _State:
    """A relaxation solution together with the seed it is conditioned on.

    Solutions that carry their program are conditioned by pinning the seed
    labels and re-solving, so every constraint holds again given the seed.
    A bare pseudo-distribution is conditioned by Bayes' rule on its stored
    locals.
    """

    def __init__(self, sol, c: Conditioning | None = None, resolve_tol: float = 1e-7):
        self.tol = resolve_tol
        self.resolves = 0
        if isinstance(sol, RelaxationSolution):
            self.sol = sol
            self.base = None
            self.pd = sol.pd
            self.c = Conditioning(tuple(sol.program.pins), tuple(sol.program.pins.values()))
        else:
            self.sol = None
            self.base = sol
            self.pd = sol
            self.c = Conditioning()
        if c is not None:
            for v, a in zip(c.seed, c.assignment):
                if v in self.c.seed:
                    continue
                if not self.pin(v, a):
                    raise RoundingError("conditioning on null event")

    @property
    def n(self) -> int:
        return self.pd.n

    @property
    def q(self) -> int:
        return self.pd.alphabet.size

    def pin(self, v: int, a: int) -> bool:
        """Condition on ``X_v = a``; False when that event has no mass."""
        if self.sol is not None:
            prog = self.sol.program.pinned({v: a})
            try:
                new = solve(prog, tol=self.tol, diagnose=False)
            except Infeasible:
                return False
            finally:
                self.resolves += 1
            self.sol = new
            self.pd = new.pd
            self.c = self.c.extend(v, a)
            return True
        c = self.c.extend(v, a)
        try:
            p = self.base.probability(c)
        except PseudoDistError:
            return False
        if not p > NULL_EVENT:
            return False
        self.pd = self.base.condition(c)
        self.c = c
        return True

    def singles(self) -> np.ndarray:
        if self.sol is not None:
            n, q = self.n, self.q
            return self.sol.x[: n * q].reshape(n, q)
        return np.array([np.asarray(self.pd.marginal((i,)), dtype=np.float64) for i in range(self.n)])

    def pair_tables(self):
        """``(pairs, tables)`` for every pair local the state can read."""
        if self.sol is not None:
            prog = self.sol.program
            n, q, p = self.n, self.q, prog.pairs.shape[0]
            return prog.pairs, self.sol.x[n * q: n * q + p * q * q].reshape(p, q, q)
        keys = sorted({t for t in self._candidate_pairs()})
        out_p, out_t = [], []
        for t in keys:
            try:
                m = np.asarray(self.pd.marginal(t), dtype=np.float64)
            except PseudoDistError:
                continue
            out_p.append(t)
            out_t.append(m)
        if not out_p:
            return np.zeros((0, 2), dtype=np.int64), np.zeros((0, self.q, self.q))
        return np.array(out_p, dtype=np.int64), np.array(out_t)

    def _candidate_pairs(self):
        seed = set(self.c.seed)
        for t in self.base.stored:
            free = [v for v in t if v not in seed]
            for i in range(len(free)):
                for j in range(i + 1, len(free)):
                    yield (free[i], free[j])


def _gini(p):
    return 1.0 - (p * p).sum(axis=-1)


def _average_variance(singles, free):
    if not free.any():
        return 0.0
    return float(_gini(singles[free]).mean())


def _drop_estimates(state: _State, free: np.ndarray) -> np.ndarray:
    """Expected fall of the mean variance over free vertices after seeding each vertex.

    Uses Bayes' rule on every readable pair local; vertices with no pair
    local shared with the candidate keep their variance.
    """
    singles = state.singles()
    var = _gini(singles)
    nf = int(free.sum())
    total = var[free].sum()
    # sum over free j != s of the expected conditional variance given X_s
    exp_var = np.tile(total, state.n) - var  # start from "unchanged", excluding s itself
    pairs, tabs = state.pair_tables()
    for side in (0, 1):
        if not pairs.shape[0]:
            break
        s = pairs[:, side]
        j = pairs[:, 1 - side]
        m = tabs if side == 0 else np.transpose(tabs, (0, 2, 1))  # rows indexed by the label of s
        ok = free[s] & free[j]
        ps = m.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond_gini = np.where(ps > NULL_EVENT, ps - (m * m).sum(axis=2) / np.where(ps > NULL_EVENT, ps, 1.0), 0.0)
        e_var = cond_gini.sum(axis=1)
        delta = np.where(ok, var[j] - e_var, 0.0)
        np.add.at(exp_var, s, -delta)
    cur = total / nf if nf else 0.0
    after = np.where(nf > 1, exp_var / max(nf - 1, 1), 0.0)
    out = cur - after
    out[~free] = -np.inf
    return out


@dataclass
class SeedResult:
    conditioning: Conditioning
    estimated: list[float]
    realized: list[float]
    retries: int
    resolves: int
    state: object = field(repr=False, default=None)
    exhausted: bool = False

    @property
    def solution(self):
        return self.state.sol if self.state.sol is not None else self.state.pd


def select_seed(sol, policy: SeedPolicy) -> SeedResult:
    """Grow a seed one vertex at a time, sampling each seed label from the current conditional.

    Greedy mode takes the vertex with the largest estimated fall in mean
    variance over the unseeded vertices; random mode takes a uniform
    unseeded vertex. A label whose conditioning has no mass is excluded and
    the label is redrawn, up to ``policy.retry_cap`` times in total.
    """
    rng = np.random.default_rng(policy.rng)
    state = _State(sol)
    n = state.n
    free = np.ones(n, dtype=bool)
    free[list(state.c.seed)] = False
    singles = state.singles()
    traj = [_average_variance(singles, free)]
    est = [traj[0]]
    retries = 0
    banned: dict[int, set[int]] = {}
    start = len(state.c)
    exhausted = False
    while len(state.c) - start < policy.budget and free.any() and not exhausted:
        if traj[-1] <= policy.tol:
            break
        if policy.strategy == "greedy-variance":
            drops = _drop_estimates(state, free)
            v = int(np.argmax(drops))
            if drops[v] < -policy.tol:
                raise RoundingError(f"negative variance-drop estimate {drops[v]:.3g}")
            predicted = traj[-1] - max(float(drops[v]), 0.0)
        else:
            v = int(rng.choice(np.flatnonzero(free)))
            predicted = traj[-1]
        p = np.clip(singles[v], 0.0, None).copy()
        while True:
            for a in banned.get(v, ()):
                p[a] = 0.0
            p[p <= NULL_EVENT] = 0.0
            if p.sum() <= 0:
                free[v] = False  # no admissible label; skip this vertex
                break
            a = int(rng.choice(p.size, p=p / p.sum()))
            if state.pin(v, a):
                free[v] = False
                break
            banned.setdefault(v, set()).add(a)
            retries += 1
            if retries > policy.retry_cap:
                if policy.on_exhaust == "raise":
                    raise RoundingError("conditioning kept hitting null events")
                exhausted = True
                break
        if v not in state.c.seed:
            continue
        singles = state.singles()
        est.append(predicted)
        traj.append(_average_variance(singles, free))
    return SeedResult(state.c, est, traj, retries, state.resolves, state, exhausted)


# --------------------------------------------------------------- verification


@dataclass
class Verdict:
    passed: bool
    kind: str
    violations: list[tuple[int, int]]
    checked_edges: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "kind": self.kind, "violations": [list(e) for e in self.violations],
                "checked_edges": self.checked_edges}


def _kind(inst) -> str:
    if isinstance(inst, UGInstance):
        return "unique-games"
    if isinstance(inst, CSPInstance):
        return "csp"
    if isinstance(inst, SeparatorProblem):
        return "separator"
    if isinstance(inst, (ColoringProblem, Graph)):
        return "coloring"
    raise TypeError(f"unsupported instance {type(inst).__name__}")


def verify_labeling(inst, lab: PartialLabeling) -> Verdict:
    """Check every edge whose two endpoints are labelled.

    A bare :class:`Graph` is read as a coloring instance.
    """
    kind = _kind(inst)
    g = inst if isinstance(inst, Graph) else inst.graph
    if lab.n != g.n:
        raise ValueError("labeling and instance sizes differ")
    labels = np.full(g.n, -1, dtype=np.int64)
    for v, a in lab.labels.items():
        labels[v] = a
    both = (labels[g.src] >= 0) & (labels[g.dst] >= 0)
    e = np.flatnonzero(both)
    lu, lv = labels[g.src[e]], labels[g.dst[e]]
    if kind == "unique-games":
        if (labels >= inst.k).any():
            raise ValueError("label out of range")
        ok = inst.perms[e, lu] == lv
    elif kind == "csp":
        if (labels >= inst.k).any():
            raise ValueError("label out of range")
        ok = inst.allowed[e, lu, lv]
    elif kind == "separator":
        ok = lu == lv
    else:
        ok = lu != lv
    bad = [(int(g.src[x]), int(g.dst[x])) for x in e[~ok]]
    return Verdict(not bad, kind, bad, int(e.size))


# ------------------------------------------------------------------ reports


@dataclass
class RoundingReport:
    seed: Conditioning
    assignment: tuple
    variance: np.ndarray
    star_mass: np.ndarray
    thresholds: dict
    labeling: PartialLabeling
    verdict: Verdict
    flags: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seed": list(self.seed.seed), "assignment": [int(a) for a in self.assignment],
                "variance": [float(v) for v in self.variance], "star_mass": [float(v) for v in self.star_mass],
                "thresholds": self.thresholds, "labeling": self.labeling.to_dict(),
                "verdict": self.verdict.to_dict(), "flags": list(self.flags), "extra": _jsonable(self.extra)}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def csv_row(self) -> dict:
        return {"seed_size": len(self.seed), "kept": len(self.labeling.labels), "deleted": len(self.labeling.deleted),
                "passed": self.verdict.passed, "violations": len(self.verdict.violations), "flags": ";".join(self.flags)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def reports_to_csv(reports: Iterable[RoundingReport]) -> str:
    buf = io.StringIO()
    rows = [r.csv_row() for r in reports]
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


# ----------------------------------------------------------------- rounding


def low_variance_round(inst, sol, c: Conditioning | None = None, var_thresh: float = 0.1,
                       star_thresh: float = 0.1) -> RoundingReport:
    """Keep vertices whose conditional marginal is concentrated and not on STAR.

    Kept vertices take their most likely base label. With both thresholds at
    most 0.1 that label carries at least 0.9 of the mass, so any two kept
    neighbours put positive joint mass on their labels; the relaxation
    forbids violating pairs, hence every kept edge is satisfied. This is
    asserted on return.
    """
    state = _State(sol, c)
    pd = state.pd
    k = pd.alphabet.k
    star = pd.alphabet.index(STAR)
    p = state.singles()
    var = _gini(p)
    star_mass = p[:, star]
    keep = (var <= var_thresh) & (star_mass <= star_thresh)
    base = p[:, :k]
    sigma = np.argmax(base, axis=1)
    flags = []
    top = np.sort(base, axis=1)
    ties = keep & (k > 1) & (np.abs(top[:, -1] - top[:, -2]) <= 1e-12) if k > 1 else np.zeros(len(keep), dtype=bool)
    if ties.any():
        flags.append(f"argmax ties broken toward the lowest label at {np.flatnonzero(ties).tolist()[:10]}")
    armed = var_thresh <= 0.1 and star_thresh <= 0.1
    if armed and keep.any() and (base[keep, sigma[keep]] < 0.9 - 1e-7).any():
        raise RoundingError("kept vertex without a label of mass 0.9")
    lab = PartialLabeling(state.n, {int(v): int(sigma[v]) for v in np.flatnonzero(keep)},
                          frozenset(int(v) for v in np.flatnonzero(~keep)))
    verdict = verify_labeling(inst, lab)
    viol = state.sol.stats["max_violation"] if state.sol is not None else 0.0
    if armed and viol <= 1e-6 and not verdict.passed:
        raise RoundingError(f"rounded labeling violates {len(verdict.violations)} kept constraints")
    return RoundingReport(state.c, state.c.assignment, var, star_mass,
                          {"var": var_thresh, "star": star_thresh}, lab, verdict, flags)


def propagation_round(inst: CSPInstance, sol, r_max: int = 1, rng=None) -> tuple[PartialLabeling, dict]:
    """Sample a short seed, then label each vertex independently from its conditional marginal.

    Seeds are drawn from the pool vertices, whose pair locals with every
    other vertex are stored, and conditioning uses Bayes' rule on those
    locals. DEL-labelled vertices are deleted.
    """
    rng = np.random.default_rng(rng)
    pd = sol.pd if isinstance(sol, RelaxationSolution) else sol
    pool = list(sol.program.pool) if isinstance(sol, RelaxationSolution) else []
    dl = pd.alphabet.index(DEL)
    m = int(rng.integers(0, min(r_max, 1 if pool else 0) + 1))
    c = Conditioning()
    if m:
        s = int(rng.choice(pool))
        for _ in range(100):
            (a,) = pd.sample((s,), rng)
            if pd.probability(Conditioning((s,), (a,))) > NULL_EVENT:
                break
        c = Conditioning((s,), (a,))
    cpd = pd.condition(c) if len(c) else pd
    p = np.array([np.asarray(cpd.marginal((i,)), dtype=np.float64) for i in range(pd.n)])
    p = np.clip(p, 0.0, None)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(pd.n)
    draws = (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
    draws = np.minimum(draws, p.shape[1] - 1)
    kept = draws != dl
    lab = PartialLabeling(pd.n, {int(v): int(draws[v]) for v in np.flatnonzero(kept)},
                          frozenset(int(v) for v in np.flatnonzero(~kept)))
    g = inst.graph
    both = kept[g.src] & kept[g.dst]
    sat = inst.satisfied(np.where(kept, draws, 0))[both]
    stats = {"seed": list(c.seed), "assignment": list(c.assignment), "kept": int(kept.sum()),
             "surviving_edges": int(both.sum()),
             "satisfied_fraction": float(sat.mean()) if sat.size else 1.0,
             "satisfied_over_all_edges": float(sat.sum() / g.m) if g.m else 1.0}
    return lab, stats


@dataclass(frozen=True)
class ColoringParams:
    eps: float = 0.1
    gamma: float = 0.1
    delta: float = 0.05
    r_cap: int = 30
    star_cut: float | None = None
    rng: int = 0


def coloring_round(g: Graph, sol, params: ColoringParams = ColoringParams()) -> tuple[PartialLabeling, RoundingReport]:
    """Condition on random vertices until the undetermined vertices have a small vertex cover.

    Colors are ``0, 1, 2`` for determined vertices (most likely color with
    mass above ``1/2 + gamma``) and ``3`` for the undetermined vertices left
    after deleting the cover. Vertices with STAR mass above the cutoff are
    deleted.
    """
    rng = np.random.default_rng(params.rng)
    state = _State(sol)
    n = g.n
    star_cut = params.gamma if params.star_cut is None else params.star_cut
    iso = g.deg == 0
    history = []
    flags = []
    retries = 0
    banned: dict[int, set[int]] = {}
    for it in range(params.r_cap + 1):
        p = state.singles()
        low_star = p[:, 3] <= star_cut
        best = p[:, :3].max(axis=1)
        undet = low_star & (best <= 0.5 + params.gamma) & ~iso
        vm = np.flatnonzero(undet)
        if vm.size:
            sub, ids = induced_subgraph(g, vm)
            cover = ids[vertex_cover_2approx(sub)]
        else:
            cover = np.zeros(0, dtype=np.int64)
        history.append({"iteration": it, "undetermined": int(vm.size), "cover": int(cover.size),
                        "local_correlation": _local_corr_state(g, state, [0, 1, 2])})
        if cover.size <= params.eps / 5 * n:
            break
        if it == params.r_cap:
            flags.append("incomplete")
            break
        cand = np.array([v for v in range(n) if v not in state.c.seed and not iso[v]], dtype=np.int64)
        if cand.size == 0:
            flags.append("incomplete")
            break
        pinned = False
        while not pinned:
            v = int(rng.choice(cand))
            pv = np.clip(p[v], 0, None).copy()
            for a in banned.get(v, ()):
                pv[a] = 0.0
            pv[pv <= NULL_EVENT] = 0.0
            if pv.sum() <= 0:
                cand = cand[cand != v]
                if cand.size == 0:
                    break
                continue
            a = int(rng.choice(pv.size, p=pv / pv.sum()))
            pinned = state.pin(v, a)
            if not pinned:
                banned.setdefault(v, set()).add(a)
                retries += 1
                if retries > 10 * (params.r_cap + 1):
                    raise RoundingError("conditioning kept hitting null events")
        if not pinned:
            flags.append("incomplete")
            break
    p = state.singles()
    low_star = p[:, 3] <= star_cut
    best = p[:, :3].max(axis=1)
    color = np.argmax(p[:, :3], axis=1)
    det = low_star & ((best > 0.5 + params.gamma) | iso)
    undet = low_star & ~det
    vm = np.flatnonzero(undet)
    if vm.size:
        sub, ids = induced_subgraph(g, vm)
        cover = set(ids[vertex_cover_2approx(sub)].tolist())
    else:
        cover = set()
    labels = {int(v): int(color[v]) for v in np.flatnonzero(det)}
    fourth = [int(v) for v in vm if int(v) not in cover]
    labels.update({v: 3 for v in fourth})
    deleted = frozenset(set(range(n)) - set(labels))
    lab = PartialLabeling(n, labels, deleted)
    verdict = verify_labeling(ColoringProblem(g), lab)
    if not verdict.passed:
        raise RoundingError(f"coloring has {len(verdict.violations)} monochromatic kept edges")
    report = RoundingReport(state.c, state.c.assignment, _gini(p), p[:, 3],
                            {"gamma": params.gamma, "star": star_cut, "cover_fraction": params.eps / 5}, lab, verdict,
                            flags, {"history": history, "color4": len(fourth), "retries": retries,
                                    "resolves": state.resolves})
    return lab, report


# ------------------------------------------------------------- correlations


def _local_corr_state(g: Graph, state: _State, labels) -> float:
    if g.m == 0:
        return 0.0
    labs = np.asarray(labels)
    pairs, tabs = state.pair_tables()
    index = {(int(u), int(v)): t for t, (u, v) in enumerate(pairs)}
    total, count = 0.0, 0
    for u, v in zip(g.src.tolist(), g.dst.tolist()):
        t = index.get((u, v))
        if t is None:
            continue
        m = tabs[t]
        pu, pv = m.sum(axis=1), m.sum(axis=0)
        total += float(m[labs, labs].sum() - (pu[labs] * pv[labs]).sum())
        count += 1
    return total / count if count else float("nan")


def local_correlation(g: Graph, sol, c: Conditioning | None = None, labels=None) -> float:
    """Edge average of ``sum_{a in labels} Pr[X_i = a, X_j = a] - Pr[X_i = a] Pr[X_j = a]``."""
    state = _State(sol, c)
    if labels is None:
        labels = range(state.pd.alphabet.k)
    labs = [state.pd.alphabet.index(a) for a in labels]
    if state.sol is not None:
        return _local_corr_state(g, state, labs)
    if g.m == 0:
        return 0.0
    vals = [state.pd.pair_covariance(int(u), int(v), labs) for u, v in zip(g.src, g.dst)]
    return sum(vals) / len(vals)


def global_correlation(pd: PseudoDistribution, labels=None) -> float:
    """Average over all ordered vertex pairs of the squared covariance (needs every pair local)."""
    labs = list(range(pd.alphabet.k)) if labels is None else [pd.alphabet.index(a) for a in labels]
    n = pd.n
    total = 0
    for i in range(n):
        for j in range(n):
            total += pd.pair_covariance(i, j, labs) ** 2
    return total / (n * n)


def dense_predicate(g: Graph, eps: float, eta: float, trials: int = 200, rng=0) -> bool:
    """Empirical check that induced subgraphs without a small vertex cover keep many edges.

    Samples random vertex subsets; for each one whose 2-approximate vertex
    cover exceeds ``eps n`` it requires at least ``eta |E|`` induced edges.
    """
    rng = np.random.default_rng(rng)
    for _ in range(trials):
        s = np.flatnonzero(rng.random(g.n) < rng.random())
        if s.size == 0:
            continue
        sub, _ = induced_subgraph(g, s)
        if vertex_cover_2approx(sub).size > eps * g.n and sub.m < eta * g.m:
            return False
    return True
