"""End-to-end solvers: decompose, relax, round and verify."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .decomp import DecompError, find_low_thresh
from .graph import Graph, induced_subgraph
from .pseudodist import PartialLabeling
from .relax import (ColoringProblem, CSPInstance, RelaxError, SeparatorProblem, UGInstance, build_coloring,
                    build_separator, build_strong_ug, build_subset_csp, solve)
from .round import (ColoringParams, RoundingError, SeedPolicy, Verdict, coloring_round, low_variance_round,
                    propagation_round, select_seed, verify_labeling)
from .spectral import threshold_rank


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SolveConfig:
    level: int | None = None  # default: 2 + seed budget
    seed_policy: str = "greedy-variance"
    seed_budget: int | None = None  # default: min(8, (k + 2)^2 * rank)
    rng: int = 0
    skip_decomp: bool = False
    decomp_overrides: tuple = (("eps", 0.2), ("gamma", 0.1))
    coverage_floor: float = 0.85
    cap_k: float = 1.0
    pool_size: int = 0
    var_thresh: float = 0.1
    star_thresh: float = 0.1
    solver: str = "auto"
    partition_slack: float = 0.1
    color_eps: float = 0.1
    color_gamma: float = 0.1
    color_r_cap: int = 30
    subset_pool: int = 4
    subset_r_max: int = 1
    rank_eps: float = 0.2
    extend: bool = True  # greedily re-admit deleted vertices that fit the kept labeling

    @classmethod
    def from_mapping(cls, d: dict) -> "SolveConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return replace(cls(), **d)


@dataclass
class SolveResult:
    problem: str
    n: int
    kept: np.ndarray
    labeling: PartialLabeling
    sizes: dict
    objectives: dict
    verdict: Verdict
    timings: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"problem": self.problem, "n": self.n, "kept": self.kept.tolist(), "labeling": self.labeling.to_dict(),
                "sizes": self.sizes, "objectives": self.objectives, "verdict": self.verdict.to_dict(),
                "timings": self.timings, "extra": _plain(self.extra)}

    def csv_row(self) -> dict:
        row = {"problem": self.problem, "n": self.n, "kept": int(self.kept.size), "passed": self.verdict.passed,
               "violations": len(self.verdict.violations)}
        row.update({f"obj_{k}": v for k, v in self.objectives.items()})
        row.update({f"t_{k}": round(v, 4) for k, v in self.timings.items()})
        for key in ("precision", "recall"):
            if key in self.extra:
                row[key] = self.extra[key]
        return row


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


class _Clock:
    def __init__(self):
        self.t = {}

    def stage(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        except (RelaxError, RoundingError, DecompError, ValueError) as e:
            raise StageError(name, e) from e
        finally:
            self.t[name] = self.t.get(name, 0.0) + time.perf_counter() - t0


def restrict_ug(inst: UGInstance, ids: np.ndarray) -> UGInstance:
    """The instance induced on ``ids`` (sorted), relabelled to ``0..len(ids)-1``."""
    g = inst.graph
    sub, ids = induced_subgraph(g, ids)
    pos = np.full(g.n, -1, dtype=np.int64)
    pos[ids] = np.arange(ids.size)
    keep = (pos[g.src] >= 0) & (pos[g.dst] >= 0)
    return UGInstance(sub, inst.k, inst.perms[keep])


def _lift(lab: PartialLabeling, ids: np.ndarray, n: int) -> PartialLabeling:
    labels = {int(ids[v]): a for v, a in lab.labels.items()}
    return PartialLabeling(n, labels, frozenset(set(range(n)) - set(labels)))


def _truth(extra: dict, kept: np.ndarray, v_good):
    if v_good is None:
        return
    good = set(int(v) for v in v_good)
    hit = len(good & set(kept.tolist()))
    extra["precision"] = hit / kept.size if kept.size else 1.0
    extra["recall"] = hit / len(good) if good else 1.0
    extra["kept_over_good"] = kept.size / len(good) if good else float("nan")


def _decompose(g: Graph, delta: float, cfg: SolveConfig, clock: _Clock, extra: dict):
    if cfg.skip_decomp or delta == 0:
        return np.arange(g.n), None
    try:
        res = clock.stage("decomp", find_low_thresh, g, delta, dict(cfg.decomp_overrides), cap_k=cfg.cap_k,
                          coverage_floor=cfg.coverage_floor)
    except StageError as e:
        extra["decomp_note"] = str(e)
        return np.arange(g.n), None
    extra["decomp"] = {"accepted": res.accepted, "d0": res.d0, "rank": res.rank, "sets": res.n_sets,
                       "size": len(res.v_dd)}
    if len(res.v_dd) == 0:
        extra["decomp_note"] = "decomposition kept nothing; using all vertices"
        return np.arange(g.n), None
    return res.v_dd.members, res.rank


def _fits(problem, v: int, a: int, labels: np.ndarray, inc) -> bool:
    g = problem.graph
    if isinstance(problem, UGInstance):
        out, inn = inc[v]
        lo = labels[g.dst[out]]
        li = labels[g.src[inn]]
        ok_out = (lo < 0) | (problem.perms[out, a] == lo)
        ok_in = (li < 0) | (problem.perms[inn, np.maximum(li, 0)] == a)
        return bool(ok_out.all() and ok_in.all())
    nb = g.neighbors(v)
    nb = nb[labels[nb] >= 0]
    if isinstance(problem, SeparatorProblem):
        return bool((labels[nb] == a).all())
    return bool((labels[nb] != a).all())


def extend_labeling(problem, lab: PartialLabeling, n_labels: int) -> tuple[PartialLabeling, int]:
    """Re-admit deleted vertices, lowest degree first, under the first label consistent with kept neighbours.

    The kept set only grows and stays valid. Separator sides are filled
    smaller side first and never beyond the balance cap. Returns the new
    labeling and the number re-admitted.
    """
    g = problem.graph
    labels = np.full(g.n, -1, dtype=np.int64)
    for v, a in lab.labels.items():
        labels[v] = a
    inc = {v: (np.flatnonzero(g.src == v), np.flatnonzero(g.dst == v)) for v in np.flatnonzero(labels < 0)}
    cap = g.n
    if isinstance(problem, SeparatorProblem):
        cap = int(np.floor((max(problem.gamma, 1 - problem.gamma) + problem.slack) * g.n))
    count = np.bincount(labels[labels >= 0], minlength=n_labels)
    added = 0
    changed = True
    while changed:
        changed = False
        for v in sorted(np.flatnonzero(labels < 0).tolist(), key=lambda v: (g.deg[v], v)):
            order = np.argsort(count, kind="stable") if isinstance(problem, SeparatorProblem) else range(n_labels)
            for a in order:
                a = int(a)
                if count[a] < cap and _fits(problem, v, a, labels, inc):
                    count[a] += 1
                    labels[v] = a
                    added += 1
                    changed = True
                    break
    kept = np.flatnonzero(labels >= 0)
    out = PartialLabeling(g.n, {int(v): int(labels[v]) for v in kept}, frozenset(np.flatnonzero(labels < 0).tolist()))
    return out, added


def _maybe_extend(problem, lab, n_labels, cfg, clock, extra):
    extra["kept_rounded"] = len(lab.labels)
    if not cfg.extend:
        return lab
    lab, added = clock.stage("extend", extend_labeling, problem, lab, n_labels)
    extra["readmitted"] = added
    return lab


def _check_delta(delta: float) -> None:
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")


def _budget(cfg: SolveConfig, k: int, rank: int) -> int:
    if cfg.seed_budget is not None:
        return cfg.seed_budget
    return int(min(8, (k + 2) ** 2 * max(rank, 1)))


def _rounded_ug(sub_inst, prog_builder, delta, cfg, clock, rank, k):
    budget = _budget(cfg, k, rank)
    level = cfg.level if cfg.level is not None else 2 + budget
    prog = clock.stage("build", prog_builder, level)
    sol = clock.stage("relax", solve, prog, cfg.solver)
    seed = clock.stage("seed", select_seed, sol, SeedPolicy(cfg.seed_policy, budget, cfg.rng, on_exhaust="stop"))
    rep = clock.stage("round", low_variance_round, sub_inst, seed.solution, None, cfg.var_thresh, cfg.star_thresh)
    info = {"level": level, "budget": budget, "seed": list(seed.conditioning.seed),
            "seed_labels": list(seed.conditioning.assignment), "variance_estimated": seed.estimated,
            "variance_realized": seed.realized, "retries": seed.retries, "resolves": seed.resolves,
            "solver": sol.stats, "flags": rep.flags + (["seed-exhausted"] if seed.exhausted else [])}
    return sol, seed, rep, info


def solve_strong_ug(inst: UGInstance, delta: float, config: SolveConfig = SolveConfig(), v_good=None) -> SolveResult:
    """Largest-possible vertex set whose induced constraints are all satisfied, with a labeling."""
    _check_delta(delta)
    clock = _Clock()
    g = inst.graph
    extra: dict = {}
    ids, rank = _decompose(g, delta, config, clock, extra)
    sub = restrict_ug(inst, ids)
    if rank is None:
        rank = threshold_rank(sub.graph, config.rank_eps) if sub.graph.m else 1
    sol, seed, rep, info = _rounded_ug(
        sub, lambda lev: build_strong_ug(sub, delta, lev, pool_size=config.pool_size, rng=config.rng),
        delta, config, clock, rank, inst.k)
    extra.update(info)
    lab = _maybe_extend(inst, _lift(rep.labeling, ids, g.n), inst.k, config, clock, extra)
    verdict = clock.stage("verify", verify_labeling, inst, lab)
    kept = lab.domain
    _truth(extra, kept, v_good)
    sizes = {"n": g.n, "v_dd": int(ids.size), "kept": int(kept.size)}
    objectives = {"relaxation": sol.value, "seeded": seed.solution.value if hasattr(seed.solution, "value") else None,
                  "kept_violations": len(verdict.violations)}
    return SolveResult("ug", g.n, kept, lab, sizes, objectives, verdict, clock.t, extra)


def oct_instance(g: Graph) -> UGInstance:
    """Two labels with the swap bijection on every edge."""
    return UGInstance(g, 2, np.tile(np.array([1, 0]), (g.m, 1)))


def is_bipartite_on(g: Graph, lab: PartialLabeling) -> bool:
    return verify_labeling(ColoringProblem(g), lab).passed


def solve_oct(g: Graph, delta: float, config: SolveConfig = SolveConfig(), v_good=None) -> SolveResult:
    """Delete few vertices so that the rest induces a bipartite graph."""
    res = solve_strong_ug(oct_instance(g), delta, config, v_good)
    res.problem = "oct"
    res.extra["bipartite"] = is_bipartite_on(g, res.labeling)
    if res.verdict.passed and not res.extra["bipartite"]:
        raise StageError("verify", RoundingError("kept set is not bipartite"))
    return res


def solve_separator(g: Graph, delta: float, gamma_balance: float, config: SolveConfig = SolveConfig(),
                    v_good=None) -> SolveResult:
    """Delete a small vertex set ``S`` and split the rest into sides with no edge between them."""
    _check_delta(delta)
    clock = _Clock()
    extra: dict = {}
    ids, rank = _decompose(g, delta, config, clock, extra)
    sub, ids = induced_subgraph(g, ids)
    if rank is None:
        rank = threshold_rank(sub, config.rank_eps) if sub.m else 1
    prob = SeparatorProblem(sub, gamma_balance, config.partition_slack)
    sol, seed, rep, info = _rounded_ug(
        prob, lambda lev: build_separator(sub, delta, gamma_balance, lev, config.partition_slack,
                                          pool_size=config.pool_size, rng=config.rng),
        delta, config, clock, rank, 2)
    extra.update(info)
    full = SeparatorProblem(g, gamma_balance, config.partition_slack)
    lab = _maybe_extend(full, _lift(rep.labeling, ids, g.n), 2, config, clock, extra)
    verdict = clock.stage("verify", verify_labeling, full, lab)
    kept = lab.domain
    a_side = sum(1 for a in lab.labels.values() if a == 0)
    b_side = len(lab.labels) - a_side
    crossing = len(verdict.violations)
    extra.update({"side_a": a_side, "side_b": b_side, "crossing": crossing,
                  "balance_deviation": abs(min(a_side, b_side) / g.n - min(gamma_balance, 1 - gamma_balance))})
    _truth(extra, kept, v_good)
    sizes = {"n": g.n, "v_dd": int(ids.size), "kept": int(kept.size), "deleted": g.n - int(kept.size)}
    return SolveResult("separator", g.n, kept, lab, sizes, {"relaxation": sol.value, "crossing": crossing},
                       verdict, clock.t, extra)


def solve_partial_coloring(g: Graph, delta: float, config: SolveConfig = SolveConfig(), v_good=None) -> SolveResult:
    """Properly 4-color a large vertex set of a graph that is 3-colorable after a few deletions."""
    _check_delta(delta)
    clock = _Clock()
    level = config.level if config.level is not None else 3
    prog = clock.stage("build", build_coloring, g, delta, level, pool_size=config.pool_size, rng=config.rng)
    sol = clock.stage("relax", solve, prog, config.solver)
    params = ColoringParams(config.color_eps, config.color_gamma, delta, config.color_r_cap, rng=config.rng)
    lab, rep = clock.stage("round", coloring_round, g, sol, params)
    extra: dict = {}
    lab = _maybe_extend(ColoringProblem(g), lab, 4, config, clock, extra)
    verdict = clock.stage("verify", verify_labeling, ColoringProblem(g), lab)
    kept = lab.domain
    extra |= {"color4": rep.extra["color4"], "iterations": len(rep.extra["history"]), "flags": rep.flags,
             "resolves": rep.extra["resolves"], "history": rep.extra["history"], "level": level}
    _truth(extra, kept, v_good)
    used = sorted(set(lab.labels.values()))
    sizes = {"n": g.n, "kept": int(kept.size), "deleted": g.n - int(kept.size), "colors_used": len(used)}
    return SolveResult("coloring", g.n, kept, lab, sizes, {"relaxation": sol.value}, verdict, clock.t, extra)


def solve_subset_csp(inst: CSPInstance, eps_size: float, config: SolveConfig = SolveConfig(), v_good=None,
                     trials: int = 1) -> SolveResult:
    """Pick about ``eps n`` vertices and label them to satisfy many induced constraints.

    With ``trials > 1`` the rounding is repeated and the best trial (most
    satisfied edges) is returned; all trial sizes are reported.
    """
    if not 0 < eps_size <= 1:
        raise ValueError("eps_size must lie in (0, 1]")
    clock = _Clock()
    g = inst.graph
    level = config.level if config.level is not None else 2
    prog = clock.stage("build", build_subset_csp, inst, eps_size, max(2, level), pool_size=config.subset_pool,
                       rng=config.rng)
    sol = clock.stage("relax", solve, prog, config.solver)
    rng = np.random.default_rng(config.rng)
    best = None
    sizes_seen, sat_seen = [], []
    for _ in range(trials):
        lab, stats = clock.stage("round", propagation_round, inst, sol, config.subset_r_max, rng)
        sizes_seen.append(stats["kept"])
        sat_seen.append(stats["satisfied_over_all_edges"])
        if best is None or stats["satisfied_over_all_edges"] > best[1]["satisfied_over_all_edges"]:
            best = (lab, stats)
    lab, stats = best
    verdict = clock.stage("verify", verify_labeling, inst, lab)
    kept = lab.domain
    target = eps_size * g.n
    extra = {"trial_sizes": sizes_seen, "trial_satisfied": sat_seen, "target": target,
             "within_band": [abs(s - target) <= 0.2 * target for s in sizes_seen], **stats}
    _truth(extra, kept, v_good)
    sizes = {"n": g.n, "kept": int(kept.size), "target": target}
    objectives = {"relaxation": sol.value, "satisfied_fraction": stats["satisfied_over_all_edges"]}
    return SolveResult("subset-csp", g.n, kept, lab, sizes, objectives, verdict, clock.t, extra)
