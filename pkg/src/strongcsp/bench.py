"""Planted instance families, JSON persistence and the experiment sweep."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph, GraphError, disjoint_union, graph_from_dict, graph_to_dict, induced_subgraph, random_regular
from .pseudodist import PartialLabeling
from .relax import ColoringProblem, CSPInstance, SeparatorProblem, UGInstance
from .round import Verdict, verify_labeling
from .spectral import second_eigenvalue, threshold_rank

SCHEMA_VERSION = 1
FAMILIES = ("ug", "oct", "separator", "coloring", "subset-csp", "expander")
OUTLIER_MODELS = ("random-dense", "adversarial-hub")


class BenchError(ValueError):
    pass


class SchemaError(BenchError):
    pass


class FamilyMismatch(SchemaError, TypeError):
    pass


class ConfigError(BenchError):
    pass


@dataclass(frozen=True)
class PlantedSpec:
    family: str = "ug"
    n: int = 150
    k: int = 3
    good: float = 0.95
    d: int = 10
    outliers: str = "random-dense"
    rng: int = 0
    gamma: float = 0.5  # separator side fraction
    eps: float = 0.3  # subset-csp planted fraction
    max_rank: int | None = None  # premise on the good part; default 1 (2 for separator)
    rank_eps: float = 0.2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BenchError(f"unknown family {self.family!r}")
        if self.outliers not in OUTLIER_MODELS:
            raise BenchError(f"unknown outlier model {self.outliers!r}")
        if not 0 < self.good <= 1 or not 0 < self.eps <= 1 or not 0 < self.gamma < 1:
            raise BenchError("fractions out of range")
        if self.k < 1 or self.n < 2 or self.d < 1:
            raise BenchError("n, k, d must be positive")


@dataclass
class GroundTruth:
    v_good: np.ndarray
    labeling: dict[int, int]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"v_good": self.v_good.tolist(), "labeling": {str(v): int(a) for v, a in self.labeling.items()},
                "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(np.asarray(d["v_good"], dtype=np.int64), {int(v): int(a) for v, a in d["labeling"].items()},
                   dict(d.get("meta", {})))


@dataclass(eq=False)
class Planted:
    spec: PlantedSpec
    instance: object
    truth: GroundTruth

    @property
    def graph(self) -> Graph:
        return self.instance if isinstance(self.instance, Graph) else self.instance.graph


# ------------------------------------------------------------------ generators


def _matching_union(a: np.ndarray, b: np.ndarray, copies: int, rng, tries: int = 50) -> list[tuple[int, int]]:
    """``copies`` random perfect matchings between equal-size ``a`` and ``b``, no repeated pair.

    Each matching starts from a random permutation; targets that repeat an
    earlier pair are swapped with random positions until none remain.
    """
    m = a.size
    seen: set[tuple[int, int]] = set()
    key = lambda u, v: (min(u, v), max(u, v))  # noqa: E731
    for _ in range(copies):
        for _ in range(tries):
            perm = rng.permutation(b)
            bad = [i for i in range(m) if key(a[i], perm[i]) in seen]
            budget = 50 * m
            while bad and budget:
                budget -= 1
                i = bad[-1]
                j = int(rng.integers(m))
                if key(a[i], perm[j]) in seen or key(a[j], perm[i]) in seen:
                    continue
                perm[i], perm[j] = perm[j], perm[i]
                bad = [t for t in bad if t not in (i, j)]
            if not bad:
                break
        else:
            raise BenchError("could not sample a simple matching union")
        seen.update(key(int(u), int(v)) for u, v in zip(a, perm))
    return sorted(seen)


def _good_part(spec: PlantedSpec, n_good: int, rng):
    """Good graph on ``0..n_good-1`` plus a planted labeling, per family."""
    fam, d = spec.family, spec.d
    if fam in ("ug", "expander", "subset-csp"):
        if d >= n_good:
            raise BenchError("degree must be below the good part size")
        g = random_regular(n_good, d, rng)
        return g, rng.integers(0, spec.k, n_good) if spec.k > 1 else np.zeros(n_good, dtype=np.int64)
    if fam == "oct":
        half = n_good // 2
        if d > half:
            raise BenchError("degree too large for the bipartite good part")
        edges = _matching_union(np.arange(half), np.arange(half, 2 * half), d, rng)
        return Graph.build(2 * half, edges), (np.arange(2 * half) >= half).astype(np.int64)
    if fam == "coloring":
        if d % 2:
            raise BenchError("coloring family needs an even degree")
        third = n_good // 3
        if d // 2 > third:
            raise BenchError("degree too large for the 3-partite good part")
        parts = [np.arange(i * third, (i + 1) * third) for i in range(3)]
        edges = []
        for i, j in itertools.combinations(range(3), 2):
            edges += _matching_union(parts[i], parts[j], d // 2, rng)
        return Graph.build(3 * third, edges), np.repeat(np.arange(3), third)
    if fam == "separator":
        na = int(round(spec.gamma * n_good))
        nb = n_good - na
        if d >= min(na, nb):
            raise BenchError("degree too large for the separator sides")
        ga, gb = random_regular(na, d, rng), random_regular(nb, d, rng)
        return disjoint_union(ga, gb), np.repeat([0, 1], [na, nb])
    raise BenchError(f"unknown family {fam!r}")


def _outlier_edges(spec: PlantedSpec, n_good: int, n: int, rng) -> list[tuple[int, int]]:
    edges = set()
    for o in range(n_good, n):
        if spec.outliers == "random-dense":
            pool = np.setdiff1d(np.arange(n), [o])
            nbrs = rng.choice(pool, min(2 * spec.d, pool.size), replace=False)
        else:
            nbrs = rng.choice(n_good, min(3 * spec.d, n_good), replace=False)
        for v in nbrs:
            edges.add((min(o, int(v)), max(o, int(v))))
    return sorted(edges)


def _rank_ok(spec: PlantedSpec, good: Graph) -> tuple[bool, int, float]:
    limit = spec.max_rank if spec.max_rank is not None else (2 if spec.family == "separator" else 1)
    rank = threshold_rank(good, spec.rank_eps) if good.m else 0
    lam2 = second_eigenvalue(good) if good.m and good.n > 1 else 0.0
    return rank <= limit, rank, float(lam2)


def _bijection(rng, k, a, b):
    p = rng.permutation(k)
    j = int(np.flatnonzero(p == b)[0])
    p[[j, a]] = p[[a, j]]
    return p


def gen_planted(spec: PlantedSpec) -> Planted:
    """Generate an instance with a planted good part and check its premises.

    Vertex ids are shuffled so that the good part is not a prefix.
    """
    rng = np.random.default_rng(spec.rng)
    n = spec.n
    if spec.family == "subset-csp":
        return _gen_subset(spec, rng)
    n_good = n if spec.family == "expander" else int(round(spec.good * n))
    for attempt in range(10):
        good, sigma = _good_part(spec, n_good, rng)
        ok, rank, lam2 = _rank_ok(spec, good)
        if ok:
            break
    else:
        raise BenchError(f"good part failed the rank premise 10 times (rank {rank})")
    ng = good.n
    edges = [(int(u), int(v)) for u, v in zip(good.src, good.dst)]
    edges += _outlier_edges(spec, ng, n, rng) if ng < n else []
    relabel = rng.permutation(n)
    edges = [(int(relabel[u]), int(relabel[v])) for u, v in edges]
    g = Graph.build(n, edges)
    v_good = np.sort(relabel[:ng])
    labels = {int(relabel[i]): int(sigma[i]) for i in range(ng)}
    meta = {"rank": int(rank), "lambda2": lam2, "n_good": int(ng), "attempts": attempt + 1}
    if spec.family in ("ug", "expander"):
        full = np.array([labels.get(v, int(rng.integers(spec.k))) for v in range(n)])
        perms = np.empty((g.m, spec.k), dtype=np.int64)
        for e, (u, v) in enumerate(zip(g.src, g.dst)):
            if u in labels and v in labels:
                perms[e] = _bijection(rng, spec.k, full[u], full[v])
            else:
                perms[e] = rng.permutation(spec.k)
        inst = UGInstance(g, spec.k, perms)
    elif spec.family == "oct":
        inst = g
    elif spec.family == "coloring":
        inst = g
    else:
        inst = g
        meta["gamma"] = spec.gamma
    out = Planted(spec, inst, GroundTruth(v_good, labels, meta))
    _certify(out)
    return out


def _gen_subset(spec: PlantedSpec, rng) -> Planted:
    """A planted ``eps n`` clique satisfiable by a hidden labeling inside a sparse random CSP."""
    n, k = spec.n, max(spec.k, 2)
    m_good = int(round(spec.eps * n))
    relabel = rng.permutation(n)
    good = np.sort(relabel[:m_good])
    sigma = {int(v): int(rng.integers(k)) for v in good}
    gset = set(sigma)
    edges = {(int(a), int(b)) for a, b in itertools.combinations(good.tolist(), 2)}
    p = min(1.0, spec.d / n)
    iu, ju = np.triu_indices(n, 1)
    hit = rng.random(iu.size) < p
    edges |= {(int(a), int(b)) for a, b in zip(iu[hit], ju[hit])}
    g = Graph.build(n, sorted(edges))
    rels = []
    for u, v in zip(g.src.tolist(), g.dst.tolist()):
        r = np.zeros((k, k), dtype=bool)
        if u in gset and v in gset:
            r[sigma[u], sigma[v]] = True
            r[(sigma[u] + 1) % k, (sigma[v] + 1) % k] = True
        else:
            r[int(rng.integers(k)), int(rng.integers(k))] = True
        rels.append(r)
    inst = CSPInstance(g, k, tuple(rels))
    out = Planted(spec, inst, GroundTruth(good, sigma, {"n_good": m_good, "eps": spec.eps}))
    _certify(out)
    return out


def family_problem(p: Planted):
    """The verifier-facing problem object for a planted instance."""
    fam = p.spec.family
    if fam == "separator":
        return SeparatorProblem(p.graph, p.spec.gamma, 0.5)
    if fam in ("coloring", "oct"):
        return ColoringProblem(p.graph)
    return p.instance


def _certify(p: Planted) -> None:
    lab = PartialLabeling(p.graph.n, dict(p.truth.labeling),
                          frozenset(set(range(p.graph.n)) - set(p.truth.labeling)))
    v = verify_labeling(family_problem(p), lab)
    if not v.passed:
        raise BenchError(f"planted labeling violates {len(v.violations)} constraints")
    if p.spec.family in ("ug", "oct", "coloring", "expander"):
        sub, _ = induced_subgraph(p.graph, p.truth.v_good)
        deg = sub.adjacency.sum(axis=1).A.ravel()
        if deg.size and deg.max() - deg.min() > 1e-9:
            raise BenchError("good part is not regular")


# ------------------------------------------------------------------------ JSON


def _relations_to_list(inst: CSPInstance):
    return [[np.argwhere(r).tolist() for r in lst] for lst in inst.relations]


def _relations_from_list(k, data):
    out = []
    for lst in data:
        tabs = []
        for pairs in lst:
            r = np.zeros((k, k), dtype=bool)
            for a, b in pairs:
                r[a, b] = True
            tabs.append(r)
        out.append(tabs)
    return tuple(out)


def planted_to_dict(p: Planted) -> dict:
    d = {"schema": "strongcsp/instance", "version": SCHEMA_VERSION, "family": p.spec.family,
         "spec": asdict(p.spec), "graph": graph_to_dict(p.graph), "truth": p.truth.to_dict()}
    if isinstance(p.instance, UGInstance):
        d["k"] = p.instance.k
        d["perms"] = p.instance.perms.tolist()
    elif isinstance(p.instance, CSPInstance):
        d["k"] = p.instance.k
        d["relations"] = _relations_to_list(p.instance)
    return d


def _check_schema(d, kind):
    if not isinstance(d, dict) or d.get("schema") != f"strongcsp/{kind}":
        raise SchemaError(f"not a strongcsp {kind} record")
    if d.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"schema version {d.get('version')} != {SCHEMA_VERSION}")


def planted_from_dict(d: dict, family: str | None = None) -> Planted:
    _check_schema(d, "instance")
    fam = d.get("family")
    if family is not None and fam != family:
        raise FamilyMismatch(f"expected a {family!r} instance, got {fam!r}")
    try:
        spec = PlantedSpec(**d["spec"])
        g = graph_from_dict(d["graph"])
        if "perms" in d:
            inst = UGInstance(g, int(d["k"]), np.asarray(d["perms"], dtype=np.int64).reshape(g.m, int(d["k"])))
        elif "relations" in d:
            inst = CSPInstance(g, int(d["k"]), _relations_from_list(int(d["k"]), d["relations"]))
        else:
            inst = g
        truth = GroundTruth.from_dict(d["truth"])
    except (KeyError, TypeError, GraphError, ValueError) as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"malformed instance record: {e}") from e
    return Planted(spec, inst, truth)


def _loads(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"parse error at line {e.lineno} column {e.colno} (offset {e.pos}): {e.msg}") from e


def dumps_planted(p: Planted) -> str:
    return json.dumps(planted_to_dict(p), sort_keys=True)


def loads_planted(text: str, family: str | None = None) -> Planted:
    return planted_from_dict(_loads(text), family)


def save_planted(path, p: Planted) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_planted(p))


def load_planted(path, family: str | None = None) -> Planted:
    with open(path) as fh:
        return loads_planted(fh.read(), family)


def result_to_dict(res) -> dict:
    return {"schema": "strongcsp/result", "version": SCHEMA_VERSION, **res.to_dict()}


def result_from_dict(d: dict):
    from .apps import SolveResult

    _check_schema(d, "result")
    try:
        lab = PartialLabeling.from_dict(d["labeling"])
        v = d["verdict"]
        verdict = Verdict(bool(v["passed"]), v["kind"], [tuple(e) for e in v["violations"]], int(v["checked_edges"]))
        return SolveResult(d["problem"], int(d["n"]), np.asarray(d["kept"], dtype=np.int64), lab, d["sizes"],
                           d["objectives"], verdict, d["timings"], d["extra"])
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed result record: {e}") from e


def dumps_result(res) -> str:
    return json.dumps(result_to_dict(res), sort_keys=True)


def loads_result(text: str):
    return result_from_dict(_loads(text))


# ------------------------------------------------------------------ experiment

SWEEP_KEYS = {"families": str, "n": int, "delta": float, "seeds": int}
CELL_KEYS = {"k": int, "d": int, "good": float, "outliers": str, "gamma": float, "eps": float}
SOLVER_KEYS = {"skip_decomp": "bool", "level": int, "seed_policy": str, "seed_budget": int, "solver": str,
               "pool_size": int}
REPORT_KEYS = {"timings": "bool", "trials": int}


def _bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; sweep keys take comma-separated lists; ``#`` starts a comment."""
    known = {**SWEEP_KEYS, **CELL_KEYS, **SOLVER_KEYS, **REPORT_KEYS}
    out: dict = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        conv = known[key]
        try:
            if key in SWEEP_KEYS:
                items = [v.strip() for v in val.split(",") if v.strip()]
                if key == "seeds" and len(items) == 1 and ".." in items[0]:
                    lo, hi = items[0].split("..")
                    out[key] = list(range(int(lo), int(hi) + 1))
                else:
                    out[key] = [conv(v) for v in items]
            elif conv == "bool":
                out[key] = _bool(val)
            else:
                out[key] = conv(val)
        except ValueError as e:
            raise ConfigError(f"line {no}: bad value for {key!r}: {e}") from e
    for fam in out.get("families", []):
        if fam not in FAMILIES:
            raise ConfigError(f"unknown family {fam!r}")
    return out


@dataclass
class Report:
    rows: list[dict]
    results: list[dict]

    @property
    def hard_failures(self) -> int:
        return sum(1 for r in self.rows if r["status"] != "ok" or r["passed"] is False)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        cols: list[str] = []
        for r in self.rows:
            cols += [c for c in r if c not in cols]
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"schema": "strongcsp/report", "version": SCHEMA_VERSION, "rows": self.rows,
                           "results": self.results}, sort_keys=True)


def run_cell(planted: Planted, delta: float, cfg, trials: int = 1):
    from . import apps

    fam = planted.spec.family
    truth = planted.truth.v_good
    if fam in ("ug", "expander"):
        return apps.solve_strong_ug(planted.instance, delta, cfg, truth)
    if fam == "oct":
        return apps.solve_oct(planted.graph, delta, cfg, truth)
    if fam == "separator":
        return apps.solve_separator(planted.graph, delta, planted.spec.gamma, cfg, truth)
    if fam == "coloring":
        return apps.solve_partial_coloring(planted.graph, delta, cfg, truth)
    return apps.solve_subset_csp(planted.instance, planted.spec.eps, cfg, truth, trials=trials)


def run_experiment(config) -> Report:
    """Sweep families x n x delta x seeds; one row per cell, failures recorded."""
    from .apps import SolveConfig, StageError

    if isinstance(config, str):
        config = parse_config(config)
    fams = config.get("families", [])
    ns = config.get("n", [60])
    deltas = config.get("delta", [0.05])
    seeds = config.get("seeds", [0])
    cell = {k: config[k] for k in CELL_KEYS if k in config}
    solver = {k: config[k] for k in SOLVER_KEYS if k in config}
    with_time = config.get("timings", False)
    trials = config.get("trials", 1)
    rows, results = [], []
    for fam, n, delta, seed in itertools.product(fams, ns, deltas, seeds):
        row = {"family": fam, "n": n, "delta": delta, "seed": seed}
        try:
            spec = PlantedSpec(family=fam, n=n, rng=seed, **cell)
            planted = gen_planted(spec)
            cfg = SolveConfig.from_mapping({**solver, "rng": seed})
            res = run_cell(planted, delta, cfg, trials)
            row.update({"status": "ok", "stage": "", "passed": res.verdict.passed, "n_good": int(planted.truth.v_good.size),
                        "kept": int(res.kept.size), "violations": len(res.verdict.violations),
                        "objective": res.objectives.get("relaxation"),
                        "precision": res.extra.get("precision"), "recall": res.extra.get("recall")})
            if with_time:
                row.update({f"t_{k}": round(v, 4) for k, v in res.timings.items()})
            d = res.to_dict()
            if not with_time:
                d.pop("timings")
                d["extra"].get("solver", {}).pop("seconds", None)
            results.append({"cell": {k: row[k] for k in ("family", "n", "delta", "seed")}, "result": d})
        except StageError as e:
            row.update({"status": "error", "stage": e.stage, "passed": False, "error": str(e)})
        except (BenchError, GraphError, ValueError, RuntimeError) as e:
            row.update({"status": "error", "stage": "generate", "passed": False, "error": str(e)})
        rows.append(row)
    return Report(rows, results)
