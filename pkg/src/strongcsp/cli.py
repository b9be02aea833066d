"""Command line entry point.

Exit codes: 0 success, 1 hard failure (a verifier rejected an output or a
stage failed), 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict

import numpy as np

from . import apps, bench, gadget
from .decomp import DecompError, find_low_thresh
from .graph import Graph, GraphError, graph_from_dict
from .spectral import spectrum_top

OK, FAIL, CONFIG = 0, 1, 2

SOLVE_FAMILIES = {"solve-ug": ("ug", "expander"), "solve-oct": ("oct",), "solve-sep": ("separator",),
                  "solve-color": ("coloring",), "solve-subset": ("subset-csp",)}


class UsageError(Exception):
    pass


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols: list[str] = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _load_graph(path) -> tuple[Graph, bench.Planted | None]:
    with open(path) as fh:
        text = fh.read()
    d = bench._loads(text)
    if isinstance(d, dict) and d.get("schema") == "strongcsp/instance":
        p = bench.planted_from_dict(d)
        return p.graph, p
    try:
        return graph_from_dict(d), None
    except GraphError as e:
        raise bench.SchemaError(str(e)) from e


# ---------------------------------------------------------------- subcommands


def cmd_gen(a) -> int:
    spec = bench.PlantedSpec(family=a.family, n=a.n, k=a.k, good=a.good, d=a.d, outliers=a.outliers, rng=a.rng,
                             gamma=a.gamma, eps=a.eps)
    p = bench.gen_planted(spec)
    _write(a.out, bench.dumps_planted(p))
    return OK


def cmd_run(a) -> int:
    with open(a.config) as fh:
        rep = bench.run_experiment(fh.read())
    _write(a.json, rep.to_json())
    if a.csv:
        _write(a.csv, rep.to_csv())
    else:
        sys.stderr.write(rep.to_csv())
    return FAIL if rep.hard_failures else OK


def cmd_report(a) -> int:
    if a.spectrum:
        g, _ = _load_graph(a.spectrum)
        sp = spectrum_top(g, min(a.top, g.n))
        _write(a.out, json.dumps({"n": g.n, "eigenvalues": np.asarray(sp.eigenvalues).tolist()}))
        return OK
    with open(a.report) as fh:
        d = bench._loads(fh.read())
    if d.get("schema") != "strongcsp/report":
        raise bench.SchemaError("not a strongcsp report")
    groups: dict = {}
    for r in d["rows"]:
        groups.setdefault((r["family"], r["n"], r["delta"]), []).append(r)
    rows = []
    for (fam, n, delta), rs in sorted(groups.items()):
        ok = [r for r in rs if r["status"] == "ok"]
        rows.append({"family": fam, "n": n, "delta": delta, "cells": len(rs),
                     "passed": sum(1 for r in rs if r.get("passed") is True),
                     "errors": len(rs) - len(ok),
                     "mean_kept": round(float(np.mean([r["kept"] for r in ok])), 3) if ok else "",
                     "mean_recall": round(float(np.mean([r["recall"] for r in ok if r.get("recall") is not None])), 4)
                     if any(r.get("recall") is not None for r in ok) else ""})
    _write(a.out, _csv(rows))
    return FAIL if any(r["errors"] or r["passed"] < r["cells"] for r in rows) else OK


def cmd_decompose(a) -> int:
    g, _ = _load_graph(a.graph)
    overrides = {"eps": a.eps, "gamma": a.gamma}
    grid = [float(x) for x in a.degree_grid.split(",")] if a.degree_grid else None
    res = find_low_thresh(g, a.delta, overrides, cap_k=a.cap_k, grid=grid, coverage_floor=a.coverage_floor)
    out = {"accepted": res.accepted, "v_dd": res.v_dd.members.tolist(), "rank": res.rank, "n_sets": res.n_sets,
           "d0": res.d0, "induced_edges": res.induced_edges}
    rows = []
    if res.decomp is not None:
        out["params"] = asdict(res.decomp.params)
        out["sets"] = [s.members.tolist() for s in res.decomp.sets]
        out["leftover"] = res.decomp.leftover.members.tolist()
        out["incomplete"] = res.decomp.incomplete
        rows = [{"set": i, **asdict(st)} for i, st in enumerate(res.decomp.stats)]
    _write(a.out, json.dumps(out))
    if a.csv:
        _write(a.csv, _csv(rows))
    return OK


def _solve_config(a) -> apps.SolveConfig:
    kw = {"rng": a.rng, "skip_decomp": a.skip_decomp, "seed_policy": a.seed_policy}
    if a.level is not None:
        kw["level"] = a.level
    if a.seed_budget is not None:
        kw["seed_budget"] = a.seed_budget
    return apps.SolveConfig.from_mapping(kw)


def cmd_solve(a) -> int:
    with open(a.instance) as fh:
        text = fh.read()
    families = SOLVE_FAMILIES[a.cmd]
    d = bench._loads(text)
    fam = d.get("family") if isinstance(d, dict) else None
    if fam not in families:
        raise bench.FamilyMismatch(f"{a.cmd} expects a {' or '.join(families)} instance, got {fam!r}")
    p = bench.planted_from_dict(d)
    cfg = _solve_config(a)
    truth = p.truth.v_good
    if a.cmd == "solve-ug":
        res = apps.solve_strong_ug(p.instance, a.delta, cfg, truth)
    elif a.cmd == "solve-oct":
        res = apps.solve_oct(p.graph, a.delta, cfg, truth)
    elif a.cmd == "solve-sep":
        gamma = a.gamma if a.gamma is not None else p.spec.gamma
        res = apps.solve_separator(p.graph, a.delta, gamma, cfg, truth)
    elif a.cmd == "solve-color":
        res = apps.solve_partial_coloring(p.graph, a.delta, cfg, truth)
    else:
        eps = a.eps if a.eps is not None else p.spec.eps
        res = apps.solve_subset_csp(p.instance, eps, cfg, truth, trials=a.trials)
    _write(a.out, bench.dumps_result(res))
    summary = _csv([res.csv_row()])
    if a.csv:
        _write(a.csv, summary)
    else:
        sys.stderr.write(summary)
    return OK if res.verdict.passed else FAIL


def cmd_gadget(a) -> int:
    lc, _, sigma = gadget.random_label_cover(a.n_u, a.deg, a.n_v, a.k, a.s, a.rng)
    plc = gadget.square_label_cover(lc)
    tables = [gadget.BooleanTable.dictator(a.k, int(v)) for v in sigma]
    acc = gadget.acceptance_probability(plc, tables, a.eta, a.mode, samples=a.samples, rng=a.rng)
    inst = gadget.build_4lin(plc, a.eta, a.m, a.rng)
    sat = inst.satisfied(inst.dictator_assignment(sigma))
    bound = 1 - 2 * a.eta
    summary = {"k": a.k, "eta": a.eta, "mode": a.mode, "acceptance": acc.value, "stderr": acc.stderr,
               "completeness_bound": bound, "constraints": inst.m, "dictator_satisfied": sat,
               "product_constraints": plc.m}
    sys.stderr.write(json.dumps(summary) + "\n")
    if a.out:
        _write(a.out, inst.dumps())
    ok = acc.value >= bound - (4 * acc.stderr if a.mode == "mc" else 1e-12)
    return OK if ok else FAIL


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="strongcsp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a planted instance")
    g.add_argument("--family", choices=bench.FAMILIES, default="ug")
    g.add_argument("--n", type=int, default=150)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--good", type=float, default=0.95)
    g.add_argument("--outliers", choices=bench.OUTLIER_MODELS, default="random-dense")
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--eps", type=float, default=0.3)
    g.add_argument("--rng", type=int, default=0)
    g.add_argument("--out", default="-")
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="run an experiment sweep from a key = value config")
    r.add_argument("config")
    r.add_argument("--json", default="-")
    r.add_argument("--csv")
    r.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", help="summarize a sweep report, or print a graph spectrum")
    p.add_argument("report", nargs="?")
    p.add_argument("--spectrum", help="graph or instance JSON")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_report)

    d = sub.add_parser("decompose", help="find a large low threshold-rank vertex set")
    d.add_argument("graph")
    d.add_argument("--delta", type=float, default=0.05)
    d.add_argument("--eps", type=float, default=0.2)
    d.add_argument("--gamma", type=float, default=0.1)
    d.add_argument("--cap-k", type=float, default=1.0)
    d.add_argument("--degree-grid")
    d.add_argument("--coverage-floor", type=float, default=0.85)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", default="-")
    d.add_argument("--csv")
    d.set_defaults(fn=cmd_decompose)

    for name in SOLVE_FAMILIES:
        s = sub.add_parser(name, help=f"run the {name[6:]} solver on an instance file")
        s.add_argument("instance")
        s.add_argument("--delta", type=float, default=0.05)
        s.add_argument("--level", type=int)
        s.add_argument("--seed-policy", choices=("greedy-variance", "random-uniform"), default="greedy-variance")
        s.add_argument("--seed-budget", type=int)
        s.add_argument("--rng", type=int, default=0)
        s.add_argument("--skip-decomp", action="store_true")
        s.add_argument("--out", default="-")
        s.add_argument("--csv")
        if name == "solve-sep":
            s.add_argument("--gamma", type=float)
        if name == "solve-subset":
            s.add_argument("--eps", type=float)
            s.add_argument("--trials", type=int, default=1)
        s.set_defaults(fn=cmd_solve)

    x = sub.add_parser("gadget", help="build the 4-Lin gadget on a random satisfiable label cover")
    x.add_argument("--k", type=int, default=4)
    x.add_argument("--s", type=int, default=2)
    x.add_argument("--eta", type=float, default=0.05)
    x.add_argument("--m", type=int, default=1000)
    x.add_argument("--mode", choices=("exact", "mc", "brute"), default="exact")
    x.add_argument("--samples", type=int, default=20000)
    x.add_argument("--n-u", type=int, default=4)
    x.add_argument("--deg", type=int, default=2)
    x.add_argument("--n-v", type=int, default=4)
    x.add_argument("--rng", type=int, default=0)
    x.add_argument("--out")
    x.set_defaults(fn=cmd_gadget)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return CONFIG if e.code else OK
    try:
        return a.fn(a)
    except (bench.BenchError, gadget.GadgetError, GraphError, OSError, UsageError) as e:
        sys.stderr.write(f"error: {e}\n")
        return CONFIG
    except (apps.StageError, DecompError) as e:
        sys.stderr.write(f"failed: {e}\n")
        return FAIL
    except ValueError as e:
        sys.stderr.write(f"error: {e}\n")
        return CONFIG


if __name__ == "__main__":
    sys.exit(main())
