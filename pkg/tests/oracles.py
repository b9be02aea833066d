"""Independent reference computations shared by several test modules."""

import itertools

import numpy as np

from strongcsp.apps import oct_instance
from strongcsp.graph import Graph
from strongcsp.pseudodist import DEL, STAR, PseudoDistribution
from strongcsp.relax import build_coloring, build_separator, build_strong_ug, build_subset_csp


def witness(prog, assignment):
    pd = PseudoDistribution.from_integral(prog.n, prog.alphabet, assignment)
    x = prog.vector_of(pd)
    return x, prog.violation(x), float(prog.c_primary @ x)


def planted_witness(p):
    """Build the family's program and the planted labeling as an integral point."""
    fam, g, lab = p.spec.family, p.graph, p.truth.labeling
    if fam in ("ug", "expander"):
        prog = build_strong_ug(p.instance, 0.05, 3)
        fill = STAR
    elif fam == "oct":
        prog = build_strong_ug(oct_instance(g), 0.05, 3)
        fill = STAR
    elif fam == "separator":
        prog = build_separator(g, 0.05, p.spec.gamma, 3, slack=0.1)
        fill = STAR
    elif fam == "coloring":
        prog = build_coloring(g, 0.05, 3)
        fill = STAR
    else:
        prog = build_subset_csp(p.instance, p.spec.eps, 2)
        fill = DEL
    return prog, [lab.get(v, fill) for v in range(g.n)]


def vertex_enumeration(c, a_ub, b_ub, a_eq, b_eq):
    """Brute-force LP oracle: best basic feasible point over all active sets."""
    nv = c.size
    rows = [(r, b, "L") for r, b in zip(a_ub, b_ub)] + [(-np.eye(nv)[i], 0.0, "L") for i in range(nv)]
    eqs = list(zip(a_eq, b_eq))
    best = np.inf
    need = nv - len(eqs)
    for act in itertools.combinations(range(len(rows)), need):
        m = np.array([e[0] for e in eqs] + [rows[i][0] for i in act]).reshape(-1, nv)
        rhs = np.array([e[1] for e in eqs] + [rows[i][1] for i in act])
        if abs(np.linalg.det(m)) < 1e-10:
            continue
        x = np.linalg.solve(m, rhs)
        if (x >= -1e-9).all() and (a_ub @ x <= b_ub + 1e-9).all() and np.allclose(a_eq @ x, b_eq, atol=1e-9):
            best = min(best, float(c @ x))
    return best


def mis_oracle(g: Graph) -> int:
    edges = list(zip(g.src.tolist(), g.dst.tolist()))
    for size in range(g.n, 0, -1):
        for s in itertools.combinations(range(g.n), size):
            ss = set(s)
            if not any(u in ss and v in ss for u, v in edges):
                return size
    return 0
