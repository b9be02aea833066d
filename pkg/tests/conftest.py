import numpy as np
from hypothesis import HealthCheck, settings, strategies as st

from strongcsp.graph import Graph, complete_graph, disjoint_union

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_cliques_bridge(size: int) -> Graph:
    """Two K_size joined by the edge (0, size)."""
    g = disjoint_union(complete_graph(size), complete_graph(size))
    return Graph.build(g.n, g.edges + [(0, size, 1.0)])


def triangles(m: int) -> Graph:
    return disjoint_union(*[complete_graph(3) for _ in range(m)])


@st.composite
def graphs(draw, min_n=2, max_n=12, weighted=False):
    n = draw(st.integers(min_n, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    if weighted:
        ws = draw(st.lists(st.floats(0.1, 5.0), min_size=len(chosen), max_size=len(chosen)))
    else:
        ws = [1.0] * len(chosen)
    return Graph.build(n, [(u, v, w) for (u, v), w in zip(chosen, ws)])


def random_graph(n, p, rng):
    rng = np.random.default_rng(rng)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return Graph.build(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
