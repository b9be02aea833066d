import json

import numpy as np
import pytest

from strongcsp.apps import (SolveConfig, StageError, extend_labeling, oct_instance, restrict_ug, solve_oct,
                            solve_partial_coloring, solve_separator, solve_strong_ug, solve_subset_csp)
from strongcsp.bench import PlantedSpec, dumps_result, gen_planted, loads_result
from strongcsp.graph import complete_graph, connected_components, cycle_graph, disjoint_union, path_graph
from strongcsp.pseudodist import PartialLabeling
from strongcsp.relax import ColoringProblem, CSPInstance, SeparatorProblem, UGInstance
from strongcsp.round import verify_labeling


def recheck(problem, res):
    """Recompute the verdict from the instance and labeling alone."""
    v = verify_labeling(problem, res.labeling)
    assert v.passed == res.verdict.passed
    assert set(res.kept.tolist()) <= set(range(res.n))
    assert set(res.labeling.labels) == set(res.kept.tolist())
    return v


# ----------------------------------------------------------------------- UG


@pytest.mark.parametrize("seed", range(3))
def test_ug_planted(seed):
    p = gen_planted(PlantedSpec(family="ug", n=150, k=3, d=10, rng=seed))
    res = solve_strong_ug(p.instance, 0.05, SolveConfig(rng=seed), p.truth.v_good)
    assert recheck(p.instance, res).passed
    assert res.kept.size >= 0.8 * len(p.truth.v_good)
    assert 0 <= res.extra["precision"] <= 1 and 0 <= res.extra["recall"] <= 1
    assert set(res.timings) >= {"decomp", "build", "relax", "seed", "round", "verify"}


def test_ug_single_label_keeps_everything():
    inst = UGInstance(cycle_graph(7), 1, np.zeros((7, 1), dtype=int))
    res = solve_strong_ug(inst, 0.05)
    assert res.kept.size == 7 and res.verdict.passed


def test_ug_rejects_bad_delta():
    inst = UGInstance(cycle_graph(4), 2, np.tile([1, 0], (4, 1)))
    with pytest.raises(ValueError):
        solve_strong_ug(inst, 1.0)


def test_restrict_ug_keeps_induced_perms():
    inst = UGInstance(path_graph(4), 3, [[1, 2, 0], [2, 0, 1], [0, 1, 2]])
    sub = restrict_ug(inst, np.array([1, 2, 3]))
    assert sub.graph.n == 3 and sub.graph.m == 2
    np.testing.assert_array_equal(sub.perms, [[2, 0, 1], [0, 1, 2]])


def test_extend_labeling_readmits_fitting_vertices():
    g = path_graph(3)
    lab = PartialLabeling(3, {0: 0}, frozenset({1, 2}))
    out, added = extend_labeling(ColoringProblem(g), lab, 2)
    assert added == 2 and verify_labeling(g, out).passed


# ---------------------------------------------------------------------- OCT


def test_oct_bipartite_keeps_all():
    res = solve_oct(cycle_graph(10), 0.0)
    assert res.kept.size == 10 and res.extra["bipartite"]
    recheck(oct_instance(cycle_graph(10)), res)


def test_oct_five_cycle():
    g = cycle_graph(5)
    res = solve_oct(g, 0.2)
    assert res.verdict.passed and res.extra["bipartite"]
    assert 1 <= res.kept.size <= 4
    from strongcsp.graph import induced_subgraph

    sub, _ = induced_subgraph(g, res.kept)
    assert sub.m == res.kept.size - 1 and len(connected_components(sub)) == 1  # a path


@pytest.mark.parametrize("seed", range(3))
def test_oct_planted(seed):
    p = gen_planted(PlantedSpec(family="oct", n=80, d=6, rng=seed))
    res = solve_oct(p.graph, 0.05, SolveConfig(rng=seed), p.truth.v_good)
    assert res.extra["bipartite"]
    # never a monochromatic induced edge
    lab = res.labeling.labels
    for u, v in zip(p.graph.src, p.graph.dst):
        if u in lab and v in lab:
            assert lab[u] != lab[v]


# ---------------------------------------------------------------- separator


def test_separator_disconnected_no_deletions():
    g = disjoint_union(complete_graph(4), complete_graph(4))
    res = solve_separator(g, 0.0, 0.5)
    assert res.kept.size == 8 and res.extra["crossing"] == 0
    assert {res.extra["side_a"], res.extra["side_b"]} == {4}


def test_separator_complete_graph():
    g = complete_graph(6)
    res = solve_separator(g, 0.34, 0.5)
    assert res.verdict.passed and res.extra["crossing"] == 0
    assert res.sizes["deleted"] >= 1
    v = recheck(SeparatorProblem(g, 0.5, 0.1), res)
    assert not v.violations


@pytest.mark.parametrize("seed", range(3))
def test_separator_planted(seed):
    p = gen_planted(PlantedSpec(family="separator", n=80, d=6, rng=seed))
    res = solve_separator(p.graph, 0.05, p.spec.gamma, SolveConfig(rng=seed), p.truth.v_good)
    assert res.verdict.passed and res.extra["crossing"] == 0
    assert "balance_deviation" in res.extra


# ----------------------------------------------------------------- coloring


def test_coloring_triangle():
    res = solve_partial_coloring(complete_graph(3), 0.0)
    assert res.kept.size == 3 and res.sizes["colors_used"] == 3
    recheck(ColoringProblem(complete_graph(3)), res)


def test_coloring_bipartite():
    g = cycle_graph(8)
    res = solve_partial_coloring(g, 0.0)
    assert res.verdict.passed and res.kept.size == 8 - res.sizes["deleted"]
    assert res.sizes["colors_used"] <= 4


def test_coloring_planted():
    p = gen_planted(PlantedSpec(family="coloring", n=45, d=6, rng=0))
    res = solve_partial_coloring(p.graph, 0.05, SolveConfig(rng=0), p.truth.v_good)
    assert recheck(ColoringProblem(p.graph), res).passed
    assert set(res.labeling.labels.values()) <= {0, 1, 2, 3}


# ------------------------------------------------------------------- subset


def _trivial_csp(n):
    g = complete_graph(n)
    return CSPInstance(g, 2, tuple(np.ones((2, 2), dtype=bool) for _ in range(g.m)))


def test_subset_full_eps():
    res = solve_subset_csp(_trivial_csp(6), 1.0)
    assert res.kept.size == 6
    assert res.objectives["satisfied_fraction"] >= 1 - 0.05


def test_subset_band_and_trials():
    p = gen_planted(PlantedSpec(family="subset-csp", n=40, eps=0.3, rng=0))
    res = solve_subset_csp(p.instance, 0.3, SolveConfig(rng=0), p.truth.v_good, trials=20)
    assert len(res.extra["trial_sizes"]) == 20
    assert np.mean(res.extra["within_band"]) >= 0.8
    assert res.verdict.passed is not None


def test_subset_rejects_bad_eps():
    with pytest.raises(ValueError):
        solve_subset_csp(_trivial_csp(3), 0.0)


# ------------------------------------------------------------------- config


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        SolveConfig.from_mapping({"levle": 3})
    assert SolveConfig.from_mapping({"level": 3}).level == 3


def test_stage_errors_are_tagged():
    inst = UGInstance(cycle_graph(5), 2, np.tile([1, 0], (5, 1)))
    with pytest.raises(StageError) as ei:
        solve_strong_ug(inst, 0.05, SolveConfig(solver="nope", skip_decomp=True))
    assert ei.value.stage == "relax"


def test_result_roundtrip():
    res = solve_oct(cycle_graph(6), 0.0)
    back = loads_result(dumps_result(res))
    assert back.kept.tolist() == res.kept.tolist()
    assert back.labeling.labels == res.labeling.labels
    json.dumps(res.csv_row())
