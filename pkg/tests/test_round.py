import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from strongcsp.bench import PlantedSpec, gen_planted
from strongcsp.graph import Graph, complete_graph, cycle_graph, disjoint_union
from strongcsp.pseudodist import DEL, STAR, Alphabet, Conditioning, PartialLabeling, PseudoDistribution
from strongcsp.relax import (ColoringProblem, CSPInstance, SeparatorProblem, UGInstance, build_coloring,
                             build_strong_ug, build_subset_csp, solve, ug_alphabet)
from strongcsp.round import (ColoringParams, RoundingError, SeedPolicy, coloring_round, dense_predicate,
                             global_correlation, local_correlation, low_variance_round, propagation_round,
                             reports_to_csv, select_seed, verify_labeling)


def correlated_pair():
    m = np.zeros((2, 2))
    m[0, 0] = m[1, 1] = 0.5
    return PseudoDistribution(3, 2, Alphabet(2), {(0, 1): m})


# ------------------------------------------------------------------- seeds


def test_seed_budget_zero():
    res = select_seed(correlated_pair(), SeedPolicy(budget=0))
    assert len(res.conditioning) == 0
    assert len(res.realized) == 1


def test_seed_on_correlated_pair():
    res = select_seed(correlated_pair(), SeedPolicy(budget=1, rng=3))
    assert res.realized[0] == pytest.approx(0.5)
    assert res.realized[1] == pytest.approx(0.0)
    assert len(res.conditioning) == 1


def test_seed_on_independent_pd_is_flat():
    pd = PseudoDistribution.uniform(5, Alphabet(3))
    res = select_seed(pd, SeedPolicy(budget=3))
    assert len(res.conditioning) == 3
    np.testing.assert_allclose(res.realized, 2 / 3)
    np.testing.assert_allclose(res.estimated, 2 / 3)


def test_seed_policy_validation():
    with pytest.raises(ValueError):
        SeedPolicy(strategy="best")
    with pytest.raises(ValueError):
        SeedPolicy(on_exhaust="ignore")


@pytest.mark.parametrize("seed", range(4))
def test_greedy_estimates_nonincreasing(seed):
    p = gen_planted(PlantedSpec(family="ug", n=40, k=2, d=6, rng=seed))
    sol = solve(build_strong_ug(p.instance, 0.05, 4))
    res = select_seed(sol, SeedPolicy(budget=2, rng=seed, on_exhaust="stop"))
    assert all(b <= a + 1e-9 for a, b in zip(res.estimated, res.estimated[1:]))


def test_random_policy_picks_uniform_vertices():
    pd = PseudoDistribution.uniform(6, Alphabet(2))
    res = select_seed(pd, SeedPolicy("random-uniform", budget=3, rng=0))
    assert len(set(res.conditioning.seed)) == 3


def test_exhaustion_policy(monkeypatch):
    import strongcsp.round as R

    monkeypatch.setattr(R._State, "pin", lambda self, v, a: False)
    pd = PseudoDistribution.uniform(4, Alphabet(2))
    with pytest.raises(RoundingError, match="null events"):
        select_seed(pd, SeedPolicy("random-uniform", budget=1, rng=0, retry_cap=0))
    res = select_seed(pd, SeedPolicy("random-uniform", budget=2, rng=0, retry_cap=0, on_exhaust="stop"))
    assert res.exhausted and len(res.conditioning) == 0


# ------------------------------------------------------------- low variance


def test_low_variance_on_point_mass():
    g = Graph.build(4, [(0, 1), (0, 3), (1, 2), (2, 3)])  # already in canonical edge order
    inst = UGInstance(g, 3, [[1, 2, 0], [2, 0, 1], [0, 1, 2], [0, 1, 2]])
    pd = PseudoDistribution.from_integral(4, ug_alphabet(3), [0, 1, STAR, 2])
    rep = low_variance_round(inst, pd)
    assert sorted(rep.labeling.labels) == [0, 1, 3]
    assert rep.labeling.deleted == frozenset({2})
    assert rep.verdict.passed


def test_low_variance_excludes_spread_vertex():
    a = Alphabet(3, (STAR,))
    pd = PseudoDistribution.product(2, a, [[0.25] * 4, [1.0, 0, 0, 0]])
    inst = UGInstance(Graph.build(2, [(0, 1)]), 3, [[0, 1, 2]])
    rep = low_variance_round(inst, pd)
    assert rep.variance[0] == pytest.approx(0.75)
    assert 0 not in rep.labeling.labels and 1 in rep.labeling.labels


@pytest.mark.parametrize("seed", range(3))
def test_low_variance_planted_verdict(seed):
    p = gen_planted(PlantedSpec(family="ug", n=60, k=3, d=10, rng=seed))
    sol = solve(build_strong_ug(p.instance, 0.05, 3))
    rep = low_variance_round(p.instance, sol)
    assert rep.verdict.passed
    json.loads(rep.dumps())
    assert "kept" in reports_to_csv([rep])


# --------------------------------------------------------------- propagation


def test_propagation_point_mass_and_full_eps():
    g = complete_graph(4)
    inst = CSPInstance(g, 2, tuple(np.ones((2, 2), dtype=bool) for _ in range(g.m)))
    pd = PseudoDistribution.from_integral(4, Alphabet(2, (DEL,)), [0, 1, DEL, 1])
    lab, stats = propagation_round(inst, pd, rng=0)
    assert lab.labels == {0: 0, 1: 1, 3: 1} and lab.deleted == frozenset({2})
    sol = solve(build_subset_csp(inst, 1.0, 2))
    for r in range(20):
        lab, _ = propagation_round(inst, sol, rng=r)
        assert not lab.deleted


# ------------------------------------------------------------------ coloring


def test_coloring_round_bipartite():
    g = cycle_graph(8)
    sol = solve(build_coloring(g, 0.0, 3))
    lab, rep = coloring_round(g, sol, ColoringParams(delta=0.0))
    assert verify_labeling(ColoringProblem(g), lab).passed
    assert set(lab.labels.values()) <= {0, 1, 2, 3}


def test_coloring_round_keeps_isolated_vertex():
    g = disjoint_union(complete_graph(3), Graph.build(1))
    sol = solve(build_coloring(g, 0.0, 3))
    lab, _ = coloring_round(g, sol)
    assert 3 in lab.labels
    assert verify_labeling(g, lab).passed


# ------------------------------------------------------------- correlations


def test_local_correlation_independent():
    g = complete_graph(4)
    pd = PseudoDistribution.uniform(4, Alphabet(3))
    assert local_correlation(g, pd) == pytest.approx(0.0)
    assert global_correlation(pd) == pytest.approx(np.mean([(2 / 3) ** 2 if i == j else 0
                                                            for i in range(4) for j in range(4)]))


def test_local_correlation_anti_triangle():
    a = Alphabet(2)
    anti = np.array([[0.0, 0.5], [0.5, 0.0]])
    locs = {(0, 1): anti, (0, 2): anti, (1, 2): anti}
    pd = PseudoDistribution(2, 3, a, locs)
    # each edge: sum_a Pr[a, a] - Pr[a]^2 = 0 - 2 * 1/4
    assert local_correlation(complete_graph(3), pd, labels=[0, 1]) == pytest.approx(-0.5)


def test_separating_example_variance_unchanged():
    k, n = 3, 6
    g = complete_graph(n)
    pd = PseudoDistribution.uniform(n, Alphabet(k), exact=True)
    assert local_correlation(g, pd) == 0
    for size in range(4):
        for seed in itertools.combinations(range(n), size):
            for alpha in itertools.product(range(k), repeat=size):
                c = Conditioning(seed, alpha)
                rest = [v for v in range(n) if v not in seed]
                avg = sum(pd.variance(v, c) for v in rest) / len(rest)
                assert avg == Fraction(k - 1, k)


# ------------------------------------------------------------------ verdicts


def test_verify_examples():
    edge = Graph.build(2, [(0, 1)])
    ug = UGInstance(edge, 2, [[0, 1]])
    assert verify_labeling(ug, PartialLabeling(2, {0: 1, 1: 1})).passed
    bad = verify_labeling(ColoringProblem(edge), PartialLabeling(2, {0: 2, 1: 2}))
    assert not bad.passed and bad.violations == [(0, 1)]
    sep = verify_labeling(SeparatorProblem(edge, 0.5, 0.1), PartialLabeling(2, {0: 0, 1: 1}))
    assert not sep.passed
    assert verify_labeling(ug, PartialLabeling(2, {0: 0}, frozenset({1}))).checked_edges == 0


def test_verify_planted_witness():
    p = gen_planted(PlantedSpec(family="ug", n=60, d=6, rng=0))
    lab = PartialLabeling(60, p.truth.labeling, frozenset(set(range(60)) - set(p.truth.labeling)))
    assert verify_labeling(p.instance, lab).passed


def test_verify_rejects_size_mismatch():
    with pytest.raises(ValueError):
        verify_labeling(complete_graph(3), PartialLabeling(4, {}))


def test_dense_predicate():
    assert dense_predicate(complete_graph(12), 0.1, 0.01)
    sparse = disjoint_union(complete_graph(10), *[Graph.build(2, [(0, 1)]) for _ in range(40)])
    assert not dense_predicate(sparse, 0.1, 0.6, trials=400)
