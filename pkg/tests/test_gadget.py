import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strongcsp.gadget import (BooleanTable, BoundViolation, FourLinInstance, GadgetError, LabelCover,
                              ProductLabelCover, acceptance_probability, build_4lin, decode_trials,
                              folded_indicator, indset_to_strong_csp, noise_character_mean,
                              query_containment_probability, random_label_cover, randomized_decode,
                              square_label_cover, strong_csp_bruteforce, walsh_hadamard,
                              weak_expansion_product)
from strongcsp.graph import Graph, complete_graph, erdos_renyi, star_graph

from oracles import mis_oracle


def pc(x):
    return bin(x).count("1")


def chi(a, x):
    return -1 if pc(a & x) % 2 else 1


def single_edge(k, s=None, pi1=None, pi2=None):
    s = k if s is None else s
    pi1 = np.arange(k) if pi1 is None else np.asarray(pi1)
    pi2 = np.arange(k) if pi2 is None else np.asarray(pi2)
    return ProductLabelCover(2, k, s, np.array([0]), np.array([1]), pi1[None], pi2[None], np.array([1.0]))


# -------------------------------------------------------------- label cover


def test_square_two_neighbours():
    lc = LabelCover(1, 2, [0, 0], [0, 1], [[0, 1], [1, 0]], 2, 2)
    plc = square_label_cover(lc)
    pairs = sorted(zip(plc.v1.tolist(), plc.v2.tolist()))
    assert pairs == [(0, 0), (0, 1), (1, 0), (1, 1)]
    np.testing.assert_allclose(plc.weight, 0.25)


def test_square_single_neighbour():
    lc = LabelCover(1, 1, [0], [0], [[0, 1]], 2, 2)
    plc = square_label_cover(lc)
    assert plc.m == 1 and plc.weight[0] == 1.0


def test_square_rejects_irregular():
    lc = LabelCover(2, 2, [0, 0, 1], [0, 1, 0], [[0, 0]] * 3, 2, 1)
    with pytest.raises(GadgetError):
        square_label_cover(lc)


@pytest.mark.parametrize("seed", range(5))
def test_planted_labeling_satisfies_square(seed):
    lc, su, sv = random_label_cover(6, 3, 6, 4, 2, seed)
    assert lc.satisfied(su, sv) == 1.0
    assert square_label_cover(lc).satisfied(sv) == pytest.approx(1.0)


def test_weak_expansion():
    lc, _, _ = random_label_cover(8, 3, 12, 4, 2, 0)
    plc = square_label_cover(lc)
    assert weak_expansion_product(plc, range(plc.n)).weight == pytest.approx(1.0)
    assert weak_expansion_product(plc, []).weight == 0.0
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = rng.choice(plc.n, plc.n // 2, replace=False)
        assert weak_expansion_product(plc, s).ok


def test_weak_expansion_raises_on_bad_weights():
    # all weight on cross pairs: a half set induces nothing
    plc = ProductLabelCover(2, 2, 2, np.array([0]), np.array([1]), np.array([[0, 1]]), np.array([[0, 1]]),
                            np.array([1.0]))
    with pytest.raises(BoundViolation):
        weak_expansion_product(plc, [0])


# ------------------------------------------------------------------ fourier


def test_wht_dictator_and_constant():
    c = walsh_hadamard(BooleanTable.dictator(5, 2))
    expect = np.zeros(32)
    expect[1 << 2] = 1
    np.testing.assert_allclose(c, expect, atol=1e-15)
    c = walsh_hadamard(BooleanTable(4, np.ones(16)))
    assert c[0] == 1 and np.abs(c[1:]).max() == 0


def test_wht_matches_direct_sum():
    rng = np.random.default_rng(1)
    k = 5
    t = BooleanTable(k, rng.choice([-1.0, 1.0], 1 << k))
    direct = [np.mean([t.values[x] * chi(a, x) for x in range(1 << k)]) for a in range(1 << k)]
    np.testing.assert_allclose(walsh_hadamard(t), direct, atol=1e-14)


def test_parseval_on_random_tables():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        k = int(rng.integers(1, 11))
        c = walsh_hadamard(BooleanTable(k, rng.choice([-1.0, 1.0], 1 << k)))
        assert abs(c @ c - 1) <= 1e-12


def test_wht_rejects_oversize():
    with pytest.raises(GadgetError):
        BooleanTable(21, np.ones(2))


@pytest.mark.parametrize("k", range(1, 9))
def test_noise_identity(k):
    for eta in (0.0, 0.05, 0.3, 0.5):
        for a in range(1 << k):
            assert noise_character_mean(a, k, eta) == pytest.approx((1 - 2 * eta) ** pc(a), abs=1e-13)


# ------------------------------------------------------------------ folding


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_folding_invariant(k, seed):
    rng = np.random.default_rng(seed)
    t = BooleanTable.fold(k, rng.integers(0, 2, 1 << k))
    ones = (1 << k) - 1
    assert all(t.values[x ^ ones] == -t.values[x] for x in range(1 << k))
    assert walsh_hadamard(t)[0] == 0
    assert BooleanTable.random_folded(k, rng).is_folded()


def test_fold_keeps_folded_tables():
    d = BooleanTable.dictator(4, 3)
    bits = (1 - d.values) / 2
    np.testing.assert_array_equal(BooleanTable.fold(4, bits).values, d.values)


def test_folded_flag_is_checked():
    with pytest.raises(GadgetError):
        BooleanTable(2, np.ones(4), folded=True)


# --------------------------------------------------------------- acceptance


def accept_oracle(f1, f2, pi1, pi2, k, s, eta):
    """Enumerate every draw of the test for one constraint."""
    ones = (1 << k) - 1
    total = 0.0
    for x in range(1 << s):
        px1 = sum(((x >> int(pi1[i])) & 1) << i for i in range(k))
        px2 = sum(((x >> int(pi2[i])) & 1) << i for i in range(k))
        for y1, y2, r1, r2, b in itertools.product(range(1 << k), range(1 << k), range(1 << k), range(1 << k), (0, 1)):
            w = eta ** (pc(r1) + pc(r2)) * (1 - eta) ** (2 * k - pc(r1) - pc(r2))
            if w == 0:
                continue
            prod = f1[y1 ^ r1] * f1[px1 ^ y1] * f2[y2 ^ r2] * f2[px2 ^ y2 ^ (ones * b)]
            if prod == (-1) ** b:
                total += w
    return total / (1 << s) / (1 << (2 * k)) / 2


@pytest.mark.parametrize("k,s", [(2, 1), (2, 2), (3, 2)])
def test_exact_equals_enumeration(k, s):
    rng = np.random.default_rng(k * 10 + s)
    for trial in range(3):
        pi1, pi2 = rng.integers(0, s, k), rng.integers(0, s, k)
        plc = single_edge(k, s, pi1, pi2)
        tabs = [BooleanTable.random_folded(k, rng), BooleanTable.random_folded(k, rng)]
        eta = float(rng.choice([0.0, 0.05, 0.2]))
        want = accept_oracle(tabs[0].values, tabs[1].values, pi1, pi2, k, s, eta)
        assert acceptance_probability(plc, tabs, eta).value == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_exact_equals_brute_kernel(k):
    lc, _, _ = random_label_cover(3, 2, 3, k, 2, k)
    plc = square_label_cover(lc)
    rng = np.random.default_rng(k)
    tabs = [BooleanTable.random_folded(k, rng) for _ in range(plc.n)]
    for eta in (0.0, 0.1):
        ex = acceptance_probability(plc, tabs, eta, "exact").value
        br = acceptance_probability(plc, tabs, eta, "brute").value
        assert ex == pytest.approx(br, abs=1e-10)


@pytest.mark.parametrize("k", [4, 6])
def test_dictator_completeness(k):
    lc, _, sv = random_label_cover(4, 2, 4, k, 2, k)
    plc = square_label_cover(lc)
    tabs = [BooleanTable.dictator(k, int(v)) for v in sv]
    assert acceptance_probability(plc, tabs, 0.0).value == pytest.approx(1.0, abs=1e-12)
    eta = 0.05
    val = acceptance_probability(plc, tabs, eta).value
    assert val >= 1 - 2 * eta
    # a single dictator edge accepts with 1 - 2 eta + 2 eta^2 exactly
    one = acceptance_probability(single_edge(k), [BooleanTable.dictator(k, 0)] * 2, eta).value
    assert one == pytest.approx(1 - 2 * eta + 2 * eta**2, abs=1e-12)


def test_random_tables_near_half():
    rng = np.random.default_rng(7)
    vals = []
    for _ in range(10):
        tabs = [BooleanTable.random_folded(6, rng) for _ in range(2)]
        acc = acceptance_probability(single_edge(6), tabs, 0.05, "mc", samples=20000, rng=rng)
        assert acc.exact is not None and abs(acc.value - acc.exact) <= 4 * acc.stderr + 1e-3
        vals.append(acc.value)
    assert abs(np.mean(vals) - 0.5) < 0.1


def test_acceptance_rejects_unfolded():
    with pytest.raises(GadgetError):
        acceptance_probability(single_edge(2), [BooleanTable(2, np.ones(4))] * 2, 0.1)
    with pytest.raises(GadgetError):
        acceptance_probability(single_edge(2), [BooleanTable.dictator(2, 0)] * 2, 0.1, mode="guess")


# ------------------------------------------------------------------- decode


def test_decode_dictators():
    lc, _, sv = random_label_cover(4, 2, 4, 5, 2, 3)
    plc = square_label_cover(lc)
    tabs = [BooleanTable.dictator(5, int(v)) for v in sv]
    for r in range(5):
        d = randomized_decode(tabs, plc, rng=r)
        np.testing.assert_array_equal(d.labels, sv)
        assert d.satisfied == pytest.approx(1.0)


def test_decode_two_bit_character():
    n = 400
    plc = ProductLabelCover(n, 4, 2, np.arange(n), np.arange(n), np.zeros((n, 4), int), np.zeros((n, 4), int),
                            np.full(n, 1 / n))
    tabs = [BooleanTable.character(4, 0b0110)] * n
    with pytest.raises(GadgetError):
        randomized_decode(tabs, plc)
    labels = randomized_decode(tabs, plc, rng=0, require_folded=False).labels
    assert set(labels.tolist()) == {1, 2}
    assert abs(np.mean(labels == 1) - 0.5) < 3 * 0.5 / np.sqrt(n)


def test_decode_beats_random_on_noisy_dictators():
    k = 6
    lc, _, sv = random_label_cover(6, 2, 6, k, 2, 11)
    plc = square_label_cover(lc)
    rng = np.random.default_rng(0)
    tabs = []
    for v in sv:
        canon = BooleanTable.dictator(k, int(v)).values[::2].copy()  # values at even points
        flip = rng.random(canon.size) < 0.1
        canon[flip] *= -1
        tabs.append(BooleanTable.from_canonical(k, canon))
    assert acceptance_probability(plc, tabs, 0.05).value >= 0.6
    dec = decode_trials(tabs, plc, 500, rng=1)
    rand = np.mean([plc.satisfied(rng.integers(0, k, plc.n)) for _ in range(500)])
    assert dec > rand


# -------------------------------------------------------------- containment


def containment_brute(eta, k, a, b):
    ones = (1 << k) - 1
    ia, ib = folded_indicator(a, k), folded_indicator(b, k)
    total = 0.0
    n = 1 << k
    for x in range(n):
        for y1, y2, r1, r2 in itertools.product(range(n), repeat=4):
            w = eta ** (pc(r1) + pc(r2)) * (1 - eta) ** (2 * k - pc(r1) - pc(r2))
            if w == 0 or not (ia[y1 ^ r1] and ia[x ^ y1] and ib[y2 ^ r2]):
                continue
            total += w * (ib[x ^ y2] + ib[x ^ y2 ^ ones]) / 2
    return total / n**3


def test_containment_matches_enumeration():
    rng = np.random.default_rng(4)
    k = 3
    for _ in range(3):
        a = rng.choice(4, int(rng.integers(1, 5)), replace=False)
        b = rng.choice(4, int(rng.integers(1, 5)), replace=False)
        rep = query_containment_probability(0.1, k, a, b)
        assert rep.probability == pytest.approx(containment_brute(0.1, k, a, b), abs=1e-12)


def test_containment_trivial_sets():
    full = range(1 << 5)
    rep = query_containment_probability(0.1, 6, full, full)
    assert rep.probability == pytest.approx(1.0) and rep.lower == 0.5 and rep.upper == 1
    rep = query_containment_probability(0.1, 6, [], full)
    assert rep.probability == 0 and rep.upper == 0


def test_containment_bounds_random():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = rng.choice(32, 16, replace=False)
        b = rng.choice(32, 16, replace=False)
        rep = query_containment_probability(0.05, 6, a, b)
        assert rep.ok and 1 / 32 - 1e-12 <= rep.probability <= 0.25 + 1e-12


# -------------------------------------------------------------------- 4-Lin


def _planted_plc(k=4, seed=0):
    lc, _, sv = random_label_cover(4, 2, 4, k, 2, seed)
    return square_label_cover(lc), sv


def test_4lin_noiseless_dictators_satisfy_all():
    plc, sv = _planted_plc()
    inst = build_4lin(plc, 0.0, 500, rng=1)
    assert inst.satisfied(inst.dictator_assignment(sv)) == 1.0


def test_4lin_matches_acceptance():
    plc, sv = _planted_plc()
    eta, m = 0.05, 10000
    inst = build_4lin(plc, eta, m, rng=2)
    p = acceptance_probability(plc, [BooleanTable.dictator(4, int(v)) for v in sv], eta).value
    sigma = np.sqrt(p * (1 - p) / m)
    assert abs(inst.satisfied(inst.dictator_assignment(sv)) - p) <= 3 * sigma


def _cancels(row) -> bool:
    vals, counts = np.unique(row, return_counts=True)
    return bool((counts % 2 == 0).all())


def test_4lin_random_assignment_half():
    plc, _ = _planted_plc()
    inst = build_4lin(plc, 0.05, 20000, rng=3)
    assert (inst.vars >= 0).all() and (inst.vars < inst.n_vars).all()
    # repeated queries cancel in pairs; without noise a fully cancelled constraint is the tautology 0 = 0
    quiet = build_4lin(plc, 0.0, 2000, rng=3)
    cancelled = np.array([_cancels(r) for r in quiet.vars])
    assert cancelled.any() and (quiet.rhs[cancelled] == 0).all()
    degenerate = np.array([_cancels(r) for r in inst.vars])
    live = FourLinInstance(inst.n_tables, inst.k, inst.vars[~degenerate], inst.rhs[~degenerate],
                           inst.weight[~degenerate])
    rng = np.random.default_rng(0)
    vals = [live.satisfied(rng.integers(0, 2, inst.n_vars)) for _ in range(20)]
    assert abs(np.mean(vals) - 0.5) <= 3 * 0.5 / np.sqrt(live.m * 20)


def test_4lin_roundtrip_and_validation():
    plc, _ = _planted_plc()
    inst = build_4lin(plc, 0.1, 50, rng=0)
    back = FourLinInstance.from_dict(inst.to_dict())
    np.testing.assert_array_equal(back.vars, inst.vars)
    with pytest.raises(GadgetError):
        build_4lin(plc, 0.1, 0)
    with pytest.raises(GadgetError):
        FourLinInstance(1, 2, np.zeros((1, 3), int), [0], [1.0])


def test_dense_induced_weight():
    plc, _ = _planted_plc(k=4, seed=1)
    inst = build_4lin(plc, 0.05, 4000, rng=5)
    rng = np.random.default_rng(6)
    alpha = 0.5
    ws = [inst.induced_weight(rng.choice(inst.n_vars, int(alpha * inst.n_vars), replace=False)) for _ in range(100)]
    sigma = np.std(ws) / np.sqrt(len(ws))
    assert np.mean(ws) >= alpha**4 / 16 - 3 * sigma


# ------------------------------------------------------- independent sets


def test_indset_examples():
    assert strong_csp_bruteforce(indset_to_strong_csp(complete_graph(3)))[0] == 1
    assert strong_csp_bruteforce(indset_to_strong_csp(Graph.build(6)))[0] == 6
    size, members = strong_csp_bruteforce(indset_to_strong_csp(star_graph(5)))
    assert size == 5 and 0 not in members.tolist()


def test_indset_agrees_with_oracle():
    rng = np.random.default_rng(8)
    for _ in range(20):
        g = erdos_renyi(int(rng.integers(2, 11)), float(rng.uniform(0.1, 0.7)), rng)
        assert strong_csp_bruteforce(indset_to_strong_csp(g))[0] == mis_oracle(g)
    with pytest.raises(GadgetError):
        strong_csp_bruteforce(indset_to_strong_csp(Graph.build(15)))
