import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabhash import cuckoo as ck
from tabhash import hashgraph as hg
from tabhash import tabulation as tb
from tabhash.errors import InputError, ResourceError

SPEC = tb.KeySpec(2, 8)


def fixed_views(pairs, bin_bits=3):
    """Two hand-built c=1 functions: key (i,) hashes to pairs[i]."""
    n = 1 << bin_bits
    spec = tb.KeySpec(1, 4)
    t0 = [0] * 16
    t1 = [0] * 16
    for i, (a, b) in enumerate(pairs):
        t0[i], t1[i] = a, b
    return spec, (tb.tabulation_from_tables(spec, bin_bits, [t0]), tb.tabulation_from_tables(spec, bin_bits, [t1]))


def keys_for(pairs):
    return [(i,) for i in range(len(pairs))]


def test_distinct_choices_all_in_t0():
    pairs = [(0, 1), (1, 2), (2, 3)]
    _, views = fixed_views(pairs)
    table = ck.CuckooTable(3, views)
    res = ck.insert_all(keys_for(pairs), table)
    assert res.placed_all and res.kicks == 0
    assert [table.slots[0][a] for a, _ in pairs] == keys_for(pairs)


def test_three_keys_same_pair_fail_at_3():
    pairs = [(4, 4)] * 3
    _, views = fixed_views(pairs)
    res = ck.insert_all(keys_for(pairs), ck.CuckooTable(3, views))
    assert not res.placed_all and res.failed_at == 3 and res.pending is not None
    assert not ck.feasibility_oracle(keys_for(pairs), views, 3)


def test_duplicate_keys_rejected():
    _, views = fixed_views([(0, 0)])
    with pytest.raises(InputError):
        ck.insert_all([(0,), (0,)], ck.CuckooTable(3, views))


def test_default_budget():
    _, views = fixed_views([(0, 0)], bin_bits=10)
    assert ck.CuckooTable(10, views).kick_budget == 10 * 11


def test_oracle_examples():
    forest = np.array([(0, 0), (0, 1), (1, 1)])
    unicyclic = np.array([(0, 0), (0, 1), (1, 1), (1, 0)])
    theta = np.array([(0, 0), (0, 0), (0, 0)])
    assert ck.components_feasible(forest, 4) and ck.orientation_exists(forest)
    assert ck.components_feasible(unicyclic, 4) and ck.orientation_exists(unicyclic)
    assert not ck.components_feasible(theta, 4) and not ck.orientation_exists(theta)
    with pytest.raises(ResourceError):
        ck.orientation_exists(np.zeros((20, 2), dtype=int))


def test_unicyclic_fixtures_up_to_8_edges():
    # an even cycle of length 2r in the bipartite graph plus pendant edges
    for r in range(1, 5):
        cyc = [(i, i) for i in range(r)] + [(i, (i + 1) % r) for i in range(r)]
        extra = [(r + j, j) for j in range(8 - len(cyc))] if len(cyc) < 8 else []
        ch = np.array(cyc + extra)
        assert ck.orientation_exists(ch) and ck.components_feasible(ch, 16)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=12))
@settings(max_examples=300, deadline=None)
def test_oracle_matches_brute_force(pairs):
    ch = np.array(pairs)
    assert ck.components_feasible(ch, 6) == ck.orientation_exists(ch)


def test_oracle_agrees_with_hash_graph_density():
    rng = np.random.default_rng(0)
    for _ in range(200):
        ch = rng.integers(0, 6, size=(int(rng.integers(1, 14)), 2))
        G = hg.graph_from_choices(ch, 2, 6)
        dense = any(len(c) > len(G.vertex_set(c)) for c in hg.components(G))
        assert ck.components_feasible(ch, 6) == (not dense)


def test_inserter_matches_oracle_1000_instances():
    rng = np.random.default_rng(1)
    for t in range(1000):
        bb = int(rng.integers(2, 10))
        n = 2 << bb
        m = int(rng.integers(1, max(2, (1 << bb) + 2)))
        keys = SPEC.random_keys(rng, m)
        f = tb.make_tabulation(t, SPEC, 2 * bb)
        table = ck.CuckooTable(bb, (f,), kick_budget=10 * math.ceil(math.log2(n)) * n)
        res = ck.insert_all(keys, table)
        assert res.placed_all == ck.feasibility_oracle(keys, (f,), bb)
        if res.placed_all:
            stored = table.stored()
            assert len(stored) == m and len(set(stored)) == m
            assert all(table.contains(x) for x in keys.tolist())
            for side in (0, 1):
                for idx, x in enumerate(table.slots[side]):
                    if x is not None:
                        assert table.choices([x])[0][side] == idx


def test_two_function_views():
    f0 = tb.make_tabulation(1, SPEC, 6)
    f1 = tb.make_tabulation(2, SPEC, 6)
    keys = SPEC.random_keys(np.random.default_rng(2), 20)
    table = ck.CuckooTable(6, (f0, f1), kick_budget=10_000)
    res = ck.insert_all(keys, table)
    assert res.placed_all == ck.feasibility_oracle(keys, (f0, f1), 6)


def test_rebuild_determinism():
    keys = SPEC.random_keys(np.random.default_rng(3), 100)
    f = tb.make_tabulation(3, SPEC, 16)
    a, b = ck.CuckooTable(8, (f,)), ck.CuckooTable(8, (f,))
    assert ck.insert_all(keys, a) == ck.insert_all(keys, b)
    assert a.slots == b.slots


def test_wilson_interval():
    assert ck.wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = ck.wilson_interval(0, 200)
    assert lo == 0.0 and hi == pytest.approx(0.018845, abs=1e-5)
    lo, hi = ck.wilson_interval(200, 200)
    assert hi == 1.0 and lo == pytest.approx(1 - 0.018845, abs=1e-5)
    # textbook value: 10 successes in 100 trials -> (0.0552, 0.1744)
    lo, hi = ck.wilson_interval(10, 100)
    assert lo == pytest.approx(0.05523, abs=1e-4) and hi == pytest.approx(0.17437, abs=1e-4)


def test_failure_experiment_sparse_and_validation():
    [row] = ck.failure_experiment([1024], eps=100.0, trials=20, seed=0)
    assert row.failures == 0 and row.m == 5
    with pytest.raises(InputError):
        ck.failure_experiment([1000], 0.5, 1, 0)
    a = ck.failure_experiment([256], 0.5, 30, 7)
    assert a == ck.failure_experiment([256], 0.5, 30, 7)
