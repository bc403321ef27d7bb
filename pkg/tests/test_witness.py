import numpy as np
import pytest

from tabhash import allocation as al
from tabhash import hashgraph as hg
from tabhash import witness as wt
from tabhash.errors import InputError, ResourceError


def state_graph(choices, d, bin_bits, tie=al.TieBreak.ALWAYS_GO_LEFT, seed=0):
    st = al.allocate_choices(choices, d, bin_bits, tie, tie_seed=seed)
    return st, hg.graph_from_choices(st.choices, d, st.g)


def test_k0_load_graph_is_root_only():
    st, G = state_graph([(0, 0)], 2, 2)
    L = wt.build_load_graph(st, G, (0, 0), 0)
    assert L.edges == frozenset() and L.vertices == {(0, 0)} and L.height == 0


def test_k1_plain_is_first_edge():
    st, G = state_graph([(0, 0), (0, 1)], 2, 2)
    L = wt.build_load_graph(st, G, (0, 0), 1)
    assert L.edges == {0} and L.vertices == {(0, 0), (1, 0)}


def test_insufficient_load():
    st, G = state_graph([(0, 0)], 2, 2)
    with pytest.raises(InputError):
        wt.build_load_graph(st, G, (0, 0), 2)


def test_hand_built_b22_is_dnomial():
    # v=(0,0) gets ball 0; ball 1 lands in (0,1), ball 2 then prefers (1,1);
    # ball 3 ties on v and (1,1) and goes left, so v's 2nd edge is {v, (1,1)}
    st, G = state_graph([(0, 0), (1, 1), (1, 1), (0, 1)], 2, 2)
    L = wt.build_load_graph(st, G, (0, 0), 2)
    assert L.edges == {0, 2, 3} and L.slack == 0
    w = wt.classify_witness(L)
    assert (w.kind, w.order) == ("DNomial", 2)


def test_repeated_edge_is_tight():
    st, G = state_graph([(0, 0)] * 3, 2, 2)
    L = wt.build_load_graph(st, G, (0, 0), 2)
    assert L.slack == 2
    w = wt.classify_witness(L)
    assert w.kind == "Tight" and w.report.slack >= 2


def test_extract_rejects_non_tight():
    st, G = state_graph([(0, 0), (1, 1), (1, 1), (0, 1)], 2, 2)
    with pytest.raises(InputError):
        wt.extract_small_tight(wt.build_load_graph(st, G, (0, 0), 2))


def test_goleft_recursion_follows_earlier_groups_at_same_level():
    # d=2: a ball at (1,b) had its group-0 endpoint at load >= its own level
    st, G = state_graph([(0, 0), (0, 0)], 2, 2)
    assert st.placed_group.tolist() == [0, 1]
    L = wt.build_load_graph(st, G, (1, 0), 1, wt.Variant.GO_LEFT)
    assert L.edges == {0, 1}
    w = wt.classify_witness(L)
    assert w.kind in ("FibTree", "Tight", "DNomial")


def random_states(d, tie, n_states, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_states):
        bb = int(rng.integers(3, 6))
        m = int(rng.integers(2, 5) * (d << bb))
        ch = rng.integers(0, 1 << bb, size=(m, d))
        yield al.allocate_choices(ch, d, bb, tie, tie_seed=int(rng.integers(1 << 30)))


@pytest.mark.parametrize("d", [2, 3])
def test_height_bounds(d):
    for st in random_states(d, al.TieBreak.ALWAYS_GO_LEFT, 100, d):
        G = hg.graph_from_choices(st.choices, d, st.g)
        v = al.fullest_bin(st)
        K = int(st.loads[v])
        L = wt.build_load_graph(st, G, v, K, wt.Variant.GO_LEFT)
        assert L.height <= d * (K - 1) + L.group
        P = wt.build_load_graph(st, G, v, K, wt.Variant.PLAIN)
        assert P.height <= K


@pytest.mark.parametrize("d,tie", [(2, al.TieBreak.SEEDED_RANDOM), (3, al.TieBreak.SEEDED_RANDOM),
                                   (2, al.TieBreak.ALWAYS_GO_LEFT), (3, al.TieBreak.ALWAYS_GO_LEFT)])
def test_classify_never_other(d, tie):
    variant = wt.Variant.GO_LEFT if tie is al.TieBreak.ALWAYS_GO_LEFT else wt.Variant.PLAIN
    kinds = set()
    for st in random_states(d, tie, 120, 10 + d):
        G = hg.graph_from_choices(st.choices, d, st.g)
        v = al.fullest_bin(st)
        for K in range(1, int(st.loads[v]) + 1):
            L = wt.build_load_graph(st, G, v, K, variant)
            w = wt.classify_witness(L)
            kinds.add(w.kind)
            assert w.kind != "Other", (K, sorted(L.edges))
            if w.kind == "Tight":
                r = w.report
                assert len(r.vertices) <= (d - 1) * len(r.edges) - 1
                assert hg.is_connected(G, r.edges) and set(r.edges) <= L.edges
                assert len(r.edges) <= 4 * L.height + 2
                if variant is wt.Variant.PLAIN:
                    assert len(r.edges) <= 4 * ((K - 1) + 2)
            else:
                assert w.order in (K, K - 1)
    assert "Tight" in kinds and kinds & {"DNomial", "FibTree"}


def test_tree_load_graphs_have_exact_order():
    for st in random_states(2, al.TieBreak.SEEDED_RANDOM, 60, 99):
        G = hg.graph_from_choices(st.choices, 2, st.g)
        for v in [(0, b) for b in range(st.g)]:
            K = int(st.loads[v])
            if K == 0:
                continue
            L = wt.build_load_graph(st, G, v, K)
            if L.slack == 0:
                assert len(L.edges) == wt.dnomial_edges(2, K)
                assert wt.embedded_order(G, L.edges, v, wt.Variant.PLAIN) >= K


def test_witness_to_dict():
    st, G = state_graph([(0, 0)] * 3, 2, 2)
    d = wt.classify_witness(wt.build_load_graph(st, G, (0, 0), 2)).to_dict()
    assert d["kind"] == "Tight" and d["subgraph"]["slack"] >= 2


# -- abstract trees and counts ------------------------------------------------


def test_single_node_trees():
    for d in (2, 3, 4):
        assert wt.build_dnomial(d, 0).n_nodes == 1 and not wt.build_dnomial(d, 0).edges
        for i in range(1, d + 1):
            assert wt.build_fib_tree(d, i, 0).n_nodes == 1


def test_dnomial_sizes():
    assert len(wt.build_dnomial(2, 3).edges) == 7
    for d in (2, 3, 4):
        for k in range(6):
            t = wt.build_dnomial(d, k)
            assert len(t.edges) == wt.dnomial_edges(d, k)
            assert t.vertex_count() == d**k


def test_fib_tree_sizes_follow_recursion():
    for d in (2, 3):
        for i in range(1, d + 1):
            for k in range(6):
                t = wt.build_fib_tree(d, i, k)
                assert len(t.edges) == wt.fib_tree_edges(d, i, k)
                assert all(len(ch) == d - 1 for _, ch in t.edges)
    # independent table of the recursion: root continues as S_i(k-1), endpoints in
    # earlier groups root S_j(k), later ones S_j(k-1)
    for d in (2, 3):
        size = {(i, 0): 0 for i in range(1, d + 1)}
        for k in range(1, 6):
            for i in range(1, d + 1):
                size[i, k] = 1 + size[i, k - 1] + sum(size[j, k] for j in range(1, i)) + sum(
                    size[j, k - 1] for j in range(i + 1, d + 1))
        assert all(wt.fib_tree_edges(d, i, k) == v for (i, k), v in size.items())
    # d = 2 closed form: S_i(k) spans F(2k + i) vertices, hence F(2k + i) - 1 edges
    for i in (1, 2):
        for k in range(8):
            assert wt.fib_tree_edges(2, i, k) == al.fib_d(2, 2 * k + i) - 1
            if k < 6:
                assert wt.build_fib_tree(2, i, k).vertex_count() == al.fib_d(2, 2 * k + i)


def test_generator_caps():
    with pytest.raises(ResourceError):
        wt.build_dnomial(3, 20)
    with pytest.raises(InputError):
        wt.build_fib_tree(2, 3, 2)


def test_prune_examples():
    t = wt.prune(wt.build_dnomial(2, 3), 2)
    assert len(t.edges) == 5 and wt.internal_count(t) == 2
    for d in (2, 3):
        for k in range(1, 5):
            assert len(wt.prune(wt.build_dnomial(d, k), k).edges) == k
    for ell in range(1, 5):
        assert len(wt.prune(wt.build_fib_tree(2, 1, ell), ell).edges) == ell
        assert wt.pruned_fib_edges(3, 1, ell, ell) == ell


def test_t_formula_independent_evaluation():
    # direct evaluation of the closed forms, compared to the constructed trees
    for d in (2, 3):
        for k in range(7):
            for ell in range(k + 1):
                s = wt.WitnessShape(d, k, ell)
                t = s.build()
                assert len(t.edges) == ell * d ** (k - ell) + sum(d**j for j in range(k - ell))
                assert t.vertex_count() == ((d - 1) * ell + 1) * d ** (k - ell)


@pytest.mark.parametrize("d", [2, 3])
def test_validate_counts_range(d):
    for k in range(7):
        for ell in range(k + 1):
            assert wt.validate_counts(wt.WitnessShape(d, k, ell))
            for i in range(1, d + 1):
                assert wt.validate_counts(wt.WitnessShape(d, k, ell, i, "P"))


def test_validate_counts_catches_wrong_formula():
    class Wrong(wt.WitnessShape):
        @property
        def expected_edges(self):
            return super().expected_edges + 1

    assert not wt.validate_counts(Wrong(2, 3, 1))


def test_fib_sandwich_direct():
    for d in (2, 3):
        for k in range(1, 7):
            for ell in range(1, k + 1):
                for i in range(1, d + 1):
                    e = len(wt.WitnessShape(d, k, ell, i, "P").build().edges)
                    base = d * (k - ell) + i
                    assert ell * al.fib_d(d, base + 1) <= e <= ell * al.fib_d(d, base + 2)
