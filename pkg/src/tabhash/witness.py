"""Load graphs, witness trees and their pruned counts.

A load graph records how a bin obtained its first ``k`` balls: the edge of
the ``k``-th arrival plus, recursively, the load graphs of that edge's other
endpoints one level down.  Under Always-Go-Left, endpoints in earlier groups
are followed at the same level because they were already at least as full.

When a load graph is a hypertree it is exactly a d-nomial tree ``B_k`` (plain)
or a d-ary Fibonacci tree ``S_i(k)`` (Always-Go-Left).  Otherwise it is either
one edge away from such a tree one level lower, or it is tight, and then a
tight subgraph of size linear in its height can be cut out of it.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

from .allocation import LoadState, fib_d
from .errors import InputError, InvariantViolation, ResourceError
from .hashgraph import TIGHT, HashGraph, SubgraphReport, components, report

TREE_EDGE_CAP = 10**6


class Variant(enum.Enum):
    PLAIN = "plain"
    GO_LEFT = "goleft"


@dataclass
class LoadGraph:
    graph: HashGraph
    root: tuple
    k: int
    variant: Variant
    edges: frozenset
    depth: dict = field(default_factory=dict)  # vertex -> BFS distance (in edges) from root

    @property
    def vertices(self) -> set:
        return self.graph.vertex_set(self.edges) if self.edges else {self.root}

    @property
    def slack(self) -> int:
        return (self.graph.d - 1) * len(self.edges) + 1 - len(self.vertices)

    @property
    def height(self) -> int:
        return max(self.depth.values(), default=0)

    @property
    def group(self) -> int:
        """1-based group index of the root."""
        return self.root[0] + 1


def build_load_graph(state: LoadState, G: HashGraph, v: tuple, k: int,
                     variant: Variant = Variant.PLAIN) -> LoadGraph:
    v = (int(v[0]), int(v[1]))
    if state.loads[v] < k:
        raise InputError(f"bin {v} has load {int(state.loads[v])} < {k}")
    if G.m != state.m:
        raise InputError("hash graph and load state cover different key sequences")
    arrivals: dict = {}
    memo: dict = {}

    def arr(w):
        if w not in arrivals:
            arrivals[w] = state.arrivals(w)
        return arrivals[w]

    def rec(w, j):
        if j == 0:
            return frozenset()
        key = (w, j)
        if key in memo:
            return memo[key]
        seq = arr(w)
        if len(seq) < j:
            raise InputError(f"bin {w} needs load {j} for the load graph but has {len(seq)}")
        e = seq[j - 1]
        out = {e}
        for u in G.edges[e]:
            if variant is Variant.GO_LEFT and u[0] < w[0]:
                out |= rec(u, j)
            else:
                out |= rec(u, j - 1)
        memo[key] = frozenset(out)
        return memo[key]

    edges = rec(v, k)
    return LoadGraph(G, v, k, variant, edges, _bfs_depths(G, v, edges))


def _bfs_depths(G: HashGraph, root, edges) -> dict:
    inc: dict = {}
    for e in edges:
        for u in G.edges[e]:
            inc.setdefault(u, []).append(e)
    depth = {root: 0}
    q = deque([root])
    while q:
        u = q.popleft()
        for e in sorted(inc.get(u, ())):
            for w in G.edges[e]:
                if w not in depth:
                    depth[w] = depth[u] + 1
                    q.append(w)
    return depth


# --------------------------------------------------------------------------
# Witness tree sizes


def dnomial_edges(d: int, k: int) -> int:
    return (d**k - 1) // (d - 1)


@lru_cache(maxsize=None)
def fib_tree_edges(d: int, i: int, k: int) -> int:
    """|E(S_i(k))|, groups 1-based."""
    if k == 0:
        return 0
    return 1 + sum(fib_tree_edges(d, j, k) for j in range(1, i)) + sum(
        fib_tree_edges(d, j, k - 1) for j in range(i, d + 1))


def embedded_order(G: HashGraph, edges, root, variant: Variant) -> int:
    """Largest k such that B_k (or S_i(k), i the root's group) is rooted at ``root``.

    ``edges`` must form a hyperforest.  In a tree the branches behind distinct
    edges at a vertex are disjoint, so a vertex of order ``t`` needs edges
    ``e_1..e_t`` where the far endpoints of ``e_s`` have order ``s - 1``
    (plain).  For Always-Go-Left, endpoints in earlier groups need order ``s``
    and those in later groups ``s - 1``.
    """
    inc: dict = {}
    for e in edges:
        for u in G.edges[e]:
            inc.setdefault(u, []).append(e)
    memo: dict = {}

    def order(u, parent_edge):
        key = (u, parent_edge)
        if key in memo:
            return memo[key]
        caps = []
        for e in inc.get(u, ()):
            if e == parent_edge:
                continue
            others = [w for w in G.edges[e] if w != u]
            if variant is Variant.PLAIN:
                caps.append(1 + min(order(w, e) for w in others))
            else:
                lim = float("inf")
                for w in others:
                    ow = order(w, e)
                    lim = min(lim, ow if w[0] < u[0] else ow + 1)
                caps.append(lim)
        t = 0
        for cap in sorted(caps):
            if cap >= t + 1:
                t += 1
        memo[key] = t
        return t

    return order(root, None)


# --------------------------------------------------------------------------
# Classification


@dataclass
class Witness:
    kind: str  # "DNomial" | "FibTree" | "Tight" | "Other"
    order: int | None = None
    group: int | None = None  # 1-based, FibTree only
    report: SubgraphReport | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "order": self.order, "group": self.group}
        if self.report is not None:
            out["subgraph"] = self.report.to_dict()
        return out


def _tree_witness(L: LoadGraph, order: int) -> Witness:
    if L.variant is Variant.PLAIN:
        return Witness("DNomial", order)
    return Witness("FibTree", order, L.group)


def classify_witness(L: LoadGraph) -> Witness:
    """Which witness a bin of load ``L.k`` certifies.

    * tree: checks it is exactly ``B_k`` / ``S_i(k)`` and reports order ``L.k``;
    * slack 1: drops one edge to get a tree and reports the order ``L.k - 1``
      tree found rooted at the bin;
    * tight: returns the small tight subgraph from ``extract_small_tight``.
    """
    G, d, K = L.graph, L.graph.d, L.k
    slack = L.slack
    if slack == 0:
        want = dnomial_edges(d, K) if L.variant is Variant.PLAIN else fib_tree_edges(d, L.group, K)
        if len(L.edges) == want and embedded_order(G, L.edges, L.root, L.variant) >= K:
            return _tree_witness(L, K)
        return Witness("Other", K)
    if slack >= 2:
        return Witness("Tight", K, report=extract_small_tight(L))
    for e in sorted(L.edges):
        rest = L.edges - {e}
        comp = next((c for c in components(G, rest) if L.root in G.vertex_set(c)), [])
        if G.slack(comp) != 0 and comp:
            continue
        if embedded_order(G, comp, L.root, L.variant) >= K - 1:
            return _tree_witness(L, K - 1)
    return Witness("Other", K)


def extract_small_tight(L: LoadGraph) -> SubgraphReport:
    """Cut a tight subgraph with O(height) edges out of a tight load graph.

    Edges are added in order of BFS layer from the root (layer ``i`` = edges
    touching a vertex reached by layer ``i-1``), keeping the prefix connected.
    Let ``i`` be the first prefix with slack >= 1 and ``j >= i`` the first with
    slack >= 2.  The edge closing each step meets the earlier prefix in two
    (three when ``i == j``) vertices; joining those vertices to the root by
    shortest paths and adding the closing edges gives a tight subgraph with at
    most ``4*height + 2`` edges.
    """
    G, d = L.graph, L.graph.d
    if L.slack < 2:
        raise InputError(f"load graph slack {L.slack} < 2, not tight")
    order = _layered_edges(G, L.root, L.edges)
    seen: set = {L.root}
    slack = 0
    count = 0
    i_pos = j_pos = None
    for pos, e in enumerate(order):
        new = [u for u in G.edges[e] if u not in seen]
        slack += (d - 1) - len(new)
        count += 1
        seen.update(new)
        if i_pos is None and slack >= 1:
            i_pos = pos
        if slack >= 2:
            j_pos = pos
            break
    assert i_pos is not None and j_pos is not None

    def prefix_vertices(n):
        out = {L.root}
        for e in order[:n]:
            out.update(G.edges[e])
        return out

    def shared(pos, need):
        before = prefix_vertices(pos)
        return sorted(u for u in G.edges[order[pos]] if u in before)[:need]

    chosen = set()
    if i_pos == j_pos:
        for u in shared(i_pos, 3):
            chosen |= _root_path(G, L.root, order[:i_pos], u)
        chosen.add(order[i_pos])
    else:
        for u in shared(i_pos, 2):
            chosen |= _root_path(G, L.root, order[:i_pos], u)
        chosen.add(order[i_pos])
        for u in shared(j_pos, 2):
            chosen |= _root_path(G, L.root, order[:j_pos], u)
        chosen.add(order[j_pos])
    rep = report(G, chosen, TIGHT)
    if rep.slack < 2:
        raise InvariantViolation(f"extracted subgraph has slack {rep.slack}")
    return rep


def _layered_edges(G: HashGraph, root, edges) -> list:
    layer_of: dict = {}
    reached = {root}
    layer = 0
    remaining = set(edges)
    while remaining:
        layer += 1
        hit = sorted((e for e in remaining if any(u in reached for u in G.edges[e])),
                     key=lambda e: (tuple(sorted(G.edges[e])), e))
        if not hit:
            break
        for e in hit:
            layer_of[e] = layer
            remaining.discard(e)
        for e in hit:
            reached.update(G.edges[e])
    return sorted(layer_of, key=lambda e: (layer_of[e], tuple(sorted(G.edges[e])), e))


def _root_path(G: HashGraph, root, edges, target) -> set:
    """Edges of a shortest path from ``target`` to ``root`` inside ``edges``.

    Ties are broken towards lexicographically smaller (group, bin) vertices.
    """
    if target == root:
        return set()
    inc: dict = {}
    for e in edges:
        for u in G.edges[e]:
            inc.setdefault(u, []).append(e)
    par = {root: None}
    q = deque([root])
    while q:
        u = q.popleft()
        if u == target:
            break
        for e in sorted(inc.get(u, ()), key=lambda e: (tuple(sorted(G.edges[e])), e)):
            for w in sorted(G.edges[e]):
                if w not in par:
                    par[w] = (u, e)
                    q.append(w)
    if target not in par:
        raise InvariantViolation(f"{target} unreachable from the root inside the prefix")
    out = set()
    cur = target
    while par[cur] is not None:
        cur, e = par[cur]
        out.add(e)
    return out


# --------------------------------------------------------------------------
# Abstract witness trees


@dataclass
class RootedTree:
    """Rooted d-uniform hypertree on nodes ``0..n-1``; node 0 is the root.

    ``edges[j] = (parent, children)``; ``group[v]`` is the 1-based group label.
    """

    d: int
    group: list
    edges: list

    @property
    def n_nodes(self) -> int:
        return len(self.group)

    def child_edges(self) -> dict:
        out: dict = {}
        for j, (p, _) in enumerate(self.edges):
            out.setdefault(p, []).append(j)
        return out

    def vertex_count(self) -> int:
        if not self.edges:
            return 1
        used = {0}
        for p, ch in self.edges:
            used.add(p)
            used.update(ch)
        return len(used)


class _Builder:
    def __init__(self, d, cap):
        self.d, self.cap = d, cap
        self.group: list = []
        self.edges: list = []

    def node(self, grp):
        self.group.append(grp)
        return len(self.group) - 1

    def edge(self, parent, children):
        if len(self.edges) >= self.cap:
            raise ResourceError(f"witness tree exceeds {self.cap} edges")
        self.edges.append((parent, tuple(children)))


def build_dnomial(d: int, k: int, cap: int = TREE_EDGE_CAP) -> RootedTree:
    """B_{d,k}: an edge whose d endpoints each root a B_{d,k-1}."""
    if dnomial_edges(d, k) > cap:
        raise ResourceError(f"B_{{{d},{k}}} has {dnomial_edges(d, k)} edges > cap={cap}")
    b = _Builder(d, cap)

    def rec(kk, grp):
        if kk == 0:
            return b.node(grp)
        root = rec(kk - 1, grp)
        kids = [rec(kk - 1, j) for j in range(1, d + 1) if j != grp]
        b.edge(root, kids)
        return root

    rec(k, 1)
    return RootedTree(d, b.group, b.edges)


def build_fib_tree(d: int, i: int, k: int, cap: int = TREE_EDGE_CAP) -> RootedTree:
    """S_i(k): endpoints in groups j < i root S_j(k), the others S_j(k-1)."""
    if not 1 <= i <= d:
        raise InputError(f"group index {i} outside [1, {d}]")
    if fib_tree_edges(d, i, k) > cap:
        raise ResourceError(f"S_{i}({k}) has {fib_tree_edges(d, i, k)} edges > cap={cap}")
    b = _Builder(d, cap)

    def rec(ii, kk):
        if kk == 0:
            return b.node(ii)
        root = rec(ii, kk - 1)
        kids = [rec(j, kk) if j < ii else rec(j, kk - 1) for j in range(1, d + 1) if j != ii]
        b.edge(root, kids)
        return root

    rec(i, k)
    return RootedTree(d, b.group, b.edges)


def prune(tree: RootedTree, ell: int) -> RootedTree:
    """Drop the subtree below every vertex with fewer than (d-1)*ell children.

    Repeats until nothing changes.  The vertex itself stays, as a leaf.
    """
    edges = list(tree.edges)
    while True:
        kids: dict = {}
        for p, ch in edges:
            kids[p] = kids.get(p, 0) + len(ch)
        weak = {v for v, c in kids.items() if c < (tree.d - 1) * ell}
        if not weak:
            break
        below: set = set()
        children_of: dict = {}
        for p, ch in edges:
            children_of.setdefault(p, []).extend(ch)
        stack = list(weak)
        while stack:
            v = stack.pop()
            for c in children_of.get(v, ()):
                if c not in below:
                    below.add(c)
                    stack.append(c)
        edges = [(p, ch) for p, ch in edges if p not in weak and p not in below]
    return RootedTree(tree.d, tree.group, edges)


def internal_count(tree: RootedTree) -> int:
    return len({p for p, _ in tree.edges})


def leaf_parent_count(tree: RootedTree, ell: int) -> int:
    """Vertices with at least ``ell`` child edges whose children are all leaves."""
    parents = {p for p, _ in tree.edges}
    tally: dict = {}
    for p, ch in tree.edges:
        if not any(c in parents for c in ch):
            tally[p] = tally.get(p, 0) + 1
    if ell == 0:
        return tree.vertex_count()
    return sum(1 for n in tally.values() if n >= ell)


@dataclass(frozen=True)
class WitnessShape:
    """Parameters of a pruned witness tree and its closed-form counts.

    ``kind`` is ``"T"`` for the ell-pruned d-nomial tree T_{k,ell} and ``"P"``
    for the ell-pruned Fibonacci tree P_{i,ell}(k).
    """

    d: int
    k: int
    ell: int
    i: int = 1
    kind: str = "T"

    @property
    def expected_edges(self) -> int:
        d, k, ell = self.d, self.k, self.ell
        if self.kind == "T":
            return ell * d ** (k - ell) + (d ** (k - ell) - 1) // (d - 1)
        return pruned_fib_edges(d, self.i, ell, k)

    @property
    def expected_internal(self) -> int:
        """d^(k-ell) for T; F_d(d(k-ell)+i) leaf-parents for P."""
        if self.kind == "T":
            return self.d ** (self.k - self.ell)
        return fib_d(self.d, self.d * (self.k - self.ell) + self.i)

    @property
    def expected_vertices(self) -> int | None:
        if self.kind == "T":
            return ((self.d - 1) * self.ell + 1) * self.d ** (self.k - self.ell)
        return None

    def build(self) -> RootedTree:
        if self.kind == "T":
            return prune(build_dnomial(self.d, self.k), self.ell)
        return prune(build_fib_tree(self.d, self.i, self.k), self.ell)


@lru_cache(maxsize=None)
def pruned_fib_edges(d: int, i: int, ell: int, k: int) -> int:
    """|E(P_{i,ell}(k))| from the level recursion, ell * 2^(i-1) at k = ell."""
    if k < ell:
        return 0
    if k == ell:
        return ell * 2 ** (i - 1)
    return 1 + sum(pruned_fib_edges(d, j, ell, k) for j in range(1, i)) + sum(
        pruned_fib_edges(d, j, ell, k - 1) for j in range(i, d + 1))


def fib_sandwich(d: int, i: int, ell: int, k: int, edges: int) -> bool:
    """ell*F_d(d(k-ell)+i+1) <= edges <= ell*F_d(d(k-ell)+i+2)."""
    base = d * (k - ell) + i
    return ell * fib_d(d, base + 1) <= edges <= ell * fib_d(d, base + 2)


def validate_counts(shape: WitnessShape) -> bool:
    """Build and prune the tree, then compare every count to its formula."""
    tree = shape.build()
    ok = len(tree.edges) == shape.expected_edges
    if shape.kind == "T":
        ok &= leaf_parent_count(tree, shape.ell) == shape.expected_internal
        ok &= tree.vertex_count() == shape.expected_vertices
        if shape.ell >= 1:
            ok &= internal_count(tree) == shape.expected_internal
    elif shape.ell >= 1:
        # at ell = 0 nothing is pruned and both bounds collapse to 0; only the edge count applies
        ok &= fib_sandwich(shape.d, shape.i, shape.ell, shape.k, len(tree.edges))
        ok &= leaf_parent_count(tree, shape.ell) == shape.expected_internal
    return bool(ok)
