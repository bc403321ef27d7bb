"""d-uniform, d-partite hash graphs and their structural queries.

Vertices are ``(group, bin)`` pairs; edge ``i`` is the set of the ``d`` choices
of key ``i``.  Parallel edges are kept (distinct keys, same choices).

Most of the structure is read off the bipartite incidence graph (vertices and
edges as nodes, one link per membership).  For a connected subgraph its
cyclomatic number equals ``(d-1)|E| + 1 - |V|``, the quantity reported as
*slack*: 0 for a tree, >= 2 for a tight subgraph.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InvariantViolation, ResourceError
from .tabulation import TabulationFn, choices_many

Vertex = tuple  # (group, bin)

TREE = "Tree"
FOREST = "Forest"
TIGHT = "Tight"
D1 = "DoubleCycleD1"
D2 = "DoubleCycleD2"
OTHER = "Other"


@dataclass
class HashGraph:
    d: int
    g: int
    edges: list  # edge id -> tuple of d vertices, one per group
    keys: np.ndarray | None = None
    _inc: dict | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def incidence(self) -> dict:
        """vertex -> sorted list of edge ids containing it."""
        if self._inc is None:
            inc: dict = {}
            for eid, e in enumerate(self.edges):
                for v in e:
                    inc.setdefault(v, []).append(eid)
            self._inc = inc
        return self._inc

    @property
    def vertices(self) -> list:
        return sorted(self.incidence)

    def vertex_set(self, edge_ids: Iterable[int]) -> set:
        out: set = set()
        for eid in edge_ids:
            out.update(self.edges[eid])
        return out

    def slack(self, edge_ids: Iterable[int]) -> int:
        edge_ids = list(edge_ids)
        return (self.d - 1) * len(edge_ids) + 1 - len(self.vertex_set(edge_ids))


def graph_from_choices(choices, d: int, g: int, keys=None) -> HashGraph:
    ch = np.asarray(choices, dtype=np.int64).reshape(-1, d)
    edges = [tuple((i, int(b)) for i, b in enumerate(row)) for row in ch.tolist()]
    return HashGraph(d, g, edges, keys)


def build_graph(keys, f: TabulationFn, d: int, bin_bits: int) -> HashGraph:
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, f.spec.c)
    return graph_from_choices(choices_many(f, keys, d, bin_bits), d, 1 << bin_bits, keys)


@dataclass
class SubgraphReport:
    vertices: list
    edges: list
    classification: str
    slack: int

    @property
    def tight(self) -> bool:
        return self.slack >= 2

    def to_dict(self) -> dict:
        return {
            "vertices": [list(v) for v in self.vertices],
            "edges": list(self.edges),
            "classification": self.classification,
            "slack": self.slack,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def report(G: HashGraph, edge_ids: Iterable[int], classification: str) -> SubgraphReport:
    edge_ids = sorted(set(edge_ids))
    return SubgraphReport(sorted(G.vertex_set(edge_ids)), edge_ids, classification, G.slack(edge_ids))


# --------------------------------------------------------------------------
# Components and the tree characterisation


def components(G: HashGraph, edge_ids: Iterable[int] | None = None) -> list[list[int]]:
    """Edge sets of the connected components, each sorted, ordered by first edge."""
    ids = range(G.m) if edge_ids is None else sorted(set(edge_ids))
    parent: dict = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for eid in ids:
        e = G.edges[eid]
        for v in e:
            parent.setdefault(v, v)
        r0 = find(e[0])
        for v in e[1:]:
            r = find(v)
            if r != r0:
                parent[r] = r0
    groups: dict = {}
    for eid in ids:
        groups.setdefault(find(G.edges[eid][0]), []).append(eid)
    return sorted(groups.values(), key=lambda es: es[0])


def is_connected(G: HashGraph, edge_ids: Sequence[int]) -> bool:
    return len(components(G, edge_ids)) <= 1


def multi_pairs(G: HashGraph, edge_ids: Iterable[int]) -> list[tuple[int, int]]:
    """Pairs of distinct edges sharing two or more vertices."""
    edge_ids = sorted(set(edge_ids))
    chosen = set(edge_ids)
    out = []
    for a in edge_ids:
        shared: Counter = Counter()
        for v in G.edges[a]:
            for b in G.incidence[v]:
                if b > a and b in chosen:
                    shared[b] += 1
        out.extend((a, b) for b, n in sorted(shared.items()) if n >= 2)
    return out


def _incidence_adj(G: HashGraph, edge_ids: Iterable[int]) -> dict:
    adj: dict = {}
    for eid in edge_ids:
        en = ("e", eid)
        adj.setdefault(en, [])
        for v in G.edges[eid]:
            vn = ("v", v)
            adj[en].append(vn)
            adj.setdefault(vn, []).append(en)
    for k in adj:
        adj[k].sort()
    return adj


def incidence_has_cycle(G: HashGraph, edge_ids: Iterable[int]) -> bool:
    adj = _incidence_adj(G, edge_ids)
    seen: dict = {}
    for start in adj:
        if start in seen:
            continue
        seen[start] = None
        stack = [(start, None)]
        while stack:
            node, par = stack.pop()
            for nb in adj[node]:
                if nb == par:
                    continue
                if nb in seen:
                    return True
                seen[nb] = node
                stack.append((nb, node))
    return False


def find_hyper_cycle(G: HashGraph, edge_ids: Iterable[int], budget: int = 1_000_000) -> list[int] | None:
    """A shortest cycle ``(e_1, ..., e_t)``: t >= 3, consecutive edges (cyclically)
    meet in exactly one vertex, all other pairs are disjoint, and the t meeting
    vertices are distinct (this only bites at t = 3, where it rules out three
    edges through a single vertex).

    Depth-first search over edge sequences that start at their smallest edge,
    checking the definition as each edge is appended.  Pairs of edges meeting in
    two or more vertices are never cycles; see ``multi_pairs``.
    """
    edge_ids = sorted(set(edge_ids))
    sets = {e: set(G.edges[e]) for e in edge_ids}
    adj = _edge_adjacency(G, edge_ids)
    steps = [0]

    def search(seq, limit):
        steps[0] += 1
        if steps[0] > budget:
            raise ResourceError(f"cycle search exceeded budget={budget}")
        last, first = seq[-1], seq[0]
        for e in sorted(adj[last]):
            if e <= first or e in seq or len(sets[e] & sets[last]) != 1:
                continue
            if any(sets[e] & sets[x] for x in seq[1:-1]):
                continue
            meet_first = len(sets[e] & sets[first]) if len(seq) > 1 else 0
            if meet_first:
                if meet_first == 1 and len(seq) + 1 == limit and _is_valid_cycle(G, seq + [e]):
                    return seq + [e]
                continue
            if len(seq) + 1 < limit:
                found = search(seq + [e], limit)
                if found:
                    return found
        return None

    for limit in range(3, len(edge_ids) + 1):
        for s in edge_ids:
            found = search([s], limit)
            if found:
                return found
    return None


def _is_valid_cycle(G: HashGraph, seq: Sequence[int]) -> bool:
    t = len(seq)
    if t < 3 or len(set(seq)) != t:
        return False
    sets = [set(G.edges[e]) for e in seq]
    for i in range(t):
        for j in range(i + 1, t):
            inter = len(sets[i] & sets[j])
            adjacent = j == i + 1 or (i == 0 and j == t - 1)
            if adjacent and inter != 1:
                return False
            if not adjacent and inter != 0:
                return False
    meets = {frozenset(sets[i] & sets[(i + 1) % t]) for i in range(t)}
    return len(meets) == t


def is_tree_by_characterization(G: HashGraph, edge_ids: Sequence[int]) -> bool:
    """Connected, no cycle and no pair of edges sharing two or more vertices."""
    edge_ids = list(edge_ids)
    if not edge_ids or not is_connected(G, edge_ids):
        return False
    if multi_pairs(G, edge_ids):
        return False
    # without multi-pairs every incidence cycle contains a chordless one, which is a hypergraph cycle
    return not incidence_has_cycle(G, edge_ids)


@dataclass
class ComponentStats:
    edges: list
    n_vertices: int
    n_edges: int
    slack: int
    classification: str
    tree_by_characterization: bool


def _classify_slack(slack: int) -> str:
    if slack == 0:
        return TREE
    if slack >= 2:
        return TIGHT
    return OTHER


def component_stats(G: HashGraph) -> list[ComponentStats]:
    out = []
    for comp in components(G):
        nv = len(G.vertex_set(comp))
        slack = (G.d - 1) * len(comp) + 1 - nv
        cls = _classify_slack(slack)
        by_char = is_tree_by_characterization(G, comp)
        if by_char != (slack == 0):
            raise InvariantViolation(f"tree characterisation disagrees with counts on component {comp[:5]}...")
        out.append(ComponentStats(comp, nv, len(comp), slack, cls, by_char))
    return out


def is_forest(G: HashGraph, edge_ids: Iterable[int] | None = None) -> bool:
    return all(G.slack(c) == 0 for c in components(G, edge_ids))


# --------------------------------------------------------------------------
# Tight subgraphs


def _edge_adjacency(G: HashGraph, edge_ids: Sequence[int]) -> dict:
    chosen = set(edge_ids)
    adj = {}
    for a in edge_ids:
        nb = set()
        for v in G.edges[a]:
            nb.update(b for b in G.incidence[v] if b != a and b in chosen)
        adj[a] = nb
    return adj


def connected_edge_subsets(G: HashGraph, edge_ids: Sequence[int], max_size: int, budget: list | None = None):
    """Yield every connected edge subset of size <= ``max_size`` exactly once.

    Enumeration follows the ESU scheme: a subset is grown only from its
    smallest edge, extending with exclusive neighbours larger than it.
    ``budget`` is a one-element list decremented per visited subset and shared
    across calls.
    """
    adj = _edge_adjacency(G, sorted(edge_ids))

    def extend(sub, sub_nb, ext, v):
        if budget is not None:
            budget[0] -= 1
            if budget[0] < 0:
                raise ResourceError("subset enumeration budget exhausted")
        yield sub
        if len(sub) == max_size:
            return
        ext = sorted(ext)
        while ext:
            w = ext.pop(0)
            excl = {u for u in adj[w] if u > v and u not in sub_nb}
            yield from extend(sub + (w,), sub_nb | adj[w] | {w}, set(ext) | excl, v)

    for v in sorted(adj):
        yield from extend((v,), adj[v] | {v}, {u for u in adj[v] if u > v}, v)


def find_tight_subgraph(G: HashGraph, max_edges: int = 24, budget: int = 2_000_000) -> SubgraphReport | None:
    """Smallest connected subgraph with ``|V| <= (d-1)|E| - 1``, up to ``max_edges``.

    Only components whose own slack is >= 2 are searched: adding edges to a
    connected subgraph never lowers its slack, so a component with slack < 2
    has no tight subgraph.  Sizes are tried in increasing order.  Raises
    ``ResourceError`` once ``budget`` subsets were visited without a verdict;
    ``partial`` then records the sizes already ruled out.
    """
    if max_edges > 24:
        raise ConfigError("max_edges is capped at 24")
    candidates = [c for c in components(G) if G.slack(c) >= 2]
    left = [budget]
    for size in range(1, max_edges + 1):
        for comp in candidates:
            if len(comp) < size:
                continue
            try:
                for sub in connected_edge_subsets(G, comp, size, left):
                    if len(sub) == size and G.slack(sub) >= 2:
                        return report(G, sub, TIGHT)
            except ResourceError as exc:
                raise ResourceError(str(exc), partial={"no_tight_below": size, "tight_components": len(candidates)}) from None
    return None


def tight_size_exhaustive(G: HashGraph) -> int | None:
    """Minimum |E| over all (not necessarily connected) tight edge subsets."""
    ids = list(range(G.m))
    if len(ids) > 16:
        raise ResourceError("exhaustive search limited to 16 edges")
    for size in range(1, len(ids) + 1):
        for sub in combinations(ids, size):
            if (G.d - 1) * size - 1 >= len(G.vertex_set(sub)):
                return size
    return None


# --------------------------------------------------------------------------
# Double cycles


def _core_topology(G: HashGraph, edge_ids: Sequence[int]) -> str | None:
    """D1/D2 from the shape of the incidence core (cyclomatic number 2)."""
    adj = {k: set(v) for k, v in _incidence_adj(G, edge_ids).items()}
    leaves = deque(k for k, nb in adj.items() if len(nb) <= 1)
    while leaves:
        k = leaves.popleft()
        if k not in adj:
            continue
        for nb in adj.pop(k):
            adj[nb].discard(k)
            if len(adj[nb]) <= 1:
                leaves.append(nb)
    branch = sorted(k for k, nb in adj.items() if len(nb) >= 3)
    links = sum(len(nb) for nb in adj.values()) // 2
    if links - len(adj) + 1 != 2:
        return None
    if len(branch) == 1:
        return D1  # figure eight: two cycles sharing one node
    if len(branch) != 2:
        return None
    b1, b2 = branch
    ends = []
    for start in sorted(adj[b1]):
        prev, cur = b1, start
        while cur not in (b1, b2):
            nxt = next(x for x in adj[cur] if x != prev)
            prev, cur = cur, nxt
        ends.append(cur)
    return D2 if ends.count(b2) == 3 else D1


def find_double_cycle(G: HashGraph, max_pairs: int = 500) -> SubgraphReport | None:
    """A D1 (two cycles joined by a path) or D2 (cycle plus chord path) witness.

    For each component with slack >= 2 a BFS spanning tree of the incidence
    graph is taken; two non-tree links close two fundamental cycles, which
    are joined by the tree path between them when disjoint.  The hyperedges
    used form the candidate; it is accepted when its slack is exactly 2.
    """
    for comp in components(G):
        if G.slack(comp) < 2:
            continue
        found = _double_cycle_in(G, comp, max_pairs)
        if found is not None:
            return found
    return None


def _double_cycle_in(G: HashGraph, comp: list[int], max_pairs: int) -> SubgraphReport | None:
    adj = _incidence_adj(G, comp)
    root = min(k for k in adj if k[0] == "v")
    par = {root: None}
    depth = {root: 0}
    q = deque([root])
    tree_links = set()
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in par:
                par[w] = u
                depth[w] = depth[u] + 1
                tree_links.add(frozenset((u, w)))
                q.append(w)
    extra = sorted({tuple(sorted((u, w))) for u in adj for w in adj[u]
                    if frozenset((u, w)) not in tree_links})

    def path_to_root(x):
        out = [x]
        while par[out[-1]] is not None:
            out.append(par[out[-1]])
        return out

    def tree_path(a, b):
        pa, pb = path_to_root(a), path_to_root(b)
        sb = set(pb)
        meet = next(x for x in pa if x in sb)
        return pa[:pa.index(meet) + 1] + pb[:pb.index(meet)][::-1]

    def fundamental(link):
        u, w = link
        return tree_path(u, w)

    tried = 0
    for l1, l2 in combinations(extra, 2):
        tried += 1
        if tried > max_pairs:
            break
        c1, c2 = fundamental(l1), fundamental(l2)
        nodes = set(c1) | set(c2)
        if not set(c1) & set(c2):
            # shortest tree-path connector between the two cycles
            best = None
            for a in c1:
                for b in c2:
                    p = tree_path(a, b)
                    if best is None or len(p) < len(best):
                        best = p
            nodes |= set(best)
        eids = sorted(n[1] for n in nodes if n[0] == "e")
        if G.slack(eids) != 2:
            continue
        cls = _core_topology(G, eids)
        if cls is not None:
            return report(G, eids, cls)
    return None
