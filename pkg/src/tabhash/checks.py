"""Oracle-backed check suites shared by ``depstats``, ``selftest`` and the tests.

Each suite returns a ``SuiteResult``; ``violations`` counts instances where the
fast path and its independent oracle (or a proven bound) disagree.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import allocation as al
from . import cuckoo as ck
from . import hashgraph as hg
from . import tabulation as tb
from . import witness as wt


@dataclass
class SuiteResult:
    name: str
    instances: int = 0
    violations: int = 0
    detail: dict = field(default_factory=dict)
    first_failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def fail(self, why: str) -> None:
        self.violations += 1
        if self.first_failure is None:
            self.first_failure = why

    def row(self) -> dict:
        return {"suite": self.name, "instances": self.instances, "violations": self.violations,
                "first_failure": self.first_failure or "", **self.detail}


def exhaustive_zero_subsets(keys) -> list[tuple[int, ...]]:
    """Every non-empty index subset whose position characters cancel."""
    out = []
    for r in range(1, len(keys) + 1):
        for idx in combinations(range(len(keys)), r):
            if not tb.key_xor(keys[i] for i in idx):
                out.append(idx)
    return out


def grid_keys(A, B) -> list[tuple[int, int]]:
    return [(a, b) for a in A for b in B]


def dependence_suite(n_sets: int = 10_000, n_seeds: int = 100, seed: int = 0,
                     spec: tb.KeySpec = tb.KeySpec(2, 4), sizes=(4, 8)) -> SuiteResult:
    """Returned subsets zero every hash; independence verdicts on <= 4 keys hold exhaustively."""
    res = SuiteResult("dependence")
    fns = [tb.make_tabulation(tb.splitmix64(seed * 1_000_003 + s), spec, 64) for s in range(n_seeds)]
    rng = np.random.default_rng(seed)
    found = independent = 0
    grid = [(0, 0), (0, 1), (1, 0), (1, 1)]
    if tb.dependent_subset(grid) != (0, 1, 2, 3):
        res.fail("4-key grid not reported dependent")
    for _ in range(n_sets):
        size = int(rng.integers(sizes[0], sizes[1] + 1))
        keys = [tuple(r) for r in spec.random_keys(rng, size).tolist()]
        res.instances += 1
        I = tb.dependent_subset(keys, spec)
        if I is not None:
            found += 1
            if tb.key_xor(keys[i] for i in I):
                res.fail(f"subset {I} of {keys} does not cancel")
                continue
            for f in fns:
                h = 0
                for i in I:
                    h ^= tb.hash_key(f, keys[i])
                if h != 0:
                    res.fail(f"subset {I} of {keys} hashes to {h:#x} under seed {f.seed}")
                    break
        elif len(keys) <= 4:
            independent += 1
            if exhaustive_zero_subsets(keys):
                res.fail(f"{keys} reported independent but has a zero subset")
        else:
            # larger independent sets: the oracle is still exact, just slower
            if exhaustive_zero_subsets(keys):
                res.fail(f"{keys} reported independent but has a zero subset")
    res.detail = {"dependent_found": found, "independent_small": independent}
    return res


def counting_suite(max_side: int = 16, ts=(1, 2, 3), seed: int = 0, random_instances: int = 40) -> SuiteResult:
    """count <= ((2t-1)!!)^c prod sqrt|A_i| on grids and random small families."""
    res = SuiteResult("counting_bound")
    count, bound = tb.count_zero_xor_tuples([[(0,), (1,)]] * 4, tb.KeySpec(1, 1))
    res.instances += 1
    if count != 8 or not tb.within_zero_xor_bound(count, [2, 2, 2, 2], 1) or abs(bound - 12) > 1e-9:
        res.fail(f"c=1 two-key case gave count={count}, bound={bound}")
    spec = tb.KeySpec(2, 4)
    sides = sorted({s for s in (1, 2, 4, 8, max_side) if s <= max_side})
    for t in ts:
        for a in sides:
            for b in sides:
                X = grid_keys(range(a), range(b))
                sets = [X] * (2 * t)
                try:
                    count, _ = tb.count_zero_xor_tuples(sets, spec)
                except tb.ResourceError:
                    continue
                res.instances += 1
                if not tb.within_zero_xor_bound(count, [len(X)] * (2 * t), spec.c):
                    res.fail(f"grid {a}x{b}, t={t}: count {count} above bound")
    rng = np.random.default_rng(seed)
    for _ in range(random_instances):
        t = int(rng.choice(ts))
        fam = [[tuple(r) for r in spec.random_keys(rng, int(rng.integers(1, 7))).tolist()] for _ in range(2 * t)]
        count, _ = tb.count_zero_xor_tuples(fam, spec)
        res.instances += 1
        if not tb.within_zero_xor_bound(count, [len(A) for A in fam], spec.c):
            res.fail(f"random family t={t}: count {count} above bound")
        if math.prod(len(A) for A in fam) <= 200_000 and tb.count_zero_xor_bruteforce(fam) != count:
            res.fail(f"random family t={t}: convolution count disagrees with enumeration")
    return res


def pair_class_suite(n_random: int = 50, max_m: int = 512, seed: int = 0) -> SuiteResult:
    """sum |C_i|^2 equals the 4-tuple zero-XOR count and stays <= 3^c m^2."""
    res = SuiteResult("pair_classes")
    rng = np.random.default_rng(seed)
    cases = []
    spec_r = tb.KeySpec(2, 5)
    for _ in range(n_random):
        m = int(rng.integers(1, max_m + 1))
        cases.append((spec_r, [tuple(r) for r in spec_r.random_keys(rng, m).tolist()]))
    spec_g = tb.KeySpec(2, 4)
    for a, b in [(2, 2), (4, 4), (8, 8), (16, 16), (4, 16)]:
        cases.append((spec_g, grid_keys(range(a), range(b))))
    for spec, X in cases:
        pc = tb.pair_xor_classes(X, spec)
        count, _ = tb.count_zero_xor_tuples([X] * 4, spec)
        res.instances += 1
        if pc.sum_squares != count:
            res.fail(f"m={pc.m}: sum of squares {pc.sum_squares} != 4-tuple count {count}")
        if pc.sum_squares > 3**spec.c * pc.m**2:
            res.fail(f"m={pc.m}: sum of squares above 3^c m^2")
        if pc.identity_size != pc.m:
            res.fail(f"identity class has size {pc.identity_size}, expected {pc.m}")
    return res


def tree_characterization_suite(d_values=(2, 3), max_edges: int = 6, samples: int = 300, seed: int = 0) -> SuiteResult:
    """Tree by counts agrees with tree by (no cycle, no multi-pair)."""
    res = SuiteResult("tree_characterization")
    rng = random.Random(seed)
    for d in d_values:
        for _ in range(samples):
            g = rng.randint(1, 4)
            m = rng.randint(1, max_edges)
            G = hg.graph_from_choices([[rng.randrange(g) for _ in range(d)] for _ in range(m)], d, g)
            ids = list(range(m))
            res.instances += 1
            by_count = hg.is_connected(G, ids) and G.slack(ids) == 0
            by_def = hg.is_connected(G, ids) and not hg.multi_pairs(G, ids) and hg.find_hyper_cycle(G, ids) is None
            if by_count != by_def:
                res.fail(f"d={d}, edges={G.edges}: counts say {by_count}, definition says {by_def}")
    return res


def cuckoo_orientation_suite(instances: int = 1000, seed: int = 0, max_edges: int = 12) -> SuiteResult:
    """Component criterion equals brute-force orientation search."""
    res = SuiteResult("cuckoo_criterion")
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        g = int(rng.integers(1, 9))
        m = int(rng.integers(1, max_edges + 1))
        ch = rng.integers(0, g, size=(m, 2))
        res.instances += 1
        if ck.components_feasible(ch, g) != ck.orientation_exists(ch, max_edges):
            res.fail(f"g={g}, choices={ch.tolist()}")
    return res


def fibonacci_suite() -> SuiteResult:
    res = SuiteResult("fibonacci")
    golden = (1 + math.sqrt(5)) / 2
    r = al.phi_d(2)
    res.instances += 1
    if abs(r.phi - golden) >= 1e-12:
        res.fail(f"phi_2 = {r.phi!r}")
    prev = 1.0
    for d in range(2, 9):
        p = al.phi_d(d).phi
        res.instances += 1
        if not prev < p < 2:
            res.fail(f"phi_{d} = {p} not in ({prev}, 2)")
        prev = p
    for d in (2, 3, 4):
        res.instances += 1
        if abs(al.fib_d(d, 30) / al.fib_d(d, 29) - al.phi_d(d).phi) >= 1e-3:
            res.fail(f"F_{d}(30)/F_{d}(29) far from phi_{d}")
    for d in (2, 3, 4, 5):
        for k in range(0, 65):
            res.instances += 1
            if al.fib_d(d, k) != fib_matrix(d, k):
                res.fail(f"F_{d}({k}) disagrees with the matrix power")
    return res


def fib_matrix(d: int, k: int) -> int:
    """F_d(k) from the k-1'th power of the d x d companion matrix (exact ints)."""
    if k <= 0:
        return 0
    M = [[1] * d] + [[1 if j == i else 0 for j in range(d)] for i in range(d - 1)]

    def mul(A, B):
        return [[sum(A[i][x] * B[x][j] for x in range(d)) for j in range(d)] for i in range(d)]

    R = [[1 if i == j else 0 for j in range(d)] for i in range(d)]
    p = k - 1
    while p:
        if p & 1:
            R = mul(R, M)
        M = mul(M, M)
        p >>= 1
    # state vector (F(1), F(0), ..., F(2-d)) = (1, 0, ..., 0)
    return R[0][0]


def counts_suite(d_values=(2, 3), max_k: int = 6) -> SuiteResult:
    res = SuiteResult("witness_counts")
    for d in d_values:
        for k in range(max_k + 1):
            for ell in range(k + 1):
                res.instances += 1
                if not wt.validate_counts(wt.WitnessShape(d, k, ell)):
                    res.fail(f"T_{{{k},{ell}}} counts wrong for d={d}")
                for i in range(1, d + 1):
                    res.instances += 1
                    if not wt.validate_counts(wt.WitnessShape(d, k, ell, i, "P")):
                        res.fail(f"P_{{{i},{ell}}}({k}) counts wrong for d={d}")
    return res


def replay_suite(instances: int = 100, seed: int = 0) -> SuiteResult:
    res = SuiteResult("greedy_replay")
    spec = tb.KeySpec(2, 4)
    rng = np.random.default_rng(seed)
    ties = list(al.TieBreak)
    for t in range(instances):
        d = int(rng.integers(1, 5))
        bb = int(rng.integers(1, 4))
        f = tb.make_tabulation(t + seed * 7919, spec, 16)
        m = int(rng.integers(0, 60))
        keys = spec.random_keys(rng, m, distinct=False)
        tie = ties[t % len(ties)]
        st = al.allocate(keys, f, d, bb, tie, tie_seed=t)
        res.instances += 1
        if not al.replay_verify(st, keys, f, d, bb, tie, tie_seed=t):
            res.fail(f"instance {t}: replay rejected an honest state")
        if int(st.loads.sum()) != m:
            res.fail(f"instance {t}: loads do not sum to m")
    return res
