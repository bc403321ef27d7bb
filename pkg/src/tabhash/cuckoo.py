"""Two-table cuckoo hashing on simple tabulation, and its feasibility oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InputError, ResourceError
from .tabulation import KeySpec, TabulationFn, choices_many, make_tabulation, splitmix64


@dataclass
class CuckooTable:
    """Tables ``T0``, ``T1`` of ``g`` slots; key ``x`` may sit in ``T0[h0(x)]`` or ``T1[h1(x)]``.

    ``views`` is either one TabulationFn split into two slices or a pair of
    independent functions.
    """

    bin_bits: int
    views: tuple
    kick_budget: int | None = None
    slots: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.views) not in (1, 2):
            raise InputError("views must hold one wide function or two functions")
        self.g = 1 << self.bin_bits
        if self.kick_budget is None:
            self.kick_budget = 10 * max(1, math.ceil(math.log2(2 * self.g)))
        if not self.slots:
            self.slots = [[None] * self.g, [None] * self.g]

    def choices(self, keys) -> np.ndarray:
        return hash_views(self.views, keys, self.bin_bits)

    def contains(self, x) -> bool:
        x = tuple(int(c) for c in x)
        h = self.choices([x])[0]
        return self.slots[0][h[0]] == x or self.slots[1][h[1]] == x

    def stored(self) -> list:
        return [x for t in self.slots for x in t if x is not None]


def hash_views(views, keys, bin_bits: int) -> np.ndarray:
    """(m, 2) matrix of (h0, h1) slot indices."""
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, views[0].spec.c)
    if len(views) == 1:
        return choices_many(views[0], keys, 2, bin_bits)
    return np.stack([choices_many(f, keys, 1, bin_bits)[:, 0] for f in views], axis=1)


@dataclass
class InsertResult:
    placed_all: bool
    failed_at: int | None = None  # 1-based position of the key whose insertion ran out of kicks
    pending: tuple | None = None  # key left homeless on failure
    kicks: int = 0


def insert_all(keys, table: CuckooTable) -> InsertResult:
    """Insert keys in order by the standard eviction walk.

    A key goes to ``T0[h0]``; whoever was there moves to its slot in the other
    table, and so on, for at most ``kick_budget`` evictions.  On failure the
    table keeps the keys as displaced so far and the key in hand is returned as
    ``pending``.
    """
    rows = [tuple(int(c) for c in x) for x in np.asarray(keys, dtype=np.int64).reshape(-1, table.views[0].spec.c).tolist()]
    if len(set(rows)) != len(rows):
        raise InputError("insert_all requires distinct keys")
    ch = table.choices(rows).tolist() if rows else []
    where = {x: (a, b) for x, (a, b) in zip(rows, ch)}
    for x in table.stored():
        if x not in where:
            where[x] = tuple(table.choices([x])[0])
    T = table.slots
    total = 0
    for pos, x in enumerate(rows, start=1):
        cur, side = x, 0
        for _ in range(table.kick_budget + 1):
            idx = where[cur][side]
            cur, T[side][idx] = T[side][idx], cur
            if cur is None:
                break
            total += 1
            side = 1 - side  # the evicted key's other slot is in the other table
        else:
            return InsertResult(False, pos, cur, total)
    return InsertResult(True, None, None, total)


def components_feasible(ch: np.ndarray, g: int) -> bool:
    """True iff every component of the two-table graph has |E| <= |V|."""
    parent = list(range(2 * g))
    edges = [0] * (2 * g)
    verts = [1] * (2 * g)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in ch.tolist():
        ra, rb = find(a), find(g + b)
        if ra != rb:
            if verts[ra] < verts[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            verts[ra] += verts[rb]
            edges[ra] += edges[rb]
        edges[ra] += 1
        if edges[ra] > verts[ra]:
            return False
    return True


def feasibility_oracle(keys, views, bin_bits: int) -> bool:
    """Cuckoo placement exists iff no component has more edges than vertices."""
    ch = hash_views(views, keys, bin_bits)
    return components_feasible(ch, 1 << bin_bits)


def orientation_exists(ch, max_edges: int = 16) -> bool:
    """Brute force: try every assignment of each key to one of its two slots."""
    ch = [tuple(r) for r in np.asarray(ch).reshape(-1, 2).tolist()]
    if len(ch) > max_edges:
        raise ResourceError(f"{len(ch)} edges exceed brute-force limit {max_edges}")
    for pick in product((0, 1), repeat=len(ch)):
        used = {(side, row[side]) for side, row in zip(pick, ch)}
        if len(used) == len(ch):
            return True
    return False


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval (95% by default) for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class FailureRow:
    n: int
    m: int
    trials: int
    failures: int
    lo: float
    hi: float
    inserter_disagreements: int = 0

    @property
    def fraction(self) -> float:
        return self.failures / self.trials if self.trials else 0.0


def failure_experiment(n_list, eps: float, trials: int, seed: int,
                       spec: KeySpec | None = None, check_inserter: bool = False) -> list[FailureRow]:
    """Fraction of trials with no valid two-table placement, per table total ``n``.

    ``n = 2 * 2^b`` slots split over two tables and ``m = floor(n / (2(1+eps)))``
    fresh distinct keys per trial, hashed by a freshly seeded wide function.
    With ``check_inserter`` the eviction inserter (budget ``10*ceil(lg n)*n``) is
    run as well and disagreements with the oracle are counted.
    """
    spec = spec or KeySpec()
    rows = []
    for n in n_list:
        if n < 4 or n & (n - 1):
            raise InputError(f"n must be a power of two >= 4, got {n}")
        bin_bits = n.bit_length() - 2
        m = int(n // (2 * (1 + eps)))
        fails = disagree = 0
        for t in range(trials):
            tseed = trial_seed(seed ^ n, t)
            rng = np.random.default_rng(tseed)
            keys = spec.random_keys(rng, m)
            f = make_tabulation(splitmix64(tseed), spec, 2 * bin_bits)
            ch = choices_many(f, keys, 2, bin_bits)
            ok = components_feasible(ch, 1 << bin_bits)
            fails += not ok
            if check_inserter:
                table = CuckooTable(bin_bits, (f,), kick_budget=10 * math.ceil(math.log2(n)) * n)
                res = insert_all(keys, table)
                disagree += res.placed_all != ok
        lo, hi = wilson_interval(fails, trials)
        rows.append(FailureRow(n, m, trials, fails, lo, hi, disagree))
    return rows


def trial_seed(seed: int, index: int) -> int:
    return (seed ^ splitmix64(index)) & ((1 << 64) - 1)
