"""Sequential d-choice placement, tie rules, and d-ary Fibonacci numbers.

Bins are split into ``d`` groups of ``g = 2**bin_bits`` bins; a ball offered
choices ``(b_0, ..., b_{d-1})`` may go to bin ``b_i`` of group ``i``.  Vertices
of the hash graph are the same ``(group, bin)`` pairs, groups 0-based.
"""

from __future__ import annotations

import enum
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .tabulation import TabulationFn, choices_many


class TieBreak(enum.Enum):
    ALWAYS_GO_LEFT = "agl"
    LOWEST_INDEX = "left"
    SEEDED_RANDOM = "random"

    @classmethod
    def parse(cls, s: str) -> "TieBreak":
        for t in cls:
            if s in (t.value, t.name, t.name.lower()):
                return t
        raise ConfigError(f"unknown tie rule {s!r}")

    @property
    def leftmost(self) -> bool:
        return self is not TieBreak.SEEDED_RANDOM


@dataclass
class LoadState:
    d: int
    g: int
    keys: np.ndarray  # (m, c) characters, in insertion order
    choices: np.ndarray  # (m, d) group-local bins
    placed_group: np.ndarray  # (m,) group index chosen for each step
    loads: np.ndarray  # (d, g)
    logs: list | None = None  # per flat bin: [(key, step), ...] in arrival order
    tie_events: int = 0  # steps where more than one choice had the minimum load
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.placed_group)

    def placement(self, step: int) -> tuple[int, int, int]:
        grp = int(self.placed_group[step])
        return grp, int(self.choices[step, grp]), step

    def arrivals(self, vertex: tuple[int, int]) -> list:
        """Steps (edge ids) of the balls that landed in ``vertex``, in order."""
        grp, b = vertex
        if self.logs is not None:
            return [step for _, step in self.logs[grp * self.g + b]]
        hits = np.flatnonzero((self.placed_group == grp) & (self.choices[:, grp] == b) if self.m else [])
        return hits.tolist()

    def log_consistent(self) -> bool:
        if self.logs is None:
            return True
        flat = self.loads.ravel()
        if any(len(self.logs[i]) != flat[i] for i in range(len(flat))):
            return False
        for i, entries in enumerate(self.logs):
            grp, b = divmod(i, self.g)
            for key, step in entries:
                if self.placement(step)[:2] != (grp, b) or tuple(self.keys[step]) != key:
                    return False
        return True


def _as_key_matrix(keys, c: int) -> np.ndarray:
    arr = np.asarray(keys, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, c), dtype=np.int64)
    return arr.reshape(len(arr), c)


def allocate(
    keys,
    f: TabulationFn,
    d: int,
    bin_bits: int,
    tie: TieBreak = TieBreak.ALWAYS_GO_LEFT,
    tie_seed: int = 0,
    log: bool = True,
) -> LoadState:
    """Place ``keys`` one by one into a least loaded bin among their ``d`` choices.

    ``tie_seed`` seeds the trial-local RNG used by ``SEEDED_RANDOM``; it is
    consumed only on steps with a tie.  ``log=False`` skips the per-bin arrival
    lists (experiments that only need loads).
    """
    keys = _as_key_matrix(keys, f.spec.c)
    ch = choices_many(f, keys, d, bin_bits)
    return allocate_choices(ch, d, bin_bits, tie, tie_seed, log, keys=keys)


def allocate_choices(ch, d, bin_bits, tie=TieBreak.ALWAYS_GO_LEFT, tie_seed=0, log=True, keys=None) -> LoadState:
    """Same as ``allocate`` but from a precomputed (m, d) choice matrix."""
    ch = np.asarray(ch, dtype=np.int64).reshape(-1, d)
    g = 1 << bin_bits
    m = len(ch)
    loads = [0] * (d * g)
    placed = [0] * m
    logs = [[] for _ in range(d * g)] if log else None
    key_rows = [tuple(r) for r in keys.tolist()] if (log and keys is not None) else None
    rng = random.Random(tie_seed)
    leftmost = tie.leftmost
    offsets = [i * g for i in range(d)]
    ties = 0
    for step, row in enumerate(ch.tolist()):
        best = -1
        best_load = None
        tied = None
        for gi in range(d):
            load = loads[offsets[gi] + row[gi]]
            if best_load is None or load < best_load:
                best, best_load, tied = gi, load, None
            elif load == best_load:
                if tied is None:
                    tied = [best]
                tied.append(gi)
        if tied is not None:
            ties += 1
            if not leftmost:
                best = tied[rng.randrange(len(tied))]
        idx = offsets[best] + row[best]
        loads[idx] += 1
        placed[step] = best
        if log:
            logs[idx].append((key_rows[step] if key_rows else None, step))
    return LoadState(
        d=d,
        g=g,
        keys=keys if keys is not None else np.zeros((m, 0), dtype=np.int64),
        choices=ch,
        placed_group=np.array(placed, dtype=np.int64),
        loads=np.array(loads, dtype=np.int64).reshape(d, g),
        logs=logs,
        tie_events=ties,
        meta={"tie": tie.value, "tie_seed": tie_seed, "bin_bits": bin_bits},
    )


def find_violation(state: LoadState, keys, f: TabulationFn, d: int, bin_bits: int,
                   tie: TieBreak, tie_seed: int = 0) -> int | None:
    """Re-simulate from scratch and return the first step that breaks the rules.

    Checks that each ball went to a minimum-load choice and that the tie rule
    picked the right one.  For ``SEEDED_RANDOM`` the RNG is replayed, so the
    exact tied choice is checked as well.
    """
    keys = _as_key_matrix(keys, f.spec.c)
    if state.d != d or state.g != 1 << bin_bits or state.m != len(keys):
        raise InputError("state does not match the replay inputs")
    ch = choices_many(f, keys, d, bin_bits)
    if not np.array_equal(ch, state.choices):
        raise InputError("recorded choices differ from the hash of the given keys")
    g = state.g
    loads = np.zeros(d * g, dtype=np.int64)
    rng = random.Random(tie_seed)
    for step in range(len(keys)):
        cand = [int(loads[i * g + ch[step, i]]) for i in range(d)]
        low = min(cand)
        tied = [i for i in range(d) if cand[i] == low]
        grp = int(state.placed_group[step])
        if cand[grp] != low:
            return step
        if len(tied) > 1:
            if tie.leftmost:
                expected = tied[0]
            else:
                expected = tied[rng.randrange(len(tied))]
            if grp != expected:
                return step
        loads[grp * g + ch[step, grp]] += 1
    if not np.array_equal(loads.reshape(d, g), state.loads):
        return len(keys)
    if not state.log_consistent():
        return len(keys)
    return None


def replay_verify(state: LoadState, keys, f: TabulationFn, d: int, bin_bits: int,
                  tie: TieBreak, tie_seed: int = 0) -> bool:
    return find_violation(state, keys, f, d, bin_bits, tie, tie_seed) is None


def max_load(state: LoadState) -> int:
    return int(state.loads.max()) if state.loads.size else 0


def load_histogram(state: LoadState) -> dict[int, int]:
    counts = Counter(state.loads.ravel().tolist())
    return dict(sorted(counts.items()))


def fullest_bin(state: LoadState) -> tuple[int, int]:
    """Leftmost (group, bin) holding the maximum load."""
    grp, b = np.unravel_index(int(np.argmax(state.loads)), state.loads.shape)
    return int(grp), int(b)


# --------------------------------------------------------------------------
# d-ary Fibonacci numbers


@lru_cache(maxsize=None)
def _fib_table(d: int, upto: int) -> tuple[int, ...]:
    vals = [0, 1]  # F(0), F(1)
    for k in range(2, upto + 1):
        vals.append(sum(vals[max(0, k - d):k]))
    return tuple(vals)


def fib_d(d: int, k: int) -> int:
    """F_d(k): 0 for k <= 0, F_d(1) = 1, then the sum of the previous d terms."""
    if d < 2:
        raise ConfigError(f"d must be >= 2, got {d}")
    if k <= 0:
        return 0
    size = 64
    while size < k:
        size *= 2
    return _fib_table(d, size)[k]


class PhiResult(NamedTuple):
    phi: float
    residual: float
    load_scale: float  # 1 / (d * log2(phi_d))


def _phi_poly(x: float, d: int) -> float:
    s = 0.0
    for _ in range(d):
        s = s * x + 1.0
    return x**d - s


def phi_d(d: int, tol: float = 1e-12) -> PhiResult:
    """Positive root of x^d = x^(d-1) + ... + x + 1, by bisection on (1, 2)."""
    if d < 2:
        raise ConfigError(f"d must be >= 2, got {d}")
    if not tol > 0:
        raise ConfigError("tol must be positive")
    lo, hi = 1.0, 2.0  # p(1) = 1 - d < 0, p(2) = 1 > 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _phi_poly(mid, d) < 0:
            lo = mid
        else:
            hi = mid
    root = lo if abs(_phi_poly(lo, d)) <= abs(_phi_poly(hi, d)) else hi
    res = abs(_phi_poly(root, d))
    if res >= tol:
        raise ConfigError(f"bisection residual {res:.3g} did not reach tol={tol}")
    return PhiResult(root, res, 1.0 / (d * math.log2(root)))


def plain_load_scale(n: int, d: int) -> float:
    """lg lg n / lg d."""
    return math.log2(math.log2(n)) / math.log2(d)


def agl_load_scale(n: int, d: int) -> float:
    """lg lg n / (d lg phi_d)."""
    return math.log2(math.log2(n)) * phi_d(d).load_scale
