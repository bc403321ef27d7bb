"""Simple tabulation hashing and the GF(2) algebra of position characters.

A key is a tuple of ``c`` characters.  Viewed as a set of position characters
``{(i, x[i])}`` the XOR of keys is the symmetric difference of those sets, and
simple tabulation is a linear map from that GF(2) vector space to the output
bits.  Everything here is a pure function of its inputs and the table seed.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, InputError, ResourceError

MASK64 = (1 << 64) - 1

Key = tuple  # tuple[int, ...] of length KeySpec.c
PositionCharacterSet = frozenset  # frozenset[tuple[int, int]]
ChoiceSet = tuple  # tuple[int, ...], one group-local bin per group

DEFAULT_TUPLE_CAP = 10**7
DEFAULT_PAIR_CAP = 4096


# --------------------------------------------------------------------------
# PRNG


def splitmix64_next(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def splitmix64(x: int) -> int:
    """Stateless mix: the first output of a generator seeded with ``x``."""
    return splitmix64_next(x & MASK64)[1]


def splitmix64_stream(seed: int, count: int) -> list[int]:
    out = []
    state = seed & MASK64
    for _ in range(count):
        state, z = splitmix64_next(state)
        out.append(z)
    return out


# --------------------------------------------------------------------------
# Key spec and keys


@dataclass(frozen=True)
class KeySpec:
    c: int = 4
    char_bits: int = 8

    def __post_init__(self):
        if not isinstance(self.c, int) or self.c < 1:
            raise ConfigError(f"c must be a positive integer, got {self.c!r}")
        if not isinstance(self.char_bits, int) or self.char_bits < 1:
            raise ConfigError(f"char_bits must be a positive integer, got {self.char_bits!r}")
        if self.c * self.char_bits > 64:
            raise ConfigError(f"c*char_bits = {self.c * self.char_bits} exceeds 64")

    @property
    def sigma(self) -> int:
        return 1 << self.char_bits

    @property
    def universe_bits(self) -> int:
        return self.c * self.char_bits

    @property
    def universe(self) -> int:
        return 1 << self.universe_bits

    def check_key(self, x: Sequence[int]) -> Key:
        if len(x) != self.c:
            raise DomainError(f"key {x!r} has {len(x)} characters, expected {self.c}")
        for ch in x:
            if not 0 <= ch < self.sigma:
                raise DomainError(f"character {ch!r} outside [0, {self.sigma})")
        return tuple(int(ch) for ch in x)

    def pack(self, x: Sequence[int]) -> int:
        """Key -> integer, character 0 in the low bits."""
        v = 0
        for i, ch in enumerate(self.check_key(x)):
            v |= ch << (i * self.char_bits)
        return v

    def unpack(self, v: int) -> Key:
        if not 0 <= v < self.universe:
            raise DomainError(f"{v} outside the {self.universe_bits}-bit universe")
        m = self.sigma - 1
        return tuple((v >> (i * self.char_bits)) & m for i in range(self.c))

    def unpack_array(self, ints: np.ndarray) -> np.ndarray:
        """uint64 array of packed keys -> (m, c) int64 character matrix."""
        ints = np.asarray(ints, dtype=np.uint64)
        cols = [
            ((ints >> np.uint64(i * self.char_bits)) & np.uint64(self.sigma - 1)).astype(np.int64)
            for i in range(self.c)
        ]
        return np.stack(cols, axis=1) if cols else np.zeros((len(ints), 0), dtype=np.int64)

    def random_keys(self, rng: np.random.Generator, m: int, distinct: bool = True) -> np.ndarray:
        """Draw ``m`` keys uniformly; returns an (m, c) character matrix.

        With ``distinct`` duplicates are rejected and redrawn, so the result is
        a set in draw order.
        """
        if distinct and m > self.universe:
            raise ConfigError(f"cannot draw {m} distinct keys from a universe of {self.universe}")
        hi = self.universe  # <= 2**64
        if not distinct:
            ints = _uniform_u64(rng, m, hi)
            return self.unpack_array(ints)
        seen: dict[int, None] = {}
        while len(seen) < m:
            for v in _uniform_u64(rng, m - len(seen), hi).tolist():
                if v not in seen:
                    seen[v] = None
                    if len(seen) == m:
                        break
        return self.unpack_array(np.fromiter(seen, dtype=np.uint64, count=m))


def _uniform_u64(rng: np.random.Generator, size: int, hi: int) -> np.ndarray:
    if hi == 1 << 64:
        return rng.integers(0, np.iinfo(np.uint64).max, size=size, dtype=np.uint64, endpoint=True)
    return rng.integers(0, hi, size=size, dtype=np.uint64)


def as_pcs(x: Sequence[int]) -> PositionCharacterSet:
    """A key viewed as its set of position characters."""
    return frozenset((i, int(ch)) for i, ch in enumerate(x))


def pcs_bitmask(s: Iterable[tuple[int, int]], spec: KeySpec) -> int:
    """Incidence vector of a position-character set, bit ``pos*|Sigma| + char``."""
    v = 0
    for pos, ch in s:
        v |= 1 << (pos * spec.sigma + ch)
    return v


def key_bitmask(x: Sequence[int], spec: KeySpec) -> int:
    v = 0
    for pos, ch in enumerate(x):
        v |= 1 << (pos * spec.sigma + ch)
    return v


# --------------------------------------------------------------------------
# Tabulation functions


@dataclass(frozen=True, eq=False)
class TabulationFn:
    spec: KeySpec
    out_bits: int
    seed: int
    tables: tuple  # c read-only uint64 arrays of length |Sigma|
    _lists: tuple = field(repr=False, default=())

    def __call__(self, x: Sequence[int]) -> int:
        return hash_key(self, x)

    def __eq__(self, other):
        if not isinstance(other, TabulationFn):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.out_bits == other.out_bits
            and all(np.array_equal(a, b) for a, b in zip(self.tables, other.tables))
        )

    __hash__ = None


def _freeze_tables(spec: KeySpec, out_bits: int, seed: int, rows: list[list[int]]) -> TabulationFn:
    arrays = []
    for row in rows:
        a = np.array(row, dtype=np.uint64)
        a.setflags(write=False)
        arrays.append(a)
    lists = tuple(tuple(row) for row in rows)
    return TabulationFn(spec, out_bits, seed & MASK64, tuple(arrays), lists)


def make_tabulation(seed: int, spec: KeySpec, out_bits: int) -> TabulationFn:
    """Fill ``c`` tables of ``|Sigma|`` entries from a splitmix64 stream.

    Entries are drawn position-major, character-minor; each entry keeps the top
    ``out_bits`` bits of one 64-bit output.
    """
    if not isinstance(spec, KeySpec):
        raise ConfigError("spec must be a KeySpec")
    if not isinstance(out_bits, int) or not 1 <= out_bits <= 64:
        raise ConfigError(f"out_bits must be in [1, 64], got {out_bits!r}")
    stream = splitmix64_stream(seed, spec.c * spec.sigma)
    shift = 64 - out_bits
    rows = [
        [z >> shift for z in stream[p * spec.sigma:(p + 1) * spec.sigma]]
        for p in range(spec.c)
    ]
    return _freeze_tables(spec, out_bits, seed, rows)


def tabulation_from_tables(spec: KeySpec, out_bits: int, tables: Sequence[Sequence[int]], seed: int = 0) -> TabulationFn:
    """Wrap explicit tables (used for hand-built fixtures and file loading)."""
    if len(tables) != spec.c or any(len(t) != spec.sigma for t in tables):
        raise ConfigError("table shape does not match the key spec")
    if not 1 <= out_bits <= 64:
        raise ConfigError(f"out_bits must be in [1, 64], got {out_bits!r}")
    limit = 1 << out_bits
    rows = [[int(v) for v in t] for t in tables]
    if any(not 0 <= v < limit for row in rows for v in row):
        raise ConfigError(f"table entry wider than {out_bits} bits")
    return _freeze_tables(spec, out_bits, seed, rows)


def hash_key(f: TabulationFn, x: Sequence[int]) -> int:
    """XOR of the ``c`` table entries selected by the characters of ``x``."""
    x = f.spec.check_key(x)
    h = 0
    for row, ch in zip(f._lists, x):
        h ^= row[ch]
    return h


def hash_many(f: TabulationFn, keys: np.ndarray) -> np.ndarray:
    """Vectorised ``hash_key`` over an (m, c) character matrix."""
    keys = np.asarray(keys)
    if keys.ndim != 2 or keys.shape[1] != f.spec.c:
        raise DomainError(f"expected an (m, {f.spec.c}) key matrix, got shape {keys.shape}")
    if keys.size and (keys.min() < 0 or keys.max() >= f.spec.sigma):
        raise DomainError("character outside the alphabet")
    h = np.zeros(len(keys), dtype=np.uint64)
    for i, table in enumerate(f.tables):
        h ^= table[keys[:, i]]
    return h


def hash_pcs(f: TabulationFn, s: Iterable[tuple[int, int]]) -> int:
    h = 0
    for pos, ch in s:
        if not 0 <= pos < f.spec.c:
            raise DomainError(f"position {pos} outside [0, {f.spec.c})")
        if not 0 <= ch < f.spec.sigma:
            raise DomainError(f"character {ch} outside [0, {f.spec.sigma})")
        h ^= f._lists[pos][ch]
    return h


def derive_choices(f: TabulationFn, x: Sequence[int], d: int, bin_bits: int) -> ChoiceSet:
    """Split one wide hash into ``d`` bin indices, lowest slice feeding group 0."""
    _check_split(f, d, bin_bits)
    h = hash_key(f, x)
    mask = (1 << bin_bits) - 1
    return tuple((h >> (i * bin_bits)) & mask for i in range(d))


def split_hashes(h: np.ndarray, d: int, bin_bits: int) -> np.ndarray:
    """(m,) hashes -> (m, d) choice matrix, same slicing as ``derive_choices``."""
    mask = np.uint64((1 << bin_bits) - 1)
    cols = [((h >> np.uint64(i * bin_bits)) & mask).astype(np.int64) for i in range(d)]
    return np.stack(cols, axis=1)


def choices_many(f: TabulationFn, keys: np.ndarray, d: int, bin_bits: int) -> np.ndarray:
    _check_split(f, d, bin_bits)
    return split_hashes(hash_many(f, keys), d, bin_bits)


def _check_split(f: TabulationFn, d: int, bin_bits: int) -> None:
    if d < 1 or bin_bits < 1:
        raise ConfigError(f"need d >= 1 and bin_bits >= 1, got d={d}, bin_bits={bin_bits}")
    if d * bin_bits > f.out_bits:
        raise ConfigError(f"d*bin_bits = {d * bin_bits} exceeds out_bits = {f.out_bits}")


# --------------------------------------------------------------------------
# Position-character algebra


def key_xor(keys: Iterable[Sequence[int]]) -> PositionCharacterSet:
    acc: set = set()
    for x in keys:
        acc ^= as_pcs(x)
    return frozenset(acc)


def dependent_subset(keys: Sequence[Sequence[int]], spec: KeySpec | None = None) -> tuple[int, ...] | None:
    """Smallest-pivot GF(2) dependency among the keys' incidence vectors.

    Keys are fed to the elimination in order; the first key that reduces to
    zero closes the returned subset (0-based, sorted).  ``None`` means the keys
    are independent.
    """
    keys = [tuple(int(ch) for ch in x) for x in keys]
    if len(set(keys)) != len(keys):
        raise InputError("dependent_subset requires distinct keys")
    if spec is not None:
        for x in keys:
            spec.check_key(x)
    if len({len(x) for x in keys}) > 1:
        raise InputError("keys have different lengths")
    c = len(keys[0]) if keys else 0
    basis: dict[int, tuple[int, int]] = {}
    for i, x in enumerate(keys):
        v = 0
        for pos, ch in enumerate(x):
            v |= 1 << (ch * c + pos)
        combo = 1 << i
        while v:
            low = v & -v
            hit = basis.get(low)
            if hit is None:
                basis[low] = (v, combo)
                break
            v ^= hit[0]
            combo ^= hit[1]
        if v == 0:
            return tuple(j for j in range(i + 1) if (combo >> j) & 1)
    return None


def double_factorial(a: int) -> int:
    out = 1
    while a > 1:
        out *= a
        a -= 2
    return out


def zero_xor_bound(sizes: Sequence[int], c: int) -> float:
    t2 = len(sizes)
    return float(double_factorial(t2 - 1) ** c) * math.prod(math.sqrt(s) for s in sizes)


def within_zero_xor_bound(count: int, sizes: Sequence[int], c: int) -> bool:
    """``count <= ((2t-1)!!)^c * prod sqrt|A_i|`` checked in exact integers."""
    t2 = len(sizes)
    return count * count <= double_factorial(t2 - 1) ** (2 * c) * math.prod(sizes)


def count_zero_xor_tuples(
    sets: Sequence[Sequence[Sequence[int]]],
    spec: KeySpec,
    cap: int = DEFAULT_TUPLE_CAP,
) -> tuple[int, float]:
    """Exact number of tuples in ``A_1 x ... x A_2t`` whose XOR is empty.

    Counts by convolving XOR distributions over each half of the sets and
    joining the halves on equal values, so the work is bounded by the
    distribution sizes rather than the full product.  ``cap`` limits any single
    intermediate expansion.
    """
    if len(sets) % 2 or not 2 <= len(sets) <= 8:
        raise InputError(f"need an even number 2..8 of sets, got {len(sets)}")
    masks = [sorted({key_bitmask(spec.check_key(x), spec) for x in A}) for A in sets]
    sizes = [len(m) for m in masks]
    bound = zero_xor_bound(sizes, spec.c)
    if 0 in sizes:
        return 0, bound
    t = len(sets) // 2
    if spec.c * spec.sigma <= 64:
        count = _count_numpy(masks[:t], masks[t:], cap)
    else:
        count = _count_dict(masks[:t], masks[t:], cap)
    return count, bound


def _convolve_numpy(masks: list[list[int]], cap: int) -> tuple[np.ndarray, np.ndarray]:
    vals = np.zeros(1, dtype=np.uint64)
    cnts = np.ones(1, dtype=np.int64)
    for A in masks:
        a = np.array(A, dtype=np.uint64)
        if len(vals) * len(a) > cap:
            raise ResourceError(f"XOR convolution needs {len(vals) * len(a)} > cap={cap} entries")
        nv = (vals[:, None] ^ a[None, :]).ravel()
        nc = np.repeat(cnts, len(a))
        order = np.argsort(nv, kind="stable")
        nv, nc = nv[order], nc[order]
        starts = np.flatnonzero(np.r_[True, nv[1:] != nv[:-1]])
        vals, cnts = nv[starts], np.add.reduceat(nc, starts)
    return vals, cnts


def _count_numpy(left, right, cap) -> int:
    lv, lc = _convolve_numpy(left, cap)
    rv, rc = _convolve_numpy(right, cap)
    _, li, ri = np.intersect1d(lv, rv, assume_unique=True, return_indices=True)
    return sum(int(a) * int(b) for a, b in zip(lc[li].tolist(), rc[ri].tolist()))


def _count_dict(left, right, cap) -> int:
    def conv(masks):
        dist = Counter({0: 1})
        for A in masks:
            if len(dist) * len(A) > cap:
                raise ResourceError(f"XOR convolution needs {len(dist) * len(A)} > cap={cap} entries")
            nxt: Counter = Counter()
            for v, n in dist.items():
                for a in A:
                    nxt[v ^ a] += n
            dist = nxt
        return dist

    L, R = conv(left), conv(right)
    return sum(n * R.get(v, 0) for v, n in L.items())


def count_zero_xor_bruteforce(sets: Sequence[Sequence[Sequence[int]]], cap: int = DEFAULT_TUPLE_CAP) -> int:
    """Enumerate the full product; reference oracle for small instances."""
    total = math.prod(len(A) for A in sets)
    if total > cap:
        raise ResourceError(f"{total} tuples exceed cap={cap}")
    pcs = [[as_pcs(x) for x in dict.fromkeys(tuple(x) for x in A)] for A in sets]
    count = 0
    for combo in product(*pcs):
        acc: set = set()
        for s in combo:
            acc ^= s
        if not acc:
            count += 1
    return count


@dataclass(frozen=True)
class PairClasses:
    m: int
    size_counts: dict  # class size -> number of classes of that size
    identity_size: int
    large_classes: int  # classes with size >= m^(2/3)
    sum_squares: int

    @property
    def num_classes(self) -> int:
        return sum(self.size_counts.values())


def pair_xor_classes(X: Iterable[Sequence[int]], spec: KeySpec, cap: int = DEFAULT_PAIR_CAP) -> PairClasses:
    """Partition ``X x X`` by the position-character XOR of each pair.

    Per position a pair contributes nothing when the characters agree and the
    unordered character pair otherwise; the tuple of those codes identifies
    the class.
    """
    keys = list(dict.fromkeys(spec.check_key(x) for x in X))
    m = len(keys)
    if m > cap:
        raise ResourceError(f"|X| = {m} exceeds cap={cap}")
    if m == 0:
        return PairClasses(0, {}, 0, 0, 0)
    arr = np.array(keys, dtype=np.int64).reshape(m, spec.c)
    iu, ju = np.triu_indices(m, k=1)
    S = spec.sigma
    if 2 * spec.char_bits * spec.c <= 64:
        code = np.zeros(len(iu), dtype=np.uint64)
        for p in range(spec.c):
            a, b = arr[iu, p], arr[ju, p]
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            pc = np.where(lo == hi, 0, lo * S + hi).astype(np.uint64)
            code = (code << np.uint64(2 * spec.char_bits)) | pc
        _, counts = np.unique(code, return_counts=True)
        off_sizes = (2 * counts).tolist()
    else:
        tally: Counter = Counter()
        for i, j in zip(iu.tolist(), ju.tolist()):
            tally[tuple(
                0 if keys[i][p] == keys[j][p] else (min(keys[i][p], keys[j][p]), max(keys[i][p], keys[j][p]))
                for p in range(spec.c)
            )] += 1
        off_sizes = [2 * n for n in tally.values()]
    sizes = Counter(off_sizes)
    sizes[m] += 1
    large = sum(n for s, n in sizes.items() if s**3 >= m * m)
    sum_sq = sum(s * s * n for s, n in sizes.items())
    return PairClasses(m, dict(sorted(sizes.items())), m, large, sum_sq)


def multiply_shift_reduce(x: int, a: int, w: int, target_bits: int) -> int:
    """Top ``target_bits`` of ``a*x mod 2^w`` for an odd multiplier ``a``."""
    if a % 2 == 0:
        raise InputError(f"multiplier must be odd, got {a}")
    if not 0 <= target_bits <= w:
        raise InputError(f"target_bits must be in [0, {w}], got {target_bits}")
    if not 0 <= x < (1 << w) or not 0 < a < (1 << w):
        raise DomainError("x and a must be w-bit")
    return ((a * x) & ((1 << w) - 1)) >> (w - target_bits)


# --------------------------------------------------------------------------
# Table files

MAGIC = b"TABH"
FILE_VERSION = 1
_HEADER = struct.Struct("<4sHBBBQ")


def dump_tables(f: TabulationFn) -> bytes:
    head = _HEADER.pack(MAGIC, FILE_VERSION, f.spec.c, f.spec.char_bits, f.out_bits, f.seed)
    body = b"".join(t.astype("<u8").tobytes() for t in f.tables)
    return head + body


def load_tables(data: bytes) -> TabulationFn:
    if len(data) < _HEADER.size:
        raise InputError("truncated table file header")
    magic, version, c, char_bits, out_bits, seed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputError(f"bad magic {magic!r}")
    if version != FILE_VERSION:
        raise InputError(f"unsupported table file version {version}")
    spec = KeySpec(c, char_bits)
    n = spec.sigma
    body = np.frombuffer(data, dtype="<u8", offset=_HEADER.size)
    if len(body) != c * n:
        raise InputError(f"expected {c * n} entries, found {len(body)}")
    rows = [body[p * n:(p + 1) * n].tolist() for p in range(c)]
    return tabulation_from_tables(spec, out_bits, rows, seed)


def save_tables(path, f: TabulationFn) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_tables(f))


def read_tables(path) -> TabulationFn:
    with open(path, "rb") as fh:
        return load_tables(fh.read())
