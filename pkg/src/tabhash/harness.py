"""``tabhash-lab``: seeded trial farms, witness scans and oracle self-tests.

Every output embeds the resolved config and the package version.  Trial ``t``
of a run with master seed ``s`` uses ``s ^ splitmix64(t)``; keys, hash tables
and the tie RNG are all derived from that value, so (config, seed) fixes the
output bytes.  Wall time is left out of the rows unless ``--timing`` is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import statistics
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from . import allocation as al
from . import checks
from . import cuckoo as ck
from . import hashgraph as hg
from . import tabulation as tb
from . import witness as wt
from .errors import ConfigError, InvariantViolation, ResourceError, TabhashError

SCHEMA_VERSION = 1
COMMANDS = ("maxload", "agl", "witness-scan", "cuckoo", "depstats", "selftest")
MAX_BALLS = 1 << 22
MASK64 = (1 << 64) - 1
TIE_SALT = 0x7469652D73656564  # keeps the tie RNG stream apart from the hash seed


@dataclass
class ExperimentConfig:
    command: str
    d: tuple = (2,)
    bin_bits: int | None = None
    log_n: tuple = ()
    m: int | None = None
    c: int = 4
    char_bits: int = 8
    trials: int = 30
    seed: int = 0
    tie: str = "random"
    eps: float = 0.5
    k: int | None = None
    density: float = 3.5
    min_hits: int | None = None
    check_inserter: bool = False
    allow_dups: bool = False
    timing: bool = False
    format: str = "csv"
    out: str | None = None

    @property
    def spec(self) -> tb.KeySpec:
        return tb.KeySpec(self.c, self.char_bits)

    def bin_bits_for(self, d: int) -> int:
        """Group width: ``--bin-bits`` if given, else ``n = 2^log_n`` split over ``d`` groups."""
        if self.bin_bits is not None:
            return self.bin_bits
        return max(0, round(self.log_n[0] - math.log2(d)))

    def n_for(self, d: int) -> int:
        return d << self.bin_bits_for(d)

    def balls(self) -> int:
        if self.m is not None:
            return self.m
        if self.command == "witness-scan":
            return int(self.density * self.n_for(self.d[0]))
        if self.bin_bits is None:
            return 1 << self.log_n[0]
        return min(self.n_for(d) for d in self.d)

    def k_for(self, d: int) -> int:
        if self.k is not None:
            return self.k
        n = self.n_for(d)
        if n < 4 or d < 2:
            return 2
        return math.ceil(math.log2(math.log2(n)) / math.log2(d)) + 2

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        spec = self.spec  # KeySpec validates c and char_bits
        if self.trials < 1:
            raise ConfigError("--trials must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError("--seed must fit in 64 bits")
        if self.format not in ("csv", "json"):
            raise ConfigError("--format must be csv or json")
        al.TieBreak.parse(self.tie)
        if self.command == "cuckoo":
            if not self.eps > 0:
                raise ConfigError("--eps must be positive")
            for b in self.log_n:
                if b < 2:
                    raise ConfigError("cuckoo needs n >= 4")
            return self
        if self.command in ("depstats", "selftest"):
            return self
        if not self.d or min(self.d) < 1:
            raise ConfigError("--d must be >= 1")
        if self.command == "agl" and min(self.d) < 2:
            raise ConfigError("agl needs d >= 2")
        if self.command == "witness-scan" and min(self.d) < 2:
            raise ConfigError("witness-scan needs d >= 2")
        if self.bin_bits is None and not self.log_n:
            raise ConfigError("give --bin-bits or --log-n")
        for d in self.d:
            if self.bin_bits_for(d) < 1:
                raise ConfigError(f"d={d} leaves fewer than 2 bins per group")
            if d * self.bin_bits_for(d) > 64:
                raise ConfigError(f"d={d} groups of {self.bin_bits_for(d)} bits exceed a 64-bit hash")
        m = self.balls()
        if m < 0:
            raise ConfigError("--m must be >= 0")
        if not self.allow_dups and m > spec.universe:
            raise ConfigError(f"m={m} distinct keys exceed the universe of {spec.universe}")
        if m > MAX_BALLS:
            raise ResourceError(f"m={m} exceeds the cap of {MAX_BALLS} balls per trial")
        if self.k is not None and self.k < 1:
            raise ConfigError("--k must be >= 1")
        if self.density <= 0:
            raise ConfigError("--density must be positive")
        return self

    def resolved(self) -> dict:
        out = asdict(self)
        out["d"] = list(self.d)
        out["log_n"] = list(self.log_n)
        if self.command in ("maxload", "agl", "witness-scan"):
            out["m"] = self.balls()
            out["bin_bits"] = {str(d): self.bin_bits_for(d) for d in self.d}
        if self.command == "witness-scan":
            out["k"] = {str(d): self.k_for(d) for d in self.d}
        return out


@dataclass
class TrialResult:
    trial: int
    seed: int
    d: int
    max_load: int
    histogram: dict
    witness: dict | None = None
    wall_time: float | None = None

    def hist_str(self) -> str:
        return ";".join(f"{k}:{v}" for k, v in self.histogram.items())


# --------------------------------------------------------------------------
# Trial plumbing


def trial_seed(seed: int, index: int) -> int:
    return (seed ^ tb.splitmix64(index)) & MASK64


def _trial_inputs(cfg: ExperimentConfig, t: int, out_bits: int):
    tseed = trial_seed(cfg.seed, t)
    rng = np.random.default_rng(tseed)
    keys = cfg.spec.random_keys(rng, cfg.balls(), distinct=not cfg.allow_dups)
    f = tb.make_tabulation(tb.splitmix64(tseed), cfg.spec, out_bits)
    return tseed, keys, f


def _out_bits(cfg: ExperimentConfig) -> int:
    return max(1, max(d * cfg.bin_bits_for(d) for d in cfg.d))


def worker_count() -> int:
    raw = os.environ.get("TABHASH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TABHASH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("TABHASH_THREADS must be >= 1")
    return n


def run_trials(fn, cfg: ExperimentConfig, indices) -> list:
    """``fn(cfg, t)`` for each index, results in index order."""
    indices = list(indices)
    workers = min(worker_count(), len(indices))
    if workers <= 1:
        return [fn(cfg, t) for t in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [cfg] * len(indices), indices))


def _mean_sd(xs) -> tuple[float, float]:
    if not xs:
        return float("nan"), float("nan")
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


# --------------------------------------------------------------------------
# Commands. Each returns (columns, rows, exit_code).


MAXLOAD_COLS = ["row_type", "trial", "seed", "d", "bin_bits", "n", "m", "max_load", "ties", "histogram",
                "mean", "stddev", "min", "max", "theory_scale", "wall_time"]


def _maxload_trial(cfg: ExperimentConfig, t: int) -> list[TrialResult]:
    tseed, keys, f = _trial_inputs(cfg, t, _out_bits(cfg))
    tie = al.TieBreak.parse(cfg.tie)
    out = []
    for d in cfg.d:
        start = time.perf_counter()
        st = al.allocate(keys, f, d, cfg.bin_bits_for(d), tie, tie_seed=tseed ^ TIE_SALT, log=False)
        res = TrialResult(t, tseed, d, al.max_load(st), al.load_histogram(st))
        res.witness = {"ties": st.tie_events}
        if cfg.timing:
            res.wall_time = time.perf_counter() - start
        out.append(res)
    return out


def cmd_maxload(cfg: ExperimentConfig):
    m = cfg.balls()
    per_trial = run_trials(_maxload_trial, cfg, range(cfg.trials))
    rows = []
    for results in per_trial:
        for r in results:
            rows.append({"row_type": "trial", "trial": r.trial, "seed": r.seed, "d": r.d,
                         "bin_bits": cfg.bin_bits_for(r.d), "n": cfg.n_for(r.d), "m": m,
                         "max_load": r.max_load, "ties": r.witness["ties"], "histogram": r.hist_str(),
                         "wall_time": r.wall_time})
    for d in cfg.d:
        xs = [r.max_load for results in per_trial for r in results if r.d == d]
        mean, sd = _mean_sd(xs)
        n = cfg.n_for(d)
        scale = al.plain_load_scale(n, d) if d >= 2 and n >= 4 else None
        rows.append({"row_type": "summary", "d": d, "bin_bits": cfg.bin_bits_for(d), "n": n, "m": m,
                     "mean": mean, "stddev": sd, "min": min(xs), "max": max(xs), "theory_scale": scale})
    return MAXLOAD_COLS, rows, 0


AGL_COLS = ["row_type", "trial", "seed", "d", "bin_bits", "n", "m", "max_random", "max_agl", "delta",
            "ties", "checksum", "mean_random", "mean_agl", "mean_delta", "scale_plain", "scale_agl"]


def key_checksum(keys: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(keys, dtype="<i8").tobytes())


def _agl_trial(cfg: ExperimentConfig, t: int) -> list[dict]:
    tseed, keys, f = _trial_inputs(cfg, t, _out_bits(cfg))
    out = []
    for d in cfg.d:
        bb = cfg.bin_bits_for(d)
        rnd = al.allocate(keys, f, d, bb, al.TieBreak.SEEDED_RANDOM, tie_seed=tseed ^ TIE_SALT, log=False)
        agl = al.allocate(keys, f, d, bb, al.TieBreak.ALWAYS_GO_LEFT, log=False)
        sums = key_checksum(rnd.keys), key_checksum(agl.keys)
        if sums[0] != sums[1] or not np.array_equal(rnd.choices, agl.choices):
            raise InvariantViolation(f"trial {t}: the two arms saw different key streams")
        a, b = al.max_load(rnd), al.max_load(agl)
        if rnd.tie_events == 0 and a != b:
            raise InvariantViolation(f"trial {t}: no ties yet the rules disagree")
        out.append({"row_type": "trial", "trial": t, "seed": tseed, "d": d, "bin_bits": bb,
                    "n": cfg.n_for(d), "m": len(keys), "max_random": a, "max_agl": b, "delta": b - a,
                    "ties": rnd.tie_events, "checksum": f"{sums[0]:08x}"})
    return out


def cmd_agl(cfg: ExperimentConfig):
    rows = [r for batch in run_trials(_agl_trial, cfg, range(cfg.trials)) for r in batch]
    for d in cfg.d:
        mine = [r for r in rows if r["row_type"] == "trial" and r["d"] == d]
        n = cfg.n_for(d)
        mr = statistics.fmean(r["max_random"] for r in mine)
        ma = statistics.fmean(r["max_agl"] for r in mine)
        rows.append({"row_type": "summary", "d": d, "bin_bits": cfg.bin_bits_for(d), "n": n, "m": cfg.balls(),
                     "mean_random": mr, "mean_agl": ma, "mean_delta": ma - mr,
                     "scale_plain": al.plain_load_scale(n, d), "scale_agl": al.agl_load_scale(n, d)})
    return AGL_COLS, rows, 0


WITNESS_COLS = ["row_type", "trial", "seed", "d", "variant", "k", "max_load", "kind", "order", "group",
                "load_graph_edges", "height", "sub_edges", "sub_vertices", "sub_slack", "sub_ok",
                "DNomial", "FibTree", "Tight", "Other", "qualifying", "scanned"]


def scan_trial(cfg: ExperimentConfig, t: int, d: int) -> dict:
    """One witness-scan trial at ``d``; ``kind`` is empty when no bin reaches ``k+1``."""
    bb = cfg.bin_bits_for(d)
    tseed, keys, f = _trial_inputs(cfg, t, d * bb)
    tie = al.TieBreak.parse(cfg.tie)
    variant = wt.Variant.GO_LEFT if tie is al.TieBreak.ALWAYS_GO_LEFT else wt.Variant.PLAIN
    k = cfg.k_for(d)
    st = al.allocate(keys, f, d, bb, tie, tie_seed=tseed ^ TIE_SALT)
    row = {"row_type": "trial", "trial": t, "seed": tseed, "d": d, "variant": variant.value, "k": k,
           "max_load": al.max_load(st), "kind": ""}
    if row["max_load"] < k + 1:
        return row
    G = hg.graph_from_choices(st.choices, d, st.g, keys)
    L = wt.build_load_graph(st, G, al.fullest_bin(st), k + 1, variant)
    w = wt.classify_witness(L)
    row.update(kind=w.kind, order=w.order, group=w.group, load_graph_edges=len(L.edges), height=L.height)
    if w.report is not None:
        r = w.report
        row.update(sub_edges=len(r.edges), sub_vertices=len(r.vertices), sub_slack=r.slack,
                   sub_ok=int(len(r.vertices) <= (d - 1) * len(r.edges) - 1 and hg.is_connected(G, r.edges)))
    return row


def _scan_trial_all(cfg: ExperimentConfig, t: int) -> list[dict]:
    return [scan_trial(cfg, t, d) for d in cfg.d]


def cmd_witness_scan(cfg: ExperimentConfig):
    """Scan up to ``trials`` trials; with ``--min-hits`` stop once every d has that many qualifying ones."""
    want = cfg.min_hits
    rows: list = []
    next_t = 0
    batch = max(1, worker_count()) * 8

    def hits(d):
        return sum(1 for r in rows if r["d"] == d and r["kind"])

    while next_t < cfg.trials:
        if want is not None and all(hits(d) >= want for d in cfg.d):
            break
        idx = range(next_t, min(cfg.trials, next_t + (batch if want is not None else cfg.trials)))
        for res in run_trials(_scan_trial_all, cfg, idx):
            rows.extend(res)
        next_t = idx.stop
    if want is not None:
        # keep exactly the first ``want`` qualifying trials per d, in trial order
        kept, seen = [], {d: 0 for d in cfg.d}
        for r in rows:
            if seen[r["d"]] >= want:
                continue
            kept.append(r)
            seen[r["d"]] += bool(r["kind"])
        rows = kept
    code = 0
    out = [r for r in rows if r["kind"]]
    for d in cfg.d:
        mine = [r for r in out if r["d"] == d]
        tally = {kind: sum(r["kind"] == kind for r in mine) for kind in ("DNomial", "FibTree", "Tight", "Other")}
        bad = sum(r.get("sub_ok") == 0 for r in mine)
        if tally["Other"] or bad:
            code = 1
        out.append({"row_type": "summary", "d": d, "variant": mine[0]["variant"] if mine else "",
                    "k": cfg.k_for(d), **tally, "sub_ok": int(bad == 0), "qualifying": len(mine),
                    "scanned": sum(1 for r in rows if r["d"] == d)})
    if code:
        print("witness-scan: a qualifying trial was not certified by a witness", file=sys.stderr)
    return WITNESS_COLS, out, code


CUCKOO_COLS = ["row_type", "n", "m", "eps", "trials", "failures", "fraction", "lo", "hi", "disagreements"]


def _cuckoo_n(cfg: ExperimentConfig, b: int):
    return ck.failure_experiment([1 << b], cfg.eps, cfg.trials, cfg.seed, cfg.spec, cfg.check_inserter)[0]


def cmd_cuckoo(cfg: ExperimentConfig):
    log_n = cfg.log_n or (10, 12, 14)
    results = run_trials(_cuckoo_n, cfg, log_n)
    rows = [{"row_type": "summary", "n": r.n, "m": r.m, "eps": cfg.eps, "trials": r.trials,
             "failures": r.failures, "fraction": r.fraction, "lo": r.lo, "hi": r.hi,
             "disagreements": r.inserter_disagreements} for r in results]
    code = 1 if any(r.inserter_disagreements for r in results) else 0
    return CUCKOO_COLS, rows, code


SUITE_COLS = ["row_type", "suite", "instances", "violations", "first_failure"]


def _suite_rows(suites) -> tuple[list, list, int]:
    rows, cols = [], list(SUITE_COLS)
    for s in suites:
        row = {"row_type": "summary", **s.row()}
        for key in row:
            if key not in cols:
                cols.append(key)
        rows.append(row)
    failed = [s for s in suites if not s.ok]
    if failed:
        print(f"invariant violated: {failed[0].name}: {failed[0].first_failure}", file=sys.stderr)
    return cols, rows, 1 if failed else 0


def cmd_depstats(cfg: ExperimentConfig):
    suites = [checks.dependence_suite(n_sets=cfg.trials, n_seeds=20, seed=cfg.seed),
              checks.counting_suite(seed=cfg.seed),
              checks.pair_class_suite(seed=cfg.seed)]
    return _suite_rows(suites)


def cmd_selftest(cfg: ExperimentConfig):
    s = cfg.seed
    suites = [checks.dependence_suite(n_sets=300, n_seeds=10, seed=s),
              checks.counting_suite(max_side=8, seed=s, random_instances=10),
              checks.pair_class_suite(n_random=5, max_m=128, seed=s),
              checks.replay_suite(instances=50, seed=s),
              checks.tree_characterization_suite(samples=100, seed=s),
              checks.counts_suite(max_k=4),
              checks.fibonacci_suite(),
              checks.cuckoo_orientation_suite(instances=200, seed=s),
              _table_roundtrip_suite(s)]
    return _suite_rows(suites)


def _table_roundtrip_suite(seed: int) -> checks.SuiteResult:
    res = checks.SuiteResult("table_file_roundtrip")
    for spec, bits in [(tb.KeySpec(), 32), (tb.KeySpec(2, 4), 64), (tb.KeySpec(3, 5), 7)]:
        f = tb.make_tabulation(seed, spec, bits)
        res.instances += 1
        if tb.load_tables(tb.dump_tables(f)) != f:
            res.fail(f"TABH round trip changed the function for {spec}, out_bits={bits}")
    return res


HANDLERS = {"maxload": cmd_maxload, "agl": cmd_agl, "witness-scan": cmd_witness_scan,
            "cuckoo": cmd_cuckoo, "depstats": cmd_depstats, "selftest": cmd_selftest}


# --------------------------------------------------------------------------
# Output


def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        return None if math.isnan(v) else float(f"{v:.6g}")
    return v


def render(cfg: ExperimentConfig, cols: list, rows: list) -> str:
    meta = {"tool": "tabhash-lab", "version": __version__, "schema": SCHEMA_VERSION, "config": cfg.resolved()}
    if cfg.format == "json":
        body = {**meta, "columns": cols,
                "rows": [{c: _json_value(r.get(c)) for c in cols} for r in rows]}
        return json.dumps(body, sort_keys=False, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt_value(r.get(c)) for c in cols])
    return buf.getvalue()


def run(cfg: ExperimentConfig) -> tuple[str, int]:
    cfg.validate()
    cols, rows, code = HANDLERS[cfg.command](cfg)
    return render(cfg, cols, rows), code


# --------------------------------------------------------------------------
# CLI


def _int_list(s: str) -> tuple:
    try:
        return tuple(int(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


DEFAULTS = {
    "maxload": {"d": (1, 2), "log_n": (16,), "tie": "random"},
    "agl": {"d": (4,), "log_n": (16,), "tie": "random"},
    "witness-scan": {"d": (2,), "bin_bits": 6, "tie": "random", "trials": 200},
    "cuckoo": {"trials": 200},
    "depstats": {"trials": 2000},
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tabhash-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--d", type=_int_list, help="choices per ball; comma list allowed (maxload, agl)")
    p.add_argument("--bin-bits", type=int, help="bins per group = 2^B")
    p.add_argument("--log-n", type=_int_list, help="total bins n = 2^L (split over d groups); comma list for cuckoo")
    p.add_argument("--m", type=int, help="balls/keys per trial")
    p.add_argument("--c", type=int, default=4, help="characters per key")
    p.add_argument("--char-bits", type=int, default=8)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tie", choices=("random", "left", "agl"))
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--k", type=int, help="witness-scan threshold; default ceil(lg lg n / lg d) + 2")
    p.add_argument("--density", type=float, default=3.5, help="witness-scan: m = density * n when --m is absent")
    p.add_argument("--min-hits", type=int, help="witness-scan: stop after this many qualifying trials per d")
    p.add_argument("--check-inserter", action="store_true", help="cuckoo: also run the eviction inserter")
    p.add_argument("--allow-dups", action="store_true", help="draw keys with replacement")
    p.add_argument("--timing", action="store_true", help="add wall time per trial (breaks byte determinism)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="output path (default stdout)")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = {f.name: f.default for f in fields(ExperimentConfig) if not callable(f.default)}
    base.update(DEFAULTS.get(args.command, {}))
    given = {k: v for k, v in vars(args).items() if v is not None and k in base}
    if args.command in ("maxload", "agl") and args.bin_bits is not None and args.log_n is None:
        base["log_n"] = ()
    base.update(given)
    base["command"] = args.command
    return ExperimentConfig(**base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        text, code = run(cfg)
    except ResourceError as e:
        print(f"resource cap: {e}", file=sys.stderr)
        return 3
    except MemoryError:
        print("resource cap: out of memory", file=sys.stderr)
        return 3
    except TabhashError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
