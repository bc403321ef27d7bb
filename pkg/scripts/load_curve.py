#!/usr/bin/env python3
"""Mean max load against lg n for each d, with the plain and Always-Go-Left scales alongside.

Writes CSV to stdout: d, log_n, tie, mean, stddev, scale.
"""
import argparse
import csv
import statistics
import sys
from dataclasses import replace

from tabhash import allocation as al
from tabhash.harness import ExperimentConfig, cmd_agl, fmt_value


def cli() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", default="2,3,4")
    ap.add_argument("--log-n", default="10,12,14,16")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ds = tuple(int(x) for x in args.d.split(","))
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["d", "log_n", "tie", "mean", "stddev", "scale"])
    base = ExperimentConfig("agl", d=ds, trials=args.trials, seed=args.seed)
    for ln in (int(x) for x in args.log_n.split(",")):
        cfg = replace(base, log_n=(ln,)).validate()
        _, rows, _ = cmd_agl(cfg)
        for d in ds:
            mine = [r for r in rows if r["row_type"] == "trial" and r["d"] == d]
            n = cfg.n_for(d)
            for tie, col, scale in (("random", "max_random", al.plain_load_scale(n, d)),
                                    ("agl", "max_agl", al.agl_load_scale(n, d))):
                xs = [r[col] for r in mine]
                mean = statistics.fmean(xs)
                sd = statistics.stdev(xs) if len(xs) > 1 else 0.0
                out.writerow([d, ln, tie, fmt_value(mean), fmt_value(sd), fmt_value(scale)])
    return 0


if __name__ == "__main__":
    sys.exit(cli())
