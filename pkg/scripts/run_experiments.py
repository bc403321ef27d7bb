#!/usr/bin/env python3
"""Run the desk-scale experiments and write one CSV per experiment into ``--outdir``."""
import argparse
import pathlib
import sys

from tabhash.harness import main

EXPERIMENTS = {
    "maxload": ["maxload", "--d", "1,2", "--log-n", "16", "--trials", "30"],
    "agl": ["agl", "--d", "2,3,4", "--log-n", "16", "--trials", "50"],
    "cuckoo": ["cuckoo", "--log-n", "10,12,14", "--trials", "200", "--check-inserter"],
    "witness_d2": ["witness-scan", "--d", "2", "--bin-bits", "6", "--min-hits", "200", "--trials", "5000"],
    "witness_d3": ["witness-scan", "--d", "3", "--bin-bits", "4", "--min-hits", "200", "--trials", "5000"],
    "depstats": ["depstats"],
}


def cli() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", choices=sorted(EXPERIMENTS))
    args = ap.parse_args()
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    for name in args.only or EXPERIMENTS:
        path = out / f"{name}.csv"
        code = main(EXPERIMENTS[name] + ["--seed", str(args.seed), "--out", str(path)])
        print(f"{name}: exit {code} -> {path}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(cli())
