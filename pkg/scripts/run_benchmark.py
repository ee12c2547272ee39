#!/usr/bin/env python3
"""Full four-variant sweep (6 sizes x 100 replicates) on one Duffing set.

    python3 scripts/run_benchmark.py --set 1 --parallel 0 --out results/set1

Writes the same files as ``dyrc run``.
"""

import argparse
import sys

from dyrc.cli import main


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--set", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=0)
    p.add_argument("--mode", choices=("open", "closed"), default="closed")
    p.add_argument("--out", default=None)
    return p.parse_args()


if __name__ == "__main__":
    a = parse()
    out = a.out or f"results/set{a.set}"
    sys.exit(main(["run", "--set", str(a.set), "--seed", str(a.seed), "--parallel", str(a.parallel),
                   "--mode", a.mode, "--out", out]))
