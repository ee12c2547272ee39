#!/usr/bin/env python3
"""Desk-scale trend check: ER vs DyRC_VG_16 at N = 50, 100, 200 on set 1.

Prints median and IQR per cell for each ridge strength given, e.g.

    python3 scripts/trend_check.py --lambdas 1e-8,1e-6,1e-4 --seeds 0,1,2
"""

import argparse

from dyrc.experiment import ExperimentConfig, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lambdas", default="1e-6")
    p.add_argument("--seeds", default="0")
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--mode", choices=("open", "closed"), default="closed")
    p.add_argument("--parallel", type=int, default=1)
    a = p.parse_args()
    print("lambda   seed  variant      N    median      IQR   failed")
    for lam in (float(x) for x in a.lambdas.split(",")):
        for seed in (int(x) for x in a.seeds.split(",")):
            cfg = ExperimentConfig(
                sizes=(50, 100, 200), n_replicates=a.replicates, variants=("ER", "DyRC_VG_16"),
                seed=seed, ridge_lambda=lam, mode=a.mode,
            )
            _, summary = run_experiment(cfg, parallel=a.parallel)
            for s in summary:
                print(f"{lam:<8.0e} {seed:>4}  {s.variant.value:<11} {s.N:>4} {s.mae_median:>9.4g} {s.iqr:>9.4g} {s.count_failed:>6}")


if __name__ == "__main__":
    main()
