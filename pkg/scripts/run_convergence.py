#!/usr/bin/env python3
"""Iteration traces of the estimator at d=16, n=64.

Writes results/convergence.csv with per-iteration gap-to-limit, capacity,
and residual columns plus per-trial tail contraction ratios.
"""

import pathlib

from framescale import ExperimentConfig, run_convergence

D = 16
N = 64
TRIALS = 20
MASTER_SEED = 31337
TOL = 1e-8
OUT = pathlib.Path(__file__).resolve().parent.parent / "results"


def main():
    cfg = ExperimentConfig(
        kind="convergence", d=D, n_grid=(N,), trials=TRIALS,
        master_seed=MASTER_SEED, tol=TOL,
    )
    output = run_convergence(cfg)
    OUT.mkdir(exist_ok=True)
    path = OUT / "convergence.csv"
    path.write_text(output.csv_text, encoding="utf-8")
    print(f"wrote {path}")
    print(f"tail ratios <= 0.95 in {output.summary['tail_ratios_at_most_0.95']}"
          f"/{TRIALS} trials")


if __name__ == "__main__":
    main()
