#!/usr/bin/env python3
"""Error-versus-samples sweep at the default desk scale.

Writes results/sample_complexity.csv; the summary block at the end of the
CSV carries the per-n medians and the fitted log-log slope (theory: -1/2).
"""

import pathlib

from framescale import ExperimentConfig, RadialLaw, run_sample_complexity

D = 16
N_GRID = (256, 512, 1024, 2048, 4096)
TRIALS = 50
MASTER_SEED = 20259
OUT = pathlib.Path(__file__).resolve().parent.parent / "results"


def main():
    cfg = ExperimentConfig(
        kind="sample-complexity",
        d=D,
        n_grid=N_GRID,
        trials=TRIALS,
        radial=RadialLaw.constant(),
        master_seed=MASTER_SEED,
    )
    output = run_sample_complexity(cfg)
    OUT.mkdir(exist_ok=True)
    path = OUT / "sample_complexity.csv"
    path.write_text(output.csv_text, encoding="utf-8")
    print(f"wrote {path}")
    print(f"slope {output.summary['slope_loglog']:+.3f}  "
          f"median ratio {output.summary['median_ratio_first_to_last']:.2f}")


if __name__ == "__main__":
    main()
