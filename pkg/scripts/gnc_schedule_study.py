"""GNC-IRLS median rotation error per outlier fraction for both mu schedules.

    python scripts/gnc_schedule_study.py --trials 100
"""

import argparse

import numpy as np

from lirpose.robust import GncConfig
from lirpose.simlab import Estimator, Experiment, monte_carlo

SCHEDULES = {
    "geometric x1.1": GncConfig(),
    "geometric x1.2": GncConfig(mu_factor=1.2),
    "power 1.1^1.4": GncConfig(mu_schedule="power"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    args = ap.parse_args()
    cells = Experiment.grid(["normal", "planar"], [30], [1.0], args.fractions)
    for name, gnc in SCHEDULES.items():
        table = monte_carlo(Experiment(cells=cells, estimator=Estimator.GNC_IRLS, n_trials=args.trials, seed=args.seed, gnc=gnc))
        for i, cell in enumerate(cells):
            err = table.errors(i)
            print(
                f"{name:15s} {cell.scene_kind.value:6s} outliers={cell.outlier_fraction:.1f} "
                f"median={np.median(err):.3f}deg share<1deg={np.mean(err < 1):.2f}"
            )


if __name__ == "__main__":
    main()
