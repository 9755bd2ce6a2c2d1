"""Noise-free and 0.1 px accuracy of the plain solver on both scene kinds.

Prints mean rotation error and d_min per cell, once with the solver's own
pose-only ranking and once with the candidate closest to the true pose.

    python scripts/lirp_accuracy.py --trials 500
"""

import argparse

import numpy as np

from lirpose.simlab import Estimator, Experiment, monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    cells = Experiment.grid(["planar", "normal"], [30], [0.0, 0.1], [0.0])
    for ident in ("truth", "ppo"):
        exp = Experiment(cells=cells, estimator=Estimator.LIRP, n_trials=args.trials, seed=args.seed, identification=ident)
        table = monte_carlo(exp)
        for i, cell in enumerate(cells):
            err = table.errors(i)
            dm = np.array([t.d_min for t in table.cell_trials(i)])
            print(
                f"{ident:5s} {cell.scene_kind.value:6s} noise={cell.noise_px:.1f}px "
                f"mean={err.mean():.3e}deg median={np.median(err):.3e}deg exact={np.mean(err <= 1e-6):.3f} "
                f"d_min mean={np.nanmean(dm):.3f} share>0.5={np.mean(dm > 0.5):.3f}"
            )


if __name__ == "__main__":
    main()
