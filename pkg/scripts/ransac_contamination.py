"""GNC-RANSAC at high contamination, plus the odds of a usable sample.

A sample is counted usable when at most 40% of its pairs are outliers,
the contamination a single GNC-IRLS fit still handles.

    python scripts/ransac_contamination.py --trials 100
"""

import argparse

import numpy as np
from scipy.stats import hypergeom

from lirpose.robust import RansacConfig
from lirpose.simlab import Estimator, Experiment, monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n-points", type=int, default=300)
    ap.add_argument("--ns", type=int, default=30)
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8])
    args = ap.parse_args()
    need = int(np.ceil(0.6 * args.ns))
    for f in args.fractions:
        inliers = args.n_points - int(np.floor(f * args.n_points + 1e-9))
        p = hypergeom(args.n_points, inliers, args.ns).sf(need - 1)
        print(f"outliers={f:.1f} P(sample usable)={p:.2e} P(any of {args.iters} usable)={1 - (1 - p) ** args.iters:.3f}")
    exp = Experiment(
        cells=Experiment.grid(["normal", "planar"], [args.n_points], [1.0], args.fractions),
        estimator=Estimator.GNC_RANSAC,
        n_trials=args.trials,
        ransac=RansacConfig(sample_size=args.ns, max_iterations=args.iters),
        seed=args.seed,
    )
    table = monte_carlo(exp)
    for i, cell in enumerate(exp.cells):
        err = table.errors(i)
        s = table.summary(i)
        print(
            f"{cell.scene_kind.value:6s} outliers={cell.outlier_fraction:.1f} median={np.median(err):.3f}deg "
            f"mean={err.mean():.3f}deg precision={s['precision']:.3f} recall={s['recall']:.3f} "
            f"runtime={s['mean_runtime_ms']:.0f}ms"
        )


if __name__ == "__main__":
    main()
