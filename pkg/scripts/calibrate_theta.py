"""Calibrate the default GNC-RANSAC inlier threshold.

Simulates outlier-free scenes at 1 px noise, evaluates the LiGT residual of
every pair at the true pose and reports high percentiles.  The 95th
percentile (rounded up to two significant digits) is the library default.

    python scripts/calibrate_theta.py --trials 2000
"""

import argparse

import numpy as np

from lirpose.residuals import ligt_residuals
from lirpose.simlab import SceneConfig, SceneKind, corrupt_matches, generate_scene


def collect(kind, trials, n_points, noise_px, seed):
    out = []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        scene = generate_scene(SceneConfig(scene_kind=kind, n_points=n_points), rng)
        m = corrupt_matches(scene, noise_px, 0.0, rng)
        pose = scene.pose_true
        out.append(ligt_residuals(pose.R, pose.t, m.pairs.x, m.pairs.x_prime))
    return np.concatenate(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--n-points", type=int, default=30)
    ap.add_argument("--noise-px", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args()
    pooled = []
    for kind in SceneKind:
        v = collect(kind, args.trials, args.n_points, args.noise_px, args.seed)
        pooled.append(v)
        q = np.percentile(v, [50, 90, 95, 99])
        print(f"{kind.value:7s} p50={q[0]:.3e} p90={q[1]:.3e} p95={q[2]:.3e} p99={q[3]:.3e}")
    v = np.concatenate(pooled)
    p95 = np.percentile(v, 95)
    digits = -int(np.floor(np.log10(p95))) + 1
    print(f"pooled  p95={p95:.4e}  suggested theta={np.ceil(p95 * 10**digits) / 10**digits:.2g}")


if __name__ == "__main__":
    main()
