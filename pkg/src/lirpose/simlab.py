"""Synthetic two-view scenes, match corruption and Monte Carlo sweeps."""

from __future__ import annotations

import enum
import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import GenerationExhausted, LirposeError
from .geometry import PairSet, RelativePose, normalize, rodrigues, rotation_angular_error
from .lirp import lirp_solve
from .robust import GncConfig, RansacConfig, gnc_irls, gnc_ransac, refine_ligt

MAX_REJECTION_ROUNDS = 200
FAILURE_ERROR_DEG = 180.0


class SceneKind(str, enum.Enum):
    NORMAL = "normal"
    PLANAR = "planar"


class Estimator(str, enum.Enum):
    LIRP = "lirp"
    GNC_IRLS = "gnc-irls"
    GNC_RANSAC = "gnc-ransac"
    LIGT_REFINE = "ligt-refine"


@dataclass(frozen=True)
class SceneConfig:
    scene_kind: SceneKind = SceneKind.NORMAL
    n_points: int = 30
    depth_range: tuple = (4.0, 18.0)
    max_translation: float = 2.0
    rotation_perturbation_deg: float = 0.5
    focal_px: float = 800.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scene_kind", SceneKind(self.scene_kind))
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError(f"depth_range must satisfy 0 < min < max, got {self.depth_range}")
        if self.n_points < 6:
            raise ValueError("n_points must be at least 6")


@dataclass(frozen=True)
class TwoViewScene:
    pose_true: RelativePose
    points: np.ndarray
    clean_pairs: PairSet
    labels: np.ndarray
    # translation before normalization, in scene units
    translation: np.ndarray
    config: SceneConfig


@dataclass(frozen=True)
class CorruptedMatches:
    pairs: PairSet
    # True for inliers
    labels: np.ndarray


def _random_directions(rng, k):
    return normalize(rng.standard_normal((k, 3)))


def _sample_pose(cfg: SceneConfig, rng):
    p = np.radians(cfg.rotation_perturbation_deg)
    R = rodrigues(rng.uniform(-p, p, 3))
    # uniform in the ball of radius max_translation
    t = _random_directions(rng, 1)[0] * cfg.max_translation * rng.uniform() ** (1.0 / 3.0)
    return R, t


def _visible(X, R, t, lo, hi):
    d = np.linalg.norm(X, axis=1)
    zr = X @ R[2] + t[2]
    return (d >= lo) & (d <= hi) & (X[:, 2] > 0) & (zr > 0)


def _normal_points(cfg, R, t, rng, k):
    lo, hi = cfg.depth_range
    X = _random_directions(rng, k) * rng.uniform(lo, hi, k)[:, None]
    return X[_visible(X, R, t, lo, hi)]


def _plane_sampler(cfg, R, t, rng):
    lo, hi = cfg.depth_range
    centre_right = -R.T @ t
    for _ in range(MAX_REJECTION_ROUNDS):
        d = _random_directions(rng, 1)[0]
        if d[2] < 0.3:
            continue
        P0 = d * rng.uniform(lo, hi)
        n = _random_directions(rng, 1)[0]
        # keep both camera centres well off the plane
        if abs(n @ P0) > 0.25 * lo and abs(n @ (P0 - centre_right)) > 0.25 * lo:
            break
    else:
        raise GenerationExhausted("could not place a plane in front of both cameras")
    e1 = normalize(np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0]))
    e2 = np.cross(n, e1)

    def sample(k):
        ab = rng.uniform(-hi, hi, (k, 2))
        X = P0 + ab[:, :1] * e1 + ab[:, 1:] * e2
        return X[_visible(X, R, t, lo, hi)]

    return sample


def generate_scene(config: SceneConfig, rng: Optional[np.random.Generator] = None) -> TwoViewScene:
    """Random pose plus points seen in front of both cameras.

    NORMAL points have a uniformly random direction and a distance drawn
    uniformly from ``depth_range``; PLANAR points lie on one random plane.
    Points failing the chirality test are rejected and redrawn.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.n_points
    for _ in range(MAX_REJECTION_ROUNDS):
        R, t = _sample_pose(config, rng)
        if np.linalg.norm(t) > 1e-9:
            break
    else:
        raise GenerationExhausted("translation sampling failed")
    if config.scene_kind is SceneKind.PLANAR:
        sampler = _plane_sampler(config, R, t, rng)
    else:
        sampler = lambda k: _normal_points(config, R, t, rng, k)  # noqa: E731
    chunks, have = [], 0
    for _ in range(MAX_REJECTION_ROUNDS):
        X = sampler(4 * n)
        chunks.append(X)
        have += len(X)
        if have >= n:
            break
    else:
        raise GenerationExhausted(f"only {have} of {n} points satisfy chirality")
    X = np.concatenate(chunks)[:n]
    Xr = X @ R.T + t
    pairs = PairSet(normalize(X), normalize(Xr))
    return TwoViewScene(
        pose_true=RelativePose(R, t),
        points=X,
        clean_pairs=pairs,
        labels=np.ones(n, dtype=bool),
        translation=t,
        config=config,
    )


def _add_pixel_noise(b, sigma, rng):
    m = b / b[:, 2:3]
    m[:, :2] += rng.normal(0.0, sigma, (len(b), 2))
    return normalize(m)


def corrupt_matches(
    scene: TwoViewScene, noise_px: float, outlier_fraction: float, rng: Optional[np.random.Generator] = None
) -> CorruptedMatches:
    """Add image noise and replace a fraction of right-view observations.

    Noise has standard deviation ``noise_px / focal_px`` on normalized image
    coordinates of both views.  Outliers take the right bearing of a fresh
    point drawn from the NORMAL point process, so they stay in front of the
    right camera.
    """
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    rng = np.random.default_rng(scene.config.seed + 1) if rng is None else rng
    cfg = scene.config
    x = scene.clean_pairs.x.copy()
    xp = scene.clean_pairs.x_prime.copy()
    n = len(x)
    labels = np.ones(n, dtype=bool)
    n_out = int(math.floor(outlier_fraction * n + 1e-9))
    if n_out:
        idx = np.sort(rng.choice(n, n_out, replace=False))
        R, t = scene.pose_true.R, scene.translation
        fresh = np.zeros((0, 3))
        for _ in range(MAX_REJECTION_ROUNDS):
            fresh = np.concatenate([fresh, _normal_points(cfg, R, t, rng, 4 * n_out)])
            if len(fresh) >= n_out:
                break
        else:
            raise GenerationExhausted("could not draw outlier observations")
        xp[idx] = normalize(fresh[:n_out] @ R.T + t)
        labels[idx] = False
    if noise_px > 0:
        sigma = noise_px / cfg.focal_px
        x = _add_pixel_noise(x, sigma, rng)
        xp = _add_pixel_noise(xp, sigma, rng)
    return CorruptedMatches(PairSet(x, xp, scene.clean_pairs.ids), labels)


# -- Monte Carlo --------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    scene_kind: SceneKind
    n_points: int
    noise_px: float
    outlier_fraction: float


@dataclass(frozen=True)
class Experiment:
    scene: SceneConfig = SceneConfig()
    cells: Sequence[Cell] = ()
    estimator: Estimator = Estimator.LIRP
    n_trials: int = 1
    gnc: GncConfig = GncConfig()
    ransac: RansacConfig = RansacConfig()
    seed: int = 0
    # "ppo": the solver's own ranking; "truth": plain LiRP picks the candidate
    # closest to the true pose (benchmark protocol for the planar ambiguity)
    identification: str = "ppo"

    def __post_init__(self):
        if self.identification not in ("ppo", "truth"):
            raise ValueError(f"unknown identification {self.identification!r}")

    @staticmethod
    def grid(scene_kinds, n_points, noise_px, outlier_fractions) -> list[Cell]:
        return [
            Cell(SceneKind(k), int(n), float(s), float(f))
            for k, n, s, f in itertools.product(scene_kinds, n_points, noise_px, outlier_fractions)
        ]


@dataclass
class TrialResult:
    cell_index: int
    trial: int
    rotation_error_deg: float
    d_min: float
    predicted_inliers: np.ndarray
    labels: np.ndarray
    runtime_s: float
    failed: bool = False
    error: str = ""

    @property
    def counts(self):
        tp = int(np.sum(self.predicted_inliers & self.labels))
        fp = int(np.sum(self.predicted_inliers & ~self.labels))
        fn = int(np.sum(~self.predicted_inliers & self.labels))
        return tp, fp, fn


def precision_recall(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else float("nan")
    recall = tp / (tp + fn) if tp + fn else float("nan")
    return precision, recall


CSV_COLUMNS = [
    "cell",
    "scene_kind",
    "n_points",
    "noise_px",
    "outlier_fraction",
    "estimator",
    "n_trials",
    "mean_rot_err_deg",
    "median_rot_err_deg",
    "d_min_mean",
    "d_min_min",
    "precision",
    "recall",
    "failures",
    "mean_runtime_ms",
]
TIMING_COLUMNS = ("mean_runtime_ms",)


@dataclass
class MetricsTable:
    experiment: Experiment
    trials: list = field(default_factory=list)

    def cell_trials(self, i) -> list[TrialResult]:
        return [r for r in self.trials if r.cell_index == i]

    def errors(self, i) -> np.ndarray:
        return np.array([r.rotation_error_deg for r in self.cell_trials(i)])

    def summary(self, i) -> dict:
        cell = self.experiment.cells[i]
        rows = self.cell_trials(i)
        err = np.array([r.rotation_error_deg for r in rows])
        dm = np.array([r.d_min for r in rows])
        dm = dm[np.isfinite(dm)]
        tp, fp, fn = np.sum([r.counts for r in rows], axis=0) if rows else (0, 0, 0)
        precision, recall = precision_recall(int(tp), int(fp), int(fn))
        return {
            "cell": i,
            "scene_kind": cell.scene_kind.value,
            "n_points": cell.n_points,
            "noise_px": cell.noise_px,
            "outlier_fraction": cell.outlier_fraction,
            "estimator": self.experiment.estimator.value,
            "n_trials": len(rows),
            "mean_rot_err_deg": float(err.mean()) if len(err) else float("nan"),
            "median_rot_err_deg": float(np.median(err)) if len(err) else float("nan"),
            "d_min_mean": float(dm.mean()) if len(dm) else float("nan"),
            "d_min_min": float(dm.min()) if len(dm) else float("nan"),
            "precision": precision,
            "recall": recall,
            "failures": sum(r.failed for r in rows),
            "mean_runtime_ms": 1e3 * float(np.mean([r.runtime_s for r in rows])) if rows else float("nan"),
        }

    def summaries(self) -> list[dict]:
        return [self.summary(i) for i in range(len(self.experiment.cells))]


def trial_rng(seed: int, cell_index: int, trial: int) -> np.random.Generator:
    # per-(cell, trial) streams so adding cells or trials never shifts others
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell_index, trial)))


def run_estimator(estimator: Estimator, pairs: PairSet, experiment: Experiment, rng, reference=None):
    """Returns ``(pose, predicted_inlier_mask, d_min)``."""
    n = len(pairs)
    if estimator is Estimator.LIRP:
        pose, diag = lirp_solve(pairs, reference=reference)
        return pose, np.ones(n, dtype=bool), diag.d_min
    if estimator in (Estimator.GNC_IRLS, Estimator.LIGT_REFINE):
        pose, state = gnc_irls(pairs, experiment.gnc)
        if estimator is Estimator.LIGT_REFINE:
            pose = refine_ligt(pose, pairs, state.weights)
        d_min = state.diagnostics.d_min if state.diagnostics is not None else float("nan")
        return pose, state.weights >= 0.5, d_min
    seed = int(rng.integers(2**63))
    pose, inliers, info = gnc_ransac(pairs, replace(experiment.ransac, seed=seed), experiment.gnc)
    mask = np.zeros(n, dtype=bool)
    mask[inliers] = True
    return pose, mask, info.d_min


def run_trial(experiment: Experiment, cell_index: int, trial: int) -> TrialResult:
    cell = experiment.cells[cell_index]
    rng = trial_rng(experiment.seed, cell_index, trial)
    cfg = replace(experiment.scene, scene_kind=cell.scene_kind, n_points=cell.n_points)
    scene = generate_scene(cfg, rng)
    matches = corrupt_matches(scene, cell.noise_px, cell.outlier_fraction, rng)
    start = time.perf_counter()
    try:
        reference = scene.pose_true if experiment.identification == "truth" else None
        pose, mask, d_min = run_estimator(experiment.estimator, matches.pairs, experiment, rng, reference)
    except LirposeError as exc:
        return TrialResult(
            cell_index,
            trial,
            FAILURE_ERROR_DEG,
            float("nan"),
            np.zeros(len(matches.labels), dtype=bool),
            matches.labels,
            time.perf_counter() - start,
            failed=True,
            error=type(exc).__name__,
        )
    elapsed = time.perf_counter() - start
    err = rotation_angular_error(scene.pose_true.R, pose.R)
    return TrialResult(cell_index, trial, err, d_min, mask, matches.labels, elapsed)


def monte_carlo(experiment: Experiment, progress=None) -> MetricsTable:
    if experiment.n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    table = MetricsTable(experiment)
    for i in range(len(experiment.cells)):
        for j in range(experiment.n_trials):
            table.trials.append(run_trial(experiment, i, j))
            if progress is not None:
                progress(i, j)
    return table
