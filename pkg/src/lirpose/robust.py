"""Outlier-robust pose estimation built on the weighted six-point solver.

``gnc_irls`` alternates weighted solves with truncated-least-squares weight
updates under a graduated non-convexity schedule; ``gnc_ransac`` runs it on
random subsets and keeps the largest consensus set under the LiGT residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import NoModelFound, NoValidCandidate, TooFewEffectivePairs, ZeroScale
from .geometry import PairsLike, RelativePose, as_pairset, chirality_mask, cross, normalize, rodrigues, skew
from .lirp import LirpDiagnostics, lirp_solve
from .residuals import ligt_residuals

MAD_CONSISTENCY = 1.4826
THRESHOLD_FACTOR = 5.54
ZERO_SCALE_TOL = 1e-15
# beyond this the TLS weights are binary to ~1e-8 and mu**p would overflow
MU_MAX = 1e8
MU_MIN = 1e-12

# 95th percentile of the LiGT residual at the true pose for inliers with 1 px
# noise (focal 800 px), from scripts/calibrate_theta.py
DEFAULT_THETA = 2.4e-4


@dataclass(frozen=True)
class GncConfig:
    """Settings of the GNC-IRLS loop.

    Two continuation schedules are available:

    ``"geometric"`` (default)
        ``mu`` starts from the data, ``c^2 / (2 max|v|^2 - c^2)`` on the
        first residuals, so that every pair begins inside the convex band,
        and grows as ``mu *= mu_factor``.
    ``"power"``
        ``mu`` starts at ``mu0`` and grows as ``mu **= mu_power``.
    """

    stop_epsilon: float = 1e-8
    max_iterations: int = 100
    mu_schedule: str = "geometric"
    mu_factor: float = 1.1
    mu0: float = 1.1
    mu_power: float = 1.4
    # "mad": median absolute deviation about the median; "median": median of |v|
    sigma_mode: str = "mad"

    def __post_init__(self):
        if self.mu_schedule not in ("geometric", "power"):
            raise ValueError(f"unknown mu_schedule {self.mu_schedule!r}")
        if self.mu_factor <= 1.0:
            raise ValueError("mu_factor must exceed 1")
        if self.mu0 <= 1.0 or self.mu_power <= 1.0:
            raise ValueError("power schedule needs mu0 > 1 and mu_power > 1")
        if self.sigma_mode not in ("mad", "median"):
            raise ValueError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class RansacConfig:
    sample_size: int = 30
    max_iterations: int = 50
    inlier_threshold: float = DEFAULT_THETA
    stop_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 6:
            raise ValueError("sample_size must be at least 6")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")


@dataclass
class GncState:
    weights: np.ndarray
    sigma: float = 0.0
    c: float = 0.0
    mu: float = 1.1
    epsilon: float = math.inf
    iteration: int = 0
    converged: bool = False
    residuals: Optional[np.ndarray] = None
    epsilon_history: list = field(default_factory=list)
    diagnostics: Optional[LirpDiagnostics] = None


@dataclass(frozen=True)
class RansacInfo:
    n_inliers: int
    best_round: int
    round_inliers: tuple
    d_min: float


def lower_median(v) -> float:
    s = np.sort(np.asarray(v, dtype=float))
    return float(s[(len(s) - 1) // 2])


def mad_sigma(residuals, mode: str = "mad") -> float:
    v = np.asarray(residuals, dtype=float)
    if len(v) == 0:
        raise ValueError("mad_sigma needs at least one residual")
    if mode == "median":
        return MAD_CONSISTENCY * lower_median(np.abs(v))
    return MAD_CONSISTENCY * lower_median(np.abs(v - lower_median(v)))


def gnc_weight_update(residuals, c: float, mu: float) -> np.ndarray:
    """Truncated-least-squares GNC weights, clipped to [0, 1]."""
    if c <= ZERO_SCALE_TOL:
        raise ZeroScale(f"threshold {c:.3g} is numerically zero")
    if mu <= 0:
        raise ValueError("mu must be positive")
    v = np.abs(np.asarray(residuals, dtype=float))
    with np.errstate(divide="ignore", over="ignore"):
        w = c * math.sqrt(mu * (mu + 1.0)) / v - mu
    return np.clip(np.where(v == 0, 1.0, w), 0.0, 1.0)


def initial_mu(residuals, c: float, config: GncConfig) -> float:
    if config.mu_schedule == "power":
        return config.mu0
    vmax2 = float(np.max(np.abs(residuals))) ** 2
    if 2.0 * vmax2 <= c * c:
        # every residual is already inside the truncation band
        return MU_MAX
    return max(c * c / (2.0 * vmax2 - c * c), MU_MIN)


def next_mu(mu: float, config: GncConfig) -> float:
    if config.mu_schedule == "power":
        return min(mu**config.mu_power, MU_MAX)
    return min(mu * config.mu_factor, MU_MAX)


def gnc_irls(pairs: PairsLike, config: GncConfig = GncConfig()) -> tuple[RelativePose, GncState]:
    """Robust pose by alternating weighted solves and TLS weight updates.

    Starts from unit weights; after each solve the LiGT residuals give the
    scale ``sigma``, the threshold ``c = 5.54 sigma`` and new weights.
    Stops once the weighted residual sum changes by less than
    ``stop_epsilon``.
    """
    ps = as_pairset(pairs)
    n = len(ps)
    if n < 6:
        raise TooFewEffectivePairs(f"{n} pairs, need 6")
    state = GncState(weights=np.ones(n), mu=float("nan"))
    pose = None
    eps_prev = math.inf
    for k in range(config.max_iterations):
        try:
            pose_k, diag = lirp_solve(ps, state.weights)
        except NoValidCandidate:
            if pose is None:
                raise
            state.converged = False
            return pose, state
        pose = pose_k
        state.diagnostics = diag
        v = ligt_residuals(pose.R, pose.t, ps.x, ps.x_prime)
        sigma = mad_sigma(v, config.sigma_mode)
        c = THRESHOLD_FACTOR * sigma
        if k == 0:
            state.mu = initial_mu(v, c, config) if c > ZERO_SCALE_TOL else MU_MAX
        try:
            w = gnc_weight_update(v, c, state.mu)
        except ZeroScale:
            w = np.ones(n)
        if np.count_nonzero(w > 1e-9) < 6:
            # keep the best-supported pairs so the next solve stays determined
            w = np.where(np.argsort(np.argsort(v, kind="stable"), kind="stable") < 6, np.maximum(w, 1e-6), w)
        eps = float(np.sum(w * v))
        state.weights = w
        state.sigma, state.c = sigma, c
        state.residuals = v
        state.epsilon = eps
        state.iteration = k + 1
        state.epsilon_history.append(eps)
        if abs(eps - eps_prev) < config.stop_epsilon:
            state.converged = True
            break
        eps_prev = eps
        state.mu = next_mu(state.mu, config)
    return pose, state


def gnc_ransac(
    pairs: PairsLike, config: RansacConfig = RansacConfig(), gnc: Optional[GncConfig] = None
) -> tuple[RelativePose, np.ndarray, RansacInfo]:
    """Consensus search over GNC-IRLS fits of random subsets.

    Returns the refit pose, the sorted indices of the best consensus set and
    bookkeeping for each round.
    """
    ps = as_pairset(pairs)
    n = len(ps)
    if n < config.sample_size:
        raise ValueError(f"{n} pairs but sample_size is {config.sample_size}")
    gnc = GncConfig(stop_epsilon=config.stop_epsilon) if gnc is None else gnc
    rng = np.random.default_rng(config.seed)
    best_pose, best_inliers, best_round = None, np.zeros(0, dtype=int), -1
    round_counts = []
    for k in range(config.max_iterations):
        sample = np.sort(rng.choice(n, config.sample_size, replace=False))
        try:
            pose, _ = gnc_irls(ps.subset(sample), gnc)
        except (NoValidCandidate, TooFewEffectivePairs):
            round_counts.append(0)
            continue
        v = ligt_residuals(pose.R, pose.t, ps.x, ps.x_prime)
        inliers = np.flatnonzero(v < config.inlier_threshold)
        round_counts.append(len(inliers))
        if len(inliers) > len(best_inliers):
            best_pose, best_inliers, best_round = pose, inliers, k
    if best_pose is None:
        raise NoModelFound(f"all {config.max_iterations} rounds failed")
    pose, d_min = best_pose, float("nan")
    if len(best_inliers) >= 6:
        try:
            pose, state = gnc_irls(ps.subset(best_inliers), gnc)
            d_min = state.diagnostics.d_min
        except (NoValidCandidate, TooFewEffectivePairs):
            pose = best_pose
    info = RansacInfo(len(best_inliers), best_round, tuple(round_counts), d_min)
    return pose, best_inliers, info


# -- LiGT refinement ------------------------------------------------------------


def ligt_cost(R, t, pairs: PairsLike, weights=None) -> float:
    """Weighted sum of LiGT residual norms."""
    ps = as_pairset(pairs)
    v = ligt_residuals(R, normalize(t), ps.x, ps.x_prime)
    return float(v.sum() if weights is None else np.asarray(weights) @ v)


def _left_jacobian(phi) -> np.ndarray:
    a = np.linalg.norm(phi)
    K = skew(phi)
    if a < 1e-8:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    return np.eye(3) + (1 - math.cos(a)) / a**2 * K + (a - math.sin(a)) / a**3 * K @ K


class LigtChart:
    """Local coordinates around ``(R0, t0)``: 3 for rotation, 2 for the unit translation.

    ``z = (phi, beta)`` maps to ``R = exp([phi]x) R0`` and
    ``t = normalize(t0 + T beta)`` with ``T`` an orthonormal tangent basis.
    """

    def __init__(self, R0, t0, pairs: PairsLike, weights=None):
        ps = as_pairset(pairs)
        self.R0 = np.asarray(R0, dtype=float)
        self.t0 = normalize(t0)
        self.x, self.xp = ps.x, ps.x_prime
        self.w = np.ones(len(ps)) if weights is None else np.asarray(weights, dtype=float)
        _, _, Vt = np.linalg.svd(self.t0[None])
        self.T = Vt[1:].T

    def pose(self, z):
        z = np.asarray(z, dtype=float)
        return rodrigues(z[:3]) @ self.R0, normalize(self.t0 + self.T @ z[3:])

    def cost(self, z) -> float:
        R, t = self.pose(z)
        return float(self.w @ ligt_residuals(R, t, self.x, self.xp))

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        R, t = self.pose(z)
        x, xp = self.x, self.xp
        u = x @ R.T
        p = cross(xp, u)
        theta = np.linalg.norm(p, axis=1)
        # LiGT residual on unit bearings equals theta * |x'^T [t]x R x|
        e = np.einsum("ni,ni->n", u, cross(xp, t))
        s = np.sign(e)
        safe = np.where(theta > 0, theta, 1.0)
        dtheta_du = np.where(theta[:, None] > 0, cross(p, xp) / safe[:, None], 0.0)
        dv_du = np.abs(e)[:, None] * dtheta_du + (theta * s)[:, None] * cross(xp, t)
        dv_dt = (theta * s)[:, None] * cross(u, xp)
        # d u / d phi = -[u]x J_l(phi)
        g_u = np.einsum("n,ni->i", self.w, cross(u, dv_du))
        g_phi = g_u @ _left_jacobian(z[:3])
        g_t = np.einsum("n,ni->i", self.w, dv_dt)
        raw = self.t0 + self.T @ z[3:]
        nr = np.linalg.norm(raw)
        dt_dbeta = (np.eye(3) - np.outer(t, t)) / nr @ self.T
        return np.concatenate([g_phi, g_t @ dt_dbeta])


def refine_ligt(pose0: RelativePose, pairs: PairsLike, weights=None, rounds: int = 3) -> RelativePose:
    """Local minimization of the (weighted) LiGT cost starting at ``pose0``.

    Never returns a pose with a higher cost than ``pose0``.
    """
    ps = as_pairset(pairs)
    if len(ps) < 6:
        raise TooFewEffectivePairs(f"{len(ps)} pairs, need 6")
    w = np.ones(len(ps)) if weights is None else np.asarray(weights, dtype=float)
    R, t = pose0.R, pose0.t
    best = ligt_cost(R, t, ps, w)
    start = best
    for _ in range(rounds):
        chart = LigtChart(R, t, ps, w)
        res = minimize(chart.cost, np.zeros(5), jac=chart.gradient, method="BFGS", options={"gtol": 1e-12})
        if not res.fun < best:
            break
        R, t = chart.pose(res.x)
        best = float(res.fun)
    if not best < start:
        return pose0
    # the cost is even in t; pick the sign that puts more points in front
    front = chirality_mask(R, t, ps.x, ps.x_prime) @ w
    back = chirality_mask(R, -t, ps.x, ps.x_prime) @ w
    return RelativePose(R, t if front >= back else -t)
