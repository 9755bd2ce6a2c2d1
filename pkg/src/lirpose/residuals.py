"""Per-pair residual statistics for a candidate relative pose.

All residuals are computed on unit bearing vectors, except the
bundle-adjustment residual which lives on normalized image coordinates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateEpsilon
from .geometry import (
    BearingPair,
    PairsLike,
    RelativePose,
    TriangulatedPoint,
    as_pairset,
    compose_essential,
    cross,
    skew,
    triangulate_arrays,
)

EPSILON_TOL = 1e-14
DEPTH_TOL = 1e-12
BA_SENTINEL = 1e6


class ResidualKind(str, enum.Enum):
    E = "E"
    BA = "BA"
    OPENGV = "OPENGV"
    LIGT = "LIGT"
    PPO = "PPO"


@dataclass(frozen=True)
class LigtRow:
    L: np.ndarray
    h: np.ndarray
    h_prime: np.ndarray
    theta: float


@dataclass(frozen=True)
class PpoScales:
    # depth ratio ||t x x'|| / theta and its companion ||t x Rx|| / theta
    lam: float
    s: float


@dataclass(frozen=True)
class ResidualVector:
    kind: ResidualKind
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def ligt_row(R, pair: BearingPair) -> LigtRow:
    x, xp = pair.x, pair.x_prime
    u = np.asarray(R, dtype=float) @ x
    p = np.cross(xp, u)
    w = np.cross(u, xp)
    h = np.cross(w, xp)
    h_prime = np.cross(w, u)
    theta = float(np.linalg.norm(p))
    L = np.outer(p, h) + theta**2 * skew(xp)
    return LigtRow(L=L, h=h, h_prime=h_prime, theta=theta)


def residual_e(pose: RelativePose, pair: BearingPair) -> float:
    return float(abs(pair.x_prime @ compose_essential(pose) @ pair.x))


def residual_ligt(pose: RelativePose, pair: BearingPair) -> float:
    return float(np.linalg.norm(ligt_row(pose.R, pair).L @ pose.t))


def ppo_epsilon(pose: RelativePose, pair: BearingPair) -> np.ndarray:
    u = pose.R @ pair.x
    return np.linalg.norm(np.cross(pose.t, pair.x_prime)) * u + np.linalg.norm(
        np.cross(pair.x_prime, u)
    ) * pose.t


def residual_ppo(pose: RelativePose, pair: BearingPair) -> tuple[float, PpoScales]:
    """Distance between the observed right bearing and its pose-only prediction."""
    u = pose.R @ pair.x
    theta = np.linalg.norm(np.cross(pair.x_prime, u))
    eps = ppo_epsilon(pose, pair)
    n = np.linalg.norm(eps)
    if n <= EPSILON_TOL:
        raise DegenerateEpsilon(f"pair {pair.id}: pose-only prediction vanishes")
    v = float(np.linalg.norm(eps / n - pair.x_prime))
    if theta > 0:
        scales = PpoScales(
            lam=float(np.linalg.norm(np.cross(pose.t, pair.x_prime)) / theta),
            s=float(np.linalg.norm(np.cross(pose.t, u)) / theta),
        )
    else:
        scales = PpoScales(lam=float("inf"), s=float("inf"))
    return v, scales


def _reprojected(pose: RelativePose, point: TriangulatedPoint) -> np.ndarray:
    return pose.R @ np.asarray(point.X, dtype=float) + pose.t


def residual_ba(pose: RelativePose, point: TriangulatedPoint, pair: BearingPair) -> float:
    """Reprojection error in the right view, in normalized image units.

    The point is given in the left frame and mapped with ``R X + t``.
    """
    eps = _reprojected(pose, point)
    if eps[2] <= DEPTH_TOL:
        raise BehindCamera(f"pair {pair.id}: point depth {eps[2]:.3g} in right view")
    if pair.x_prime[2] <= DEPTH_TOL:
        raise BehindCamera(f"pair {pair.id}: observation is not in front of the image plane")
    return float(np.linalg.norm(eps / eps[2] - pair.x_prime / pair.x_prime[2]))


def residual_opengv(pose: RelativePose, point: TriangulatedPoint, pair: BearingPair) -> float:
    eps = _reprojected(pose, point)
    n = np.linalg.norm(eps)
    if n <= EPSILON_TOL:
        raise DegenerateEpsilon(f"pair {pair.id}: reprojected point at the camera centre")
    return float(abs(1.0 - (eps / n) @ pair.x_prime))


# -- batch forms ------------------------------------------------------------


def essential_residuals(R, t, x, xp) -> np.ndarray:
    E = skew(t) @ R
    return np.abs(np.einsum("ni,ni->n", xp, x @ E.T))


def ligt_residuals(R, t, x, xp) -> np.ndarray:
    u = x @ np.asarray(R).T
    p = cross(xp, u)
    h = cross(cross(u, xp), xp)
    r = p * (h @ t)[:, None] + np.einsum("ni,ni->n", p, p)[:, None] * cross(xp, t)
    return np.linalg.norm(r, axis=1)


def ppo_residuals(R, t, x, xp) -> np.ndarray:
    """Batch pose-only residuals; accepts stacked poses ``(k, 3, 3)``, ``(k, 3)``.

    Pairs whose prediction vanishes get the maximal value 2.
    """
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    u = x @ np.swapaxes(R, -1, -2)
    tt = t[..., None, :]
    a = np.linalg.norm(cross(tt, xp), axis=-1)
    theta = np.linalg.norm(cross(xp, u), axis=-1)
    eps = a[..., None] * u + theta[..., None] * tt
    n = np.linalg.norm(eps, axis=-1)
    bad = n <= EPSILON_TOL
    eps = eps / np.where(bad, 1.0, n)[..., None]
    v = np.linalg.norm(eps - xp, axis=-1)
    return np.where(bad, 2.0, v)


def residual_vector(kind, pose: RelativePose, pairs: PairsLike) -> ResidualVector:
    """Residuals of every pair, with per-pair degeneracies saturated."""
    kind = ResidualKind(kind)
    ps = as_pairset(pairs)
    if len(ps) == 0:
        return ResidualVector(kind, np.zeros(0))
    R, t, x, xp = pose.R, pose.t, ps.x, ps.x_prime
    if kind is ResidualKind.E:
        v = essential_residuals(R, t, x, xp)
    elif kind is ResidualKind.LIGT:
        v = ligt_residuals(R, t, x, xp)
    elif kind is ResidualKind.PPO:
        v = ppo_residuals(R, t, x, xp)
    else:
        X, _, _, deg = triangulate_arrays(R, t, x, xp)
        eps = np.where(deg[:, None], 0.0, X @ R.T + t)
        if kind is ResidualKind.BA:
            ok = (~deg) & (eps[:, 2] > DEPTH_TOL) & (xp[:, 2] > DEPTH_TOL)
            safe_e = np.where(ok, eps[:, 2], 1.0)[:, None]
            safe_x = np.where(ok, xp[:, 2], 1.0)[:, None]
            v = np.linalg.norm(eps / safe_e - xp / safe_x, axis=1)
            v = np.where(ok, v, BA_SENTINEL)
        else:
            n = np.linalg.norm(eps, axis=1)
            ok = (~deg) & (n > EPSILON_TOL)
            v = np.abs(1.0 - np.einsum("ni,ni->n", eps, xp) / np.where(ok, n, 1.0))
            v = np.where(ok, v, 2.0)
    return ResidualVector(kind, v)
