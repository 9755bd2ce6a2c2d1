"""Two-view geometry primitives.

Pose convention everywhere: a point X in the left camera frame maps to the
right camera frame as ``R @ X + t``.  Matrices are vectorized column-major
(``Q.ravel(order="F")``) so that ``kron(x, x') @ vec(Q) == x' @ Q @ x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateRays, NearZeroMatrix

PARALLEL_RAY_TOL = 1e-10

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def normalize(v, axis=-1):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


@dataclass(frozen=True)
class BearingPair:
    """One correspondence as unit bearing vectors in the left and right camera."""

    x: np.ndarray
    x_prime: np.ndarray
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", normalize(self.x))
        object.__setattr__(self, "x_prime", normalize(self.x_prime))


@dataclass(frozen=True)
class PairSet:
    """Array-backed collection of bearing pairs, shapes ``(n, 3)``."""

    x: np.ndarray
    x_prime: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float)).reshape(-1, 3)
        xp = np.atleast_2d(np.asarray(self.x_prime, dtype=float)).reshape(-1, 3)
        if x.shape != xp.shape:
            raise ValueError(f"shape mismatch {x.shape} vs {xp.shape}")
        if len(x):
            x = normalize(x)
            xp = normalize(xp)
        ids = np.arange(len(x)) if self.ids is None else np.asarray(self.ids, dtype=int)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_prime", xp)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i):
        return BearingPair(self.x[i], self.x_prime[i], int(self.ids[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "PairSet":
        idx = np.asarray(idx)
        return PairSet(self.x[idx], self.x_prime[idx], self.ids[idx])

    @classmethod
    def from_pairs(cls, pairs: Iterable[BearingPair]) -> "PairSet":
        pairs = list(pairs)
        if not pairs:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(
            np.array([p.x for p in pairs]),
            np.array([p.x_prime for p in pairs]),
            np.array([p.id for p in pairs]),
        )


PairsLike = Union[PairSet, Sequence[BearingPair]]


def as_pairset(pairs: PairsLike) -> PairSet:
    if isinstance(pairs, PairSet):
        return pairs
    if isinstance(pairs, BearingPair):
        return PairSet.from_pairs([pairs])
    return PairSet.from_pairs(pairs)


@dataclass(frozen=True)
class RelativePose:
    """Rotation ``R`` and unit translation ``t`` of the right view w.r.t. the left."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        t = np.asarray(self.t, dtype=float).reshape(3)
        n = np.linalg.norm(t)
        if n > 0:
            t = t / n
        object.__setattr__(self, "t", t)

    def flipped(self) -> "RelativePose":
        return RelativePose(self.R, -self.t)


@dataclass(frozen=True)
class TriangulatedPoint:
    X: np.ndarray
    depth_left: float
    depth_right: float


@dataclass(frozen=True)
class KneipDiagnostic:
    lambda_M: float
    sigma_min_B: float
    # unit vector spanning the (near) null space of B; aligns with t at the true R
    direction: np.ndarray


def cross(a, b) -> np.ndarray:
    """Broadcasting cross product over the last axis; cheaper than ``np.cross`` on small batches."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rodrigues(rotvec) -> np.ndarray:
    """Rotation matrix from an axis-angle vector (radians)."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-300:
        return np.eye(3)
    K = skew(rotvec / angle)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def vec(Q) -> np.ndarray:
    return np.asarray(Q, dtype=float).ravel(order="F")


def unvec(q) -> np.ndarray:
    return np.asarray(q, dtype=float).reshape(3, 3, order="F")


def compose_essential(pose: RelativePose) -> np.ndarray:
    return skew(pose.t) @ pose.R


def project_to_essential(Q) -> np.ndarray:
    """Closest matrix with singular values (1, 1, 0)."""
    U, _, Vt = np.linalg.svd(np.asarray(Q, dtype=float))
    return U @ np.diag([1.0, 1.0, 0.0]) @ Vt


def decompose_essential(E) -> list[RelativePose]:
    """The four (R, t) pairs consistent with an essential matrix.

    Order is ``(R1, t), (R1, -t), (R2, t), (R2, -t)``.
    """
    E = np.asarray(E, dtype=float)
    if np.linalg.norm(E) < 1e-12:
        raise NearZeroMatrix("essential matrix norm below 1e-12")
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    R1 = U @ _W @ Vt
    R2 = U @ _W.T @ Vt
    t = U[:, 2]
    return [RelativePose(R1, t), RelativePose(R1, -t), RelativePose(R2, t), RelativePose(R2, -t)]


def triangulate_arrays(R, t, x, xp):
    """Vectorized midpoint triangulation.

    Works on ``R`` of shape ``(3, 3)`` or ``(k, 3, 3)`` (with ``t`` shaped
    ``(3,)`` or ``(k, 3)``) against bearings of shape ``(n, 3)``.  Returns
    ``X`` (``(..., n, 3)``, left frame), left and right depths, and a mask of
    pairs whose rays are parallel.  Depths of degenerate pairs are NaN.
    """
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    Rt = np.swapaxes(R, -1, -2)
    # right camera centre and ray directions expressed in the left frame
    c2 = -(Rt @ t[..., None])[..., 0]
    d2 = xp @ R
    b = (x * d2).sum(-1)
    aa = (x * x).sum(-1)
    dd = (d2 * d2).sum(-1)
    det = aa * dd - b * b
    xc = (x @ c2[..., None])[..., 0]
    dc = (d2 @ c2[..., None])[..., 0]
    sin_angle = np.linalg.norm(cross(x, d2), axis=-1) / np.sqrt(aa * dd)
    degenerate = sin_angle < PARALLEL_RAY_TOL
    safe = np.where(degenerate, 1.0, det)
    lam1 = (dd * xc - b * dc) / safe
    lam2 = (b * xc - aa * dc) / safe
    X = 0.5 * (lam1[..., None] * x + c2[..., None, :] + lam2[..., None] * d2)
    X = np.where(degenerate[..., None], np.nan, X)
    z_left = X[..., 2]
    z_right = (X @ Rt)[..., 2] + t[..., None, 2]
    return X, z_left, z_right, degenerate


def triangulate(pose: RelativePose, pair: BearingPair) -> TriangulatedPoint:
    """Midpoint of the common perpendicular between the two viewing rays."""
    X, zl, zr, deg = triangulate_arrays(pose.R, pose.t, pair.x[None], pair.x_prime[None])
    if deg[0]:
        raise DegenerateRays(f"pair {pair.id}: rays are parallel")
    return TriangulatedPoint(X[0], float(zl[0]), float(zr[0]))


def chirality_mask(R, t, x, xp) -> np.ndarray:
    _, zl, zr, deg = triangulate_arrays(R, t, x, xp)
    with np.errstate(invalid="ignore"):
        return (~deg) & (zl > 0) & (zr > 0)


def cheirality_count(pose: RelativePose, pairs: PairsLike) -> int:
    """Number of pairs triangulating in front of both cameras."""
    ps = as_pairset(pairs)
    if len(ps) == 0:
        return 0
    return int(chirality_mask(pose.R, pose.t, ps.x, ps.x_prime).sum())


def rotation_angular_error(R_true, R_est) -> float:
    """Angle in degrees of the rotation taking ``R_true`` to ``R_est``.

    Uses ``atan2(sin, cos)`` rather than ``arccos`` so that tiny angles are
    not quantized by the rounding of the trace.
    """
    D = np.asarray(R_true).T @ np.asarray(R_est)
    s = 0.5 * np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    c = 0.5 * (np.trace(D) - 1.0)
    return float(np.degrees(np.arctan2(s, c)))


def kneip_diagnostic(R, pairs: PairsLike) -> KneipDiagnostic:
    """Smallest eigenvalue of ``B^T B`` with rows ``x'_i x R x_i``.

    The eigenvalue is returned as the squared smallest singular value of
    ``B``, which keeps it accurate near zero.
    """
    ps = as_pairset(pairs)
    if len(ps) == 0:
        raise ValueError("kneip_diagnostic needs at least one pair")
    B = cross(ps.x_prime, ps.x @ np.asarray(R, dtype=float).T)
    Bp = B if len(B) >= 3 else np.vstack([B, np.zeros((3 - len(B), 3))])
    _, s, Vt = np.linalg.svd(Bp)
    sigma = float(s[-1])
    return KneipDiagnostic(lambda_M=sigma * sigma, sigma_min_B=sigma, direction=Vt[-1])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (via a random unit quaternion)."""
    q = normalize(rng.standard_normal(4))
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
