"""Weighted linear six-point relative pose solver.

The epipolar system ``A vec(Q) = 0`` is solved in the span of the three
right singular vectors of ``A`` with smallest singular values.  Inside that
span the essential matrices are found two ways:

* ``Q = a q1 + b q2 + q3`` constrained by the cubic trace identity
  ``Q Q^T Q - 0.5 tr(Q Q^T) Q = 0``, solved with 6x6 action matrices for
  multiplication by ``a`` and by ``b``;
* ``Q = a q1 + q2`` constrained by ``det(Q) = 0`` (a cubic in ``a``).

Together with ``q1, q2, q3`` this gives at most 18 candidates.  Each is
projected onto the essential manifold, split into four poses, filtered by
chirality and ranked by the summed pose-only residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import IllConditionedB1, NoValidCandidate, TooFewEffectivePairs
from .geometry import PairsLike, RelativePose, as_pairset, chirality_mask, cross, unvec
from .residuals import ppo_residuals

MIN_PAIRS = 6
WEIGHT_FLOOR = 1e-9
REAL_TOL = 1e-6
G6_TOL = 1e-9
B1_COND_TOL = 1e-10
PINV_RCOND = 1e-12
LEADING_COEF_TOL = 1e-12

# exponents (of a, b) of the monomials y = (a^3, a^2 b, a b^2, b^3, a^2, ab, b^2, a, b, 1)
MONOMIALS = ((3, 0), (2, 1), (1, 2), (0, 3), (2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0))
_MONO_INDEX = {m: i for i, m in enumerate(MONOMIALS)}

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _triple_incidence() -> np.ndarray:
    """27x10 map from coefficient triples (k, l, m) to monomial columns."""
    S = np.zeros((27, 10))
    for k in range(3):
        for l in range(3):
            for m in range(3):
                idx = (k, l, m)
                S[9 * k + 3 * l + m, _MONO_INDEX[(idx.count(0), idx.count(1))]] = 1.0
    return S


_S = _triple_incidence()


@dataclass(frozen=True)
class NullspaceBasis:
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    # sigma1 >= sigma2 >= sigma3, the three smallest singular values of A
    singular_values: np.ndarray
    # full spectrum of A, descending, padded with zeros to length 9
    spectrum: Optional[np.ndarray] = None

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([self.q1, self.q2, self.q3])


@dataclass(frozen=True)
class PolySystem:
    B: np.ndarray
    M: Optional[np.ndarray] = None
    C1: Optional[np.ndarray] = None
    C2: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LirpDiagnostics:
    d_min: float
    n_candidates: int
    candidates: np.ndarray
    # summed (weighted) pose-only residual per decomposed pose, inf where rejected
    candidate_scores: np.ndarray
    sigma3: float
    singular_values: np.ndarray
    selected: int


def build_weighted_A(pairs: PairsLike, weights=None) -> np.ndarray:
    """Rows ``w_i * kron(x_i, x'_i)`` so that ``A_i @ vec(Q) = w_i x'_i^T Q x_i``."""
    ps = as_pairset(pairs)
    n = len(ps)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    if np.count_nonzero(w > WEIGHT_FLOOR) < MIN_PAIRS:
        raise TooFewEffectivePairs(
            f"{np.count_nonzero(w > WEIGHT_FLOOR)} pairs with weight > {WEIGHT_FLOOR}, need {MIN_PAIRS}"
        )
    A = (ps.x[:, :, None] * ps.x_prime[:, None, :]).reshape(n, 9)
    return w[:, None] * A


def nullspace3(A) -> NullspaceBasis:
    A = np.asarray(A, dtype=float)
    _, s, Vt = np.linalg.svd(A, full_matrices=A.shape[0] < 9)
    spectrum = np.zeros(9)
    spectrum[: len(s)] = s
    return NullspaceBasis(Vt[6].copy(), Vt[7].copy(), Vt[8].copy(), spectrum[6:].copy(), spectrum)


def demazure_coefficients(q1, q2, q3) -> np.ndarray:
    """9x10 coefficients of ``Q Q^T Q - 0.5 tr(Q Q^T) Q`` for ``Q = a Q1 + b Q2 + Q3``.

    Rows follow the column-major vectorization of the 3x3 residual; columns
    follow ``MONOMIALS``.
    """
    Qs = np.stack([unvec(q1), unvec(q2), unvec(q3)])
    T = np.einsum("kij,lhj,mhc->klmic", Qs, Qs, Qs)
    tr = np.einsum("kij,lij->kl", Qs, Qs)
    D = T - 0.5 * tr[:, :, None, None, None] * Qs[None, None]
    D = np.swapaxes(D, -1, -2).reshape(27, 9)
    return D.T @ _S


def action_matrices(M) -> tuple[np.ndarray, np.ndarray]:
    """Multiplication-by-a and by-b operators on g = (a^2, ab, b^2, a, b, 1)."""
    C1 = np.zeros((6, 6))
    C1[:3] = -M[:3]
    C1[3, 0] = C1[4, 1] = C1[5, 3] = 1.0
    C2 = np.zeros((6, 6))
    C2[:3] = -M[1:4]
    C2[3, 1] = C2[4, 2] = C2[5, 4] = 1.0
    return C1, C2


def demazure_system(basis: NullspaceBasis) -> PolySystem:
    B = demazure_coefficients(basis.q1, basis.q2, basis.q3)
    B1, B2 = B[:, :4], B[:, 4:]
    s = np.linalg.svd(B1, compute_uv=False)
    if s[0] == 0 or s[-1] < B1_COND_TOL * s[0]:
        raise IllConditionedB1(f"B1 singular values {s}")
    M = np.linalg.pinv(B1, rcond=PINV_RCOND) @ B2
    C1, C2 = action_matrices(M)
    return PolySystem(B=B, M=M, C1=C1, C2=C2)


def _is_real(lam) -> np.ndarray:
    return np.abs(lam.imag) <= REAL_TOL * (1.0 + np.abs(lam.real))


def _eig_candidates(C, basis) -> list[np.ndarray]:
    lam, G = np.linalg.eig(C)
    out = []
    for j in range(6):
        g = G[:, j]
        if not _is_real(lam[j]) or abs(g[5]) <= G6_TOL * np.linalg.norm(g):
            continue
        a = (g[3] / g[5]).real
        b = (g[4] / g[5]).real
        q = a * basis.q1 + b * basis.q2 + basis.q3
        out.append(q / np.linalg.norm(q))
    return out


def candidates_case1(system: PolySystem, basis: NullspaceBasis) -> list[np.ndarray]:
    """Real eigenvectors of both action matrices mapped back to essential 9-vectors."""
    return _eig_candidates(system.C1, basis) + _eig_candidates(system.C2, basis)


def _adjugate(A) -> np.ndarray:
    c1, c2, c3 = A[:, 0], A[:, 1], A[:, 2]
    return np.stack([cross(c2, c3), cross(c3, c1), cross(c1, c2)])


def det_cubic(q1, q2) -> np.ndarray:
    """Coefficients (highest first) of ``det(a Q1 + Q2)`` as a cubic in ``a``."""
    A, B = unvec(q1), unvec(q2)
    return np.array(
        [np.linalg.det(A), np.trace(_adjugate(A) @ B), np.trace(_adjugate(B) @ A), np.linalg.det(B)]
    )


def real_roots(coefs) -> np.ndarray:
    coefs = np.asarray(coefs, dtype=float)
    scale = np.max(np.abs(coefs))
    if scale == 0:
        return np.zeros(0)
    lead = 0
    while lead < len(coefs) - 1 and abs(coefs[lead]) < LEADING_COEF_TOL * scale:
        lead += 1
    r = np.roots(coefs[lead:])
    return np.sort(r[_is_real(r)].real)


def candidates_case2(basis: NullspaceBasis) -> list[np.ndarray]:
    out = []
    for a in real_roots(det_cubic(basis.q1, basis.q2)):
        q = a * basis.q1 + basis.q2
        n = np.linalg.norm(q)
        if n > 0:
            out.append(q / n)
    return out + [basis.q1, basis.q2, basis.q3]


def eigen_gap(C) -> float:
    lam = np.linalg.eigvals(C)
    diff = np.abs(lam[:, None] - lam[None, :])
    return float(diff[np.triu_indices(len(lam), 1)].min())


def poses_from_candidates(candidates) -> tuple[np.ndarray, np.ndarray]:
    """Stacked poses, four per candidate, in ``decompose_essential`` order.

    Equivalent to ``decompose_essential(project_to_essential(Q))`` for each
    candidate; the projection keeps the singular vectors so one SVD suffices.
    """
    Qs = np.stack([unvec(q) for q in candidates])
    U, _, Vt = np.linalg.svd(Qs)
    U = U * np.where(np.linalg.det(U) < 0, -1.0, 1.0)[:, None, None]
    Vt = Vt * np.where(np.linalg.det(Vt) < 0, -1.0, 1.0)[:, None, None]
    R1 = U @ _W @ Vt
    R2 = U @ _W.T @ Vt
    t = U[:, :, 2]
    Rs = np.stack([R1, R1, R2, R2], axis=1).reshape(-1, 3, 3)
    ts = np.stack([t, -t, t, -t], axis=1).reshape(-1, 3)
    return Rs, ts


def lirp_solve(
    pairs: PairsLike, weights=None, reference: Optional[RelativePose] = None
) -> tuple[RelativePose, LirpDiagnostics]:
    """Estimate the relative pose from all (weighted) pairs.

    Candidate poses must put more than half of the total weight in front of
    both cameras; among those the smallest weighted sum of pose-only
    residuals wins, ties going to the earliest candidate.  Passing
    ``reference`` replaces the residual ranking by the rotation distance to
    that pose, which is how solver accuracy is benchmarked when the planar
    two-fold ambiguity must be taken out of the picture.
    """
    ps = as_pairset(pairs)
    w = np.ones(len(ps)) if weights is None else np.asarray(weights, dtype=float)
    A = build_weighted_A(ps, w)
    basis = nullspace3(A)

    candidates = []
    d_min = float("nan")
    try:
        system = demazure_system(basis)
    except IllConditionedB1:
        pass
    else:
        candidates += candidates_case1(system, basis)
        d_min = eigen_gap(system.C1)
    candidates += candidates_case2(basis)

    Rs, ts = poses_from_candidates(candidates)
    wsum = w.sum()
    front = chirality_mask(Rs, ts, ps.x, ps.x_prime)
    valid = (front * w).sum(axis=1) > 0.5 * wsum
    scores = (ppo_residuals(Rs, ts, ps.x, ps.x_prime) * w).sum(axis=1)
    scores = np.where(valid, scores, np.inf)
    if not valid.any():
        raise NoValidCandidate(f"none of {len(Rs)} candidate poses passes the chirality filter")
    if reference is None:
        best = int(np.argmin(scores))
    else:
        cos = (np.einsum("kij,ij->k", Rs, np.asarray(reference.R)) - 1.0) / 2.0
        best = int(np.argmax(np.where(valid, cos, -np.inf)))
    diag = LirpDiagnostics(
        d_min=d_min,
        n_candidates=len(candidates),
        candidates=np.stack(candidates),
        candidate_scores=scores,
        sigma3=float(basis.singular_values[2]),
        singular_values=basis.spectrum,
        selected=best,
    )
    return RelativePose(Rs[best], ts[best]), diag
