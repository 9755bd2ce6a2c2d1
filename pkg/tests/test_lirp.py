import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import lirpose.lirp as lirp_module
from conftest import make_scene
from lirpose.errors import IllConditionedB1, NoValidCandidate, TooFewEffectivePairs
from lirpose.geometry import BearingPair, RelativePose, compose_essential, normalize, random_rotation, rotation_angular_error, unvec, vec
from lirpose.lirp import (
    MONOMIALS,
    NullspaceBasis,
    PolySystem,
    build_weighted_A,
    candidates_case1,
    candidates_case2,
    demazure_coefficients,
    demazure_system,
    det_cubic,
    lirp_solve,
    nullspace3,
    real_roots,
)


def demazure(Q):
    return Q @ Q.T @ Q - 0.5 * np.trace(Q @ Q.T) * Q


def monomial_vector(a, b):
    return np.array([a**i * b**j for i, j in MONOMIALS])


def g_vector(a, b):
    return np.array([a * a, a * b, b * b, a, b, 1.0])


def planted_basis(seed):
    """Basis whose span holds a known essential matrix at known (a*, b*)."""
    rng = np.random.default_rng(seed)
    E = compose_essential(RelativePose(random_rotation(rng), normalize(rng.standard_normal(3))))
    q1, q2 = np.linalg.qr(rng.standard_normal((9, 2)))[0].T
    a, b = rng.uniform(-2, 2, 2)
    q3 = vec(E) - a * q1 - b * q2
    return NullspaceBasis(q1, q2, q3, np.zeros(3)), a, b, normalize(vec(E))


def test_basis_pair_row():
    A = build_weighted_A([BearingPair([0, 0, 1.0], [0, 0, 1.0])] * 6)
    expected = np.zeros(9)
    expected[8] = 1.0
    np.testing.assert_array_equal(A[0], expected)


def test_rows_vanish_on_the_true_essential_matrix(normal_scene):
    scene, m = normal_scene
    A = build_weighted_A(m.pairs)
    assert A.shape == (30, 9)
    assert np.max(np.abs(A @ vec(compose_essential(scene.pose_true)))) < 1e-12


def test_weights_scale_rows_and_need_six_pairs(normal_scene):
    _, m = normal_scene
    w = np.linspace(0.1, 2.0, 30)
    np.testing.assert_allclose(build_weighted_A(m.pairs, w), w[:, None] * build_weighted_A(m.pairs))
    w = np.zeros(30)
    w[:5] = 1.0
    with pytest.raises(TooFewEffectivePairs):
        build_weighted_A(m.pairs, w)
    with pytest.raises(ValueError):
        build_weighted_A(m.pairs, np.ones(29))


def test_nullspace_of_a_planar_scene_has_rank_six():
    for seed in range(20):
        _, m = make_scene(100 + seed, "planar")
        basis = nullspace3(build_weighted_A(m.pairs))
        assert basis.spectrum[5] > 1e-6
        assert np.all(basis.singular_values < 1e-12)
        np.testing.assert_allclose(basis.vectors @ basis.vectors.T, np.eye(3), atol=1e-12)


def test_nullspace_of_a_generic_scene_has_rank_eight():
    for seed in range(20):
        scene, m = make_scene(200 + seed)
        A = build_weighted_A(m.pairs)
        basis = nullspace3(A)
        assert np.count_nonzero(basis.spectrum < 1e-12) == 1
        e = normalize(vec(compose_essential(scene.pose_true)))
        assert np.linalg.norm(basis.vectors @ e) > 1 - 1e-10
        norms = np.linalg.norm(A @ basis.vectors.T, axis=0)
        assert norms[2] == norms.min()


def test_demazure_coefficients_match_a_least_squares_fit():
    # sample the residual on a grid of (a, b) and fit the ten monomials
    rng = np.random.default_rng(7)
    q1, q2, q3 = rng.standard_normal((3, 9))
    grid = rng.uniform(-2, 2, (60, 2))
    V = np.stack([monomial_vector(a, b) for a, b in grid])
    R = np.stack([vec(demazure(a * unvec(q1) + b * unvec(q2) + unvec(q3))) for a, b in grid])
    fit = np.linalg.lstsq(V, R, rcond=None)[0].T
    B = demazure_coefficients(q1, q2, q3)
    assert B.shape == (9, 10)
    np.testing.assert_allclose(B, fit, atol=1e-8)


@given(st.integers(0, 10_000))
def test_action_matrices_have_the_planted_root(seed):
    basis, a, b, e = planted_basis(seed)
    system = demazure_system(basis)
    g = g_vector(a, b)
    scale = np.linalg.norm(g)
    np.testing.assert_allclose(system.C1 @ g / scale, a * g / scale, atol=1e-8)
    np.testing.assert_allclose(system.C2 @ g / scale, b * g / scale, atol=1e-8)
    cands = candidates_case1(system, basis)
    assert max(abs(q @ e) for q in cands) > 1 - 1e-8


def test_degenerate_basis_is_rejected():
    q = normalize(np.arange(1.0, 10.0))
    with pytest.raises(IllConditionedB1):
        demazure_system(NullspaceBasis(q, q, q, np.zeros(3)))


def test_complex_spectrum_gives_no_candidates():
    # rotation blocks have eigenvalues 1 +- 5i
    C = np.kron(np.eye(3), np.array([[1.0, -5.0], [5.0, 1.0]]))
    basis = NullspaceBasis(*np.eye(9)[:3], np.zeros(3))
    assert candidates_case1(PolySystem(B=np.zeros((9, 10)), C1=C, C2=C), basis) == []


def test_noise_free_scene_yields_the_true_direction(normal_scene):
    scene, m = normal_scene
    basis = nullspace3(build_weighted_A(m.pairs))
    cands = candidates_case1(demazure_system(basis), basis)
    e = normalize(vec(compose_essential(scene.pose_true)))
    assert max(abs(q @ e) for q in cands) > 1 - 1e-6


def test_determinant_cubic_has_the_constructed_roots():
    rng = np.random.default_rng(8)
    U = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    V = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    # det(a Q1 + Q2) = det(U) det(V) (1 - a)(2 - a)(3 - a)
    q1 = vec(-U @ V)
    q2 = vec(U @ np.diag([1.0, 2.0, 3.0]) @ V)
    np.testing.assert_allclose(real_roots(det_cubic(q1, q2)), [1.0, 2.0, 3.0], atol=1e-10)
    basis = NullspaceBasis(q1, q2, np.ones(9), np.zeros(3))
    out = candidates_case2(basis)
    assert len(out) == 6
    for k, a in enumerate([1.0, 2.0, 3.0]):
        np.testing.assert_allclose(out[k], normalize(a * q1 + q2), atol=1e-10)
    for got, want in zip(out[3:], [q1, q2, np.ones(9)]):
        np.testing.assert_array_equal(got, want)


def test_singular_leading_matrix_drops_to_a_quadratic():
    q1 = vec(np.diag([1.0, 1.0, 0.0]))
    q2 = vec(np.diag([1.0, 2.0, 3.0]))
    coefs = det_cubic(q1, q2)
    assert coefs[0] == 0.0
    roots = real_roots(coefs)
    assert len(roots) <= 2 and np.all(np.isfinite(roots))
    assert len(candidates_case2(NullspaceBasis(q1, q2, q2, np.zeros(3)))) == len(roots) + 3


@pytest.mark.parametrize("kind", ["normal", "planar"])
def test_noise_free_solve_is_exact_with_truth_identification(kind):
    for seed in range(20):
        scene, m = make_scene(300 + seed, kind)
        pose, diag = lirp_solve(m.pairs, reference=scene.pose_true)
        assert rotation_angular_error(scene.pose_true.R, pose.R) < 1e-6
        assert abs(pose.t @ scene.pose_true.t) > 1 - 1e-8


def test_noise_free_generic_solve_is_exact(normal_scene):
    scene, m = normal_scene
    pose, diag = lirp_solve(m.pairs)
    assert rotation_angular_error(scene.pose_true.R, pose.R) < 1e-6
    np.testing.assert_allclose(pose.t, scene.pose_true.t, atol=1e-8)
    assert 0 < diag.n_candidates <= 18
    assert diag.d_min >= 0 and diag.sigma3 < 1e-12
    assert len(diag.candidate_scores) == 4 * diag.n_candidates
    assert diag.candidate_scores[diag.selected] == np.min(diag.candidate_scores)


def test_uniform_weight_scaling_and_permutation_leave_the_pose_unchanged():
    scene, m = make_scene(31, noise_px=1.0)
    rng = np.random.default_rng(9)
    w = rng.uniform(0.2, 1.0, 30)
    base, _ = lirp_solve(m.pairs, w)
    scaled, _ = lirp_solve(m.pairs, 7.5 * w)
    perm = rng.permutation(30)
    shuffled, _ = lirp_solve(m.pairs.subset(perm), w[perm])
    for other in (scaled, shuffled):
        assert np.abs(other.R - base.R).max() < 1e-12
        assert np.abs(other.t - base.t).max() < 1e-12


def test_no_valid_candidate(monkeypatch, normal_scene):
    _, m = normal_scene
    monkeypatch.setattr(lirp_module, "chirality_mask", lambda R, t, x, xp: np.zeros((len(R), len(x)), dtype=bool))
    with pytest.raises(NoValidCandidate):
        lirp_solve(m.pairs)
