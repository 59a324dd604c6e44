import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covop.covmetrics import (
    center_groups,
    dist_hs,
    dist_procrustes,
    dist_sqrt,
    distance,
    estimate_covariance,
    matrix_sqrt,
    procrustes_aligner,
)
from covop.data import CurveGroup, FunctionalDataset
from covop.exceptions import DegenerateGroupError, InvalidInputError
from oracles import (
    covariance_double_loop,
    denman_beavers_sqrt,
    frobenius_double_loop,
    procrustes_angle_grid,
    random_orthogonal,
    random_psd,
)

METRIC_FUNCS = [dist_hs, dist_sqrt, dist_procrustes]


def test_covariance_symmetric_pair():
    g = CurveGroup([[1.0] * 4, [-1.0] * 4])
    np.testing.assert_allclose(estimate_covariance(g), np.full((4, 4), 2.0))


def test_covariance_identical_rows_is_zero():
    g = CurveGroup(np.tile([0.3, -1.0, 2.0], (5, 1)))
    np.testing.assert_array_equal(estimate_covariance(g), np.zeros((3, 3)))


def test_covariance_matches_double_loop(rng):
    x = rng.standard_normal((5, 4))
    expected = covariance_double_loop(x.tolist())
    np.testing.assert_allclose(estimate_covariance(CurveGroup(x)), expected, atol=1e-12)


def test_covariance_about_zero_divides_by_n(rng):
    x = rng.standard_normal((6, 3))
    x -= x.mean(axis=0)
    np.testing.assert_allclose(
        estimate_covariance(CurveGroup(x), mode="about-zero"), x.T @ x / 6, atol=1e-12
    )


def test_covariance_ignores_masked_rows(rng):
    x = rng.standard_normal((6, 3))
    x[2] = np.nan
    mask = np.array([1, 1, 0, 1, 1, 1], dtype=bool)
    expected = covariance_double_loop(x[mask].tolist())
    np.testing.assert_allclose(estimate_covariance(CurveGroup(x, mask)), expected, atol=1e-12)


def test_covariance_degenerate_group():
    with pytest.raises(DegenerateGroupError):
        estimate_covariance(CurveGroup([[1.0, 2.0], [3.0, 4.0]], [True, False]))


def test_center_groups_examples():
    ds = FunctionalDataset.from_arrays([[[1, 2], [3, 4]], [[5, 5], [5, 5]]])
    out = center_groups(ds)
    np.testing.assert_allclose(out.groups[0].values, [[-1, -1], [1, 1]])
    np.testing.assert_allclose(out.groups[1].values, np.zeros((2, 2)))


def test_center_groups_masked_row(rng):
    x = rng.standard_normal((5, 3))
    mask = np.array([1, 1, 1, 0, 1], dtype=bool)
    y = rng.standard_normal((4, 3))
    ds = FunctionalDataset.from_arrays([x, y], observed=[mask, None])
    out = center_groups(ds)
    expected = x[mask] - x[mask].mean(axis=0)
    np.testing.assert_allclose(out.groups[0].values[mask], expected, atol=1e-12)
    # the stored value of the masked row does not influence the others
    x2 = x.copy()
    x2[3] = 1e6
    out2 = center_groups(FunctionalDataset.from_arrays([x2, y], observed=[mask, None]))
    np.testing.assert_allclose(out2.groups[0].values[mask], expected, atol=1e-12)
    for g in out.groups:
        np.testing.assert_allclose(g.values[g.observed].mean(axis=0), 0.0, atol=1e-12)


def test_matrix_sqrt_examples(rng):
    np.testing.assert_allclose(matrix_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(matrix_sqrt(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]), atol=1e-14)
    sigma = random_psd(rng, 6)
    root = matrix_sqrt(sigma)
    assert np.linalg.norm(root @ root - sigma) <= 1e-8 * np.linalg.norm(sigma)
    np.testing.assert_allclose(root, denman_beavers_sqrt(sigma), atol=1e-8)
    np.testing.assert_allclose(root, root.T)
    assert np.linalg.eigvalsh(root).min() >= -1e-12


def test_matrix_sqrt_rank_deficient(rng):
    sigma = random_psd(rng, 5, rank=2)
    root = matrix_sqrt(sigma)
    assert np.linalg.norm(root @ root - sigma) <= 1e-8 * np.linalg.norm(sigma)


def test_matrix_sqrt_rejects_asymmetric_and_indefinite():
    with pytest.raises(InvalidInputError):
        matrix_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        matrix_sqrt(np.diag([1.0, -0.1]))


def test_matrix_sqrt_idempotent_on_roots(rng):
    root = matrix_sqrt(random_psd(rng, 5))
    np.testing.assert_allclose(matrix_sqrt(root @ root), root, atol=1e-8)


def test_dist_hs_examples(rng):
    a = np.diag([4.0, 1.0])
    assert dist_hs(a, a) == 0
    assert dist_hs(a, np.eye(2)) == pytest.approx(3.0)
    x, y = random_psd(rng, 4), random_psd(rng, 4)
    assert dist_hs(x, y) == pytest.approx(frobenius_double_loop(x, y), abs=1e-12)
    assert dist_hs(x, y, spacing=0.1) == pytest.approx(0.1 * frobenius_double_loop(x, y))


def test_dist_sqrt_examples():
    assert dist_sqrt(np.diag([4.0, 1.0]), np.eye(2)) == pytest.approx(1.0)
    assert dist_sqrt(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-14)
    assert dist_sqrt(np.array([[2.0, 1.0], [1.0, 2.0]]), np.eye(2)) == pytest.approx(
        math.sqrt(3) - 1, abs=1e-12
    )


def test_dist_procrustes_examples(rng):
    sigma = random_psd(rng, 4)
    assert dist_procrustes(sigma, sigma) == pytest.approx(0.0, abs=1e-6)
    assert dist_procrustes(np.diag([4.0, 1.0]), np.eye(2)) == pytest.approx(1.0, abs=1e-12)
    oracle, _ = procrustes_angle_grid(np.diag([2.0, 1.0]), np.eye(2))
    assert oracle == pytest.approx(1.0, abs=1e-6)


def test_dist_procrustes_matches_angle_grid(rng):
    for _ in range(5):
        a, b = random_psd(rng, 2), random_psd(rng, 2)
        oracle, _ = procrustes_angle_grid(np.linalg.cholesky(a), np.linalg.cholesky(b))
        assert dist_procrustes(a, b) == pytest.approx(oracle, abs=1e-6)


def test_dimension_mismatch():
    for f in METRIC_FUNCS:
        with pytest.raises(InvalidInputError):
            f(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        distance(np.eye(2), np.eye(2), "bures")


def test_procrustes_aligner(rng):
    np.testing.assert_allclose(procrustes_aligner(np.eye(3), np.eye(3)), np.eye(3), atol=1e-12)
    sigma = random_psd(rng, 5)
    r = procrustes_aligner(sigma, sigma)
    root = matrix_sqrt(sigma)
    assert np.linalg.norm(root - root @ r) <= 1e-8
    for _ in range(3):
        a, b = random_psd(rng, 2), random_psd(rng, 2)
        r = procrustes_aligner(a, b)
        np.testing.assert_allclose(r.T @ r, np.eye(2), atol=1e-10)
        la, lb = matrix_sqrt(a), matrix_sqrt(b)
        oracle, _ = procrustes_angle_grid(la, lb)
        assert np.linalg.norm(la - lb @ r) == pytest.approx(oracle, abs=1e-6)
        assert np.linalg.norm(la - lb @ r) == pytest.approx(dist_procrustes(a, b), abs=1e-10)


def test_batched_distances_match_single(rng):
    a = np.stack([random_psd(rng, 4) for _ in range(3)])
    b = np.stack([random_psd(rng, 4) for _ in range(3)])
    for f in METRIC_FUNCS:
        batch = f(a, b)
        for m in range(3):
            assert batch[m] == pytest.approx(f(a[m], b[m]), rel=1e-12)


psd_seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=psd_seeds, p=st.integers(2, 6))
def test_metric_axioms(seed, p):
    rng = np.random.default_rng(seed)
    a, b, c = (random_psd(rng, p, rank=int(rng.integers(1, p + 1))) for _ in range(3))
    for f in METRIC_FUNCS:
        dab, dba = f(a, b), f(b, a)
        assert dab >= 0
        assert abs(dab - dba) <= 1e-12 * max(1.0, dab)
        assert f(a, a) <= 1e-6 * max(1.0, np.linalg.norm(a))
    for f in (dist_hs, dist_sqrt):
        assert f(a, c) <= f(a, b) + f(b, c) + 1e-10
    assert dist_procrustes(a, b) <= dist_sqrt(a, b) + 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=psd_seeds, p=st.integers(2, 6))
def test_orthogonal_invariance(seed, p):
    rng = np.random.default_rng(seed)
    a, b = random_psd(rng, p), random_psd(rng, p)
    u = random_orthogonal(rng, p)
    for f in METRIC_FUNCS:
        assert f(u @ a @ u.T, u @ b @ u.T) == pytest.approx(f(a, b), abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=psd_seeds, p=st.integers(2, 6))
def test_commuting_pairs(seed, p):
    rng = np.random.default_rng(seed)
    u = random_orthogonal(rng, p)
    la, lb = rng.uniform(0, 3, p), rng.uniform(0, 3, p)
    a, b = u @ np.diag(la) @ u.T, u @ np.diag(lb) @ u.T
    expected = np.sqrt(np.sum((np.sqrt(la) - np.sqrt(lb)) ** 2))
    assert dist_sqrt(a, b) == pytest.approx(expected, abs=1e-10)
