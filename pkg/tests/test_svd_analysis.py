import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deal.errors import RankDeficient, RankOutOfRange, ShapeMismatch
from deal.numerics import Rng
from deal.svd_analysis import (
    perturbed_decomposition,
    principal_angle,
    projector_estimate,
    shrink,
    shrink_coefficients,
    theorem1_demo,
    theorem1_instance,
    truncated_approx,
)

matrix_shapes = st.tuples(st.integers(2, 7), st.integers(2, 7))


def test_truncation_of_diagonal():
    assert np.allclose(truncated_approx(np.diag([3.0, 2.0, 1.0]), 2), np.diag([3.0, 2.0, 0.0]), atol=1e-14)


@given(st.integers(0, 500), matrix_shapes)
def test_full_rank_truncation_is_identity(seed, shape):
    y = Rng(seed).normal(shape)
    assert np.max(np.abs(truncated_approx(y, min(shape)) - y)) <= 1e-10


def test_truncation_beats_random_competitors_seed_13():
    rng = Rng(13)
    y = rng.spawn(0).normal((8, 5))
    best = np.linalg.norm(y - truncated_approx(y, 2))
    for i in range(200):
        a, b = rng.spawn(1, i).normal((8, 2)), rng.spawn(2, i).normal((5, 2))
        assert best <= np.linalg.norm(y - a @ b.T)
    s = np.linalg.svd(y, compute_uv=False)
    assert abs(best ** 2 - np.sum(s[2:] ** 2)) <= 1e-8


def test_truncation_rank_out_of_range():
    for k in (0, 4):
        with pytest.raises(RankOutOfRange):
            truncated_approx(np.ones((3, 5)), k)


@given(st.integers(0, 500), matrix_shapes, st.integers(1, 7))
def test_truncation_pythagoras(seed, shape, k):
    k = min(k, min(shape))
    y = Rng(seed).normal(shape)
    s = np.linalg.svd(y, compute_uv=False)
    resid = np.linalg.norm(y - truncated_approx(y, k)) ** 2
    assert abs(resid + np.sum(s[:k] ** 2) - np.linalg.norm(y) ** 2) <= 1e-6


def test_projector_fixes_span_members():
    rng = Rng(2)
    y = rng.spawn(0).normal((6, 3))
    x = y @ rng.spawn(1).normal((3, 4))
    assert np.max(np.abs(projector_estimate(y, x) - x)) <= 1e-8


def test_projector_kills_orthogonal_complement():
    y = np.vstack([np.eye(2), np.zeros((3, 2))])
    x = np.vstack([np.zeros((2, 3)), Rng(0).normal((3, 3))])
    assert np.max(np.abs(projector_estimate(y, x))) <= 1e-8


def test_projector_matches_normal_equations_seed_17():
    rng = Rng(17)
    y, x = rng.spawn(0).normal((6, 3)), rng.spawn(1).normal((6, 3))
    # independent route: solve the normal equations with LAPACK
    expected = y @ np.linalg.solve(y.T @ y, y.T @ x)
    assert np.max(np.abs(projector_estimate(y, x) - expected)) <= 1e-8


def test_projector_rank_deficient_and_pinv():
    y = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    x = np.array([[1.0], [0.0], [0.0]])
    with pytest.raises(RankDeficient):
        projector_estimate(y, x)
    u = y[:, :1] / np.linalg.norm(y[:, :1])
    assert np.allclose(projector_estimate(y, x, pinv=True), u @ (u.T @ x), atol=1e-12)
    with pytest.raises(ShapeMismatch):
        projector_estimate(y, np.ones((2, 1)))


@given(st.integers(0, 500), st.integers(3, 8), st.integers(1, 3))
def test_projector_idempotent(seed, rows, cols):
    rng = Rng(seed)
    y, x = rng.spawn(0).normal((rows, cols)), rng.spawn(1).normal((rows, 2))
    once = projector_estimate(y, x)
    assert np.max(np.abs(projector_estimate(y, once) - once)) <= 1e-8


def test_shrink_examples():
    y = np.diag([3.0, 2.0, 1.0])
    assert np.allclose(shrink(y, 1.0, 2), np.diag([8 / 3, 1.5, 0.0]), atol=1e-14)
    y = Rng(5).normal((5, 4))
    assert np.allclose(shrink(y, 0.0, 3), truncated_approx(y, 3), atol=1e-12)


def test_shrink_clamps_negative_coefficients():
    assert np.array_equal(shrink_coefficients(np.array([2.0, 1.0, 0.0]), 2.0), [1.0, 0.0, 0.0])
    assert np.allclose(shrink(np.diag([2.0, 0.5]), 1.0, 2), np.diag([1.5, 0.0]))
    with pytest.raises(ValueError):
        shrink(np.eye(2), -1.0, 1)


@given(st.integers(0, 500), matrix_shapes, st.floats(0, 5), st.integers(1, 7))
def test_shrink_never_amplifies(seed, shape, sigma_d_sq, k):
    k = min(k, min(shape))
    y = Rng(seed).normal(shape)
    s_y = np.linalg.svd(y, compute_uv=False)
    s_hat = np.linalg.svd(shrink(y, sigma_d_sq, k), compute_uv=False)
    assert np.all(s_hat <= s_y + 1e-12)


@given(st.integers(0, 300), st.integers(4, 9), st.integers(3, 6), st.floats(0, 1))
def test_block_decomposition_reassembles(seed, n_x, r, noise):
    rank_x = min(2, r - 1)
    x, d = theorem1_instance(n_x, r, rank_x, noise, Rng(seed))
    dec = perturbed_decomposition(x, d, rank_x)
    assert np.max(np.abs(dec.reassemble() - (x + d))) <= 1e-8
    if n_x - rank_x >= r or noise == 0:
        # block orthogonality needs white noise, D^T D proportional to I
        assert dec.cross_gram() <= 1e-6


def test_decomposition_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        perturbed_decomposition(np.ones((3, 2)), np.ones((2, 3)))


def test_principal_angle_examples():
    e = np.eye(3)
    assert principal_angle(e[:, :1], e[:, :1]) == 0.0
    assert abs(principal_angle(e[:, :1], e[:, 1:2]) - np.pi / 2) <= 1e-15
    tilt = np.array([[np.cos(0.3)], [np.sin(0.3)], [0.0]])
    assert abs(principal_angle(e[:, :1], tilt) - 0.3) <= 1e-14


def test_whitened_noise_is_white_and_orthogonal():
    x, d = theorem1_instance(12, 8, 3, 0.5, Rng(1))
    assert np.max(np.abs(d.T @ d - 0.25 * 9 * np.eye(8))) <= 1e-10
    assert np.max(np.abs(x.T @ d)) <= 1e-10


def test_theorem1_noise_free_and_small_noise():
    for seed in range(10):
        assert theorem1_demo(12, 8, 3, 0.0, Rng(seed)) <= 1e-8
        assert theorem1_demo(12, 8, 3, 1e-6, Rng(seed)) <= 1e-3


def test_theorem1_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        theorem1_instance(4, 3, 3, 0.1, Rng(0))
    with pytest.raises(ValueError):
        theorem1_instance(4, 3, 1, -0.1, Rng(0))
