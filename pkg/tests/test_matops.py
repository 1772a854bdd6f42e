import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from l1tst.matops import (
    NearSingularError,
    NonFiniteError,
    empirical_covariance,
    pooled_covariance,
    regularized_inv_sqrt,
)


def two_pass_covariance(rows):
    """Naive oracle: explicit mean pass, then a double loop over entries."""
    n, k = len(rows), len(rows[0])
    mean = [sum(r[j] for r in rows) / n for j in range(k)]
    out = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            out[a, b] = sum((r[a] - mean[a]) * (r[b] - mean[b]) for r in rows) / (n - 1)
    return out


def random_spd(rng, k):
    A = rng.standard_normal((k, k))
    return A @ A.T + 0.1 * np.eye(k)


def test_covariance_identical_vectors_is_zero():
    np.testing.assert_array_equal(empirical_covariance([[1.0, 2.0], [1.0, 2.0]]), np.zeros((2, 2)))


def test_covariance_two_scalars():
    np.testing.assert_array_equal(empirical_covariance([[0.0], [2.0]]), [[2.0]])


def test_covariance_matches_two_pass_oracle():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((50, 3))
    np.testing.assert_allclose(empirical_covariance(Z), two_pass_covariance(Z.tolist()), atol=1e-12, rtol=0)


def test_covariance_errors():
    with pytest.raises(ValueError):
        empirical_covariance([[1.0, 2.0]])


@settings(max_examples=30)
@given(arrays(float, (8, 3), elements=st.floats(-100, 100)), st.randoms(use_true_random=False))
def test_covariance_permutation_invariant(Z, rnd):
    perm = list(range(8))
    rnd.shuffle(perm)
    np.testing.assert_allclose(empirical_covariance(Z[perm]), empirical_covariance(Z), atol=1e-8, rtol=1e-10)


def test_covariance_is_psd():
    Z = np.random.default_rng(1).standard_normal((20, 4))
    assert np.linalg.eigvalsh(empirical_covariance(Z)).min() > -1e-12


def test_pooled_identity_equal_sizes():
    np.testing.assert_array_equal(pooled_covariance(np.eye(3), np.eye(3), 50, 50), 4 * np.eye(3))


def test_pooled_zero_y():
    C = random_spd(np.random.default_rng(2), 3)
    np.testing.assert_allclose(pooled_covariance(C, np.zeros((3, 3)), 1000, 1000), 2 * C)


def test_pooled_unequal_sizes():
    rng = np.random.default_rng(3)
    Cx, Cy = random_spd(rng, 4), random_spd(rng, 4)
    rho = 300 / 1000
    np.testing.assert_allclose(pooled_covariance(Cx, Cy, 300, 700), Cx / rho + Cy / (1 - rho), rtol=1e-14)


def test_pooled_shape_mismatch():
    with pytest.raises(ValueError):
        pooled_covariance(np.eye(2), np.eye(3), 10, 10)


def test_inv_sqrt_identity():
    np.testing.assert_allclose(regularized_inv_sqrt(np.eye(4), 0.0), np.eye(4), atol=1e-15)


def test_inv_sqrt_diagonal():
    np.testing.assert_allclose(regularized_inv_sqrt(np.diag([4.0, 9.0]), 0.0), np.diag([0.5, 1 / 3]), atol=1e-15)


def test_inv_sqrt_residual():
    m = random_spd(np.random.default_rng(5), 5)
    gamma = 1e-5
    R = regularized_inv_sqrt(m, gamma)
    res = np.linalg.norm(R @ R @ (m + gamma * np.eye(5)) - np.eye(5)) / np.linalg.norm(np.eye(5))
    assert res < 1e-8
    np.testing.assert_array_equal(R, R.T)
    assert np.linalg.eigvalsh(R).min() > 0


def test_inv_sqrt_regularizer_floors_eigenvalues():
    # rank-one matrix: eigenvalues {0, 0, 3}; regularized spectrum floored at gamma
    m = np.ones((3, 3))
    gamma = 1e-3
    R = regularized_inv_sqrt(m, gamma)
    evals = np.sort(np.linalg.eigvalsh(R))
    np.testing.assert_allclose(evals, [(3 + gamma) ** -0.5, gamma**-0.5, gamma**-0.5], rtol=1e-9)


def test_inv_sqrt_near_singular():
    with pytest.raises(NearSingularError):
        regularized_inv_sqrt(np.ones((3, 3)), 0.0)


def test_inv_sqrt_non_finite():
    m = np.eye(2)
    m[0, 1] = np.nan
    with pytest.raises(NonFiniteError):
        regularized_inv_sqrt(m, 1e-5)


@settings(max_examples=40)
@given(arrays(float, (6, 3), elements=st.floats(-5, 5)), st.floats(1e-6, 1.0))
def test_inv_sqrt_symmetric_positive_definite(Z, gamma):
    m = empirical_covariance(Z)
    R = regularized_inv_sqrt(m, gamma, residual_tol=None)
    np.testing.assert_allclose(R, R.T, atol=1e-12)
    assert np.linalg.eigvalsh(R).min() > 0
