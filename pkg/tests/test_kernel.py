import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mnse.kernel import (
    InterpolatorModel,
    SingularKernelError,
    evaluate_interpolator,
    factor_kernel,
    fit_coefficients,
    lipschitz_constant,
    rbf_kernel_matrix,
)

E1 = 0.36787944117144233


def test_kernel_matrix_basics():
    X = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]])
    Psi = rbf_kernel_matrix(X, 5.0)
    assert np.all(np.diag(Psi) == 1.0)
    assert Psi[0, 1] == pytest.approx(E1, abs=1e-15)
    assert np.array_equal(Psi, Psi.T)


def test_kernel_wide_limit():
    X = np.random.default_rng(0).normal(size=(6, 3))
    dmax = max(np.linalg.norm(a - b) for a in X for b in X)
    assert np.allclose(rbf_kernel_matrix(X, 1e6 * dmax), 1.0, atol=1e-6)


def test_kernel_rejects_bad_sigma():
    with pytest.raises(ValueError):
        rbf_kernel_matrix(np.zeros((2, 1)), 0.0)
    with pytest.raises(ValueError):
        lipschitz_constant(3, -1.0, np.ones((3, 1)))


def test_identity_kernel_fit():
    Y = np.arange(6.0).reshape(3, 2)
    C, lam = fit_coefficients(np.eye(3), Y)
    assert lam == 0.0 and np.array_equal(C, Y)


def test_two_by_two_fit():
    C, lam = fit_coefficients(np.array([[1.0, 0.5], [0.5, 1.0]]), np.array([[1.0], [0.0]]))
    assert lam == 0.0
    assert C == pytest.approx(np.array([[4 / 3], [-2 / 3]]), abs=1e-14)


def test_duplicate_points_need_jitter():
    X = np.array([[0.0], [0.0], [1.0]])
    F = factor_kernel(rbf_kernel_matrix(X, 1.0))
    assert F.jitter > 0


def test_ladder_exhausted():
    with pytest.raises(SingularKernelError):
        factor_kernel(np.ones((3, 3)), ladder=(0.0,))


def test_interpolates_training_points():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(10, 2)), rng.normal(size=(10, 3))
    f = InterpolatorModel.fit(X, Y, 1.0)
    assert f.jitter == 0.0
    assert np.max(np.abs(f(X) - Y)) < 1e-8
    assert np.allclose(f(X[3]), Y[3], atol=1e-8)


def test_zero_coefficients_give_zero():
    f = InterpolatorModel(np.zeros((2, 2)) + [[0, 0], [1, 1]], 1.0, np.zeros((2, 2)), np.zeros((2, 2)))
    assert not f(np.array([[3.0, -1.0], [0.2, 0.4]])).any()
    assert f.lipschitz == 0.0


def test_single_centre_evaluation():
    f = InterpolatorModel(np.array([[0.0, 0.0]]), 1.0, np.array([[1.0]]), np.array([[1.0]]))
    assert f(np.array([0.6, 0.8]))[0] == pytest.approx(E1, abs=1e-15)


def test_dimension_mismatch():
    f = InterpolatorModel(np.zeros((1, 2)), 1.0, np.ones((1, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError, match="dimension"):
        evaluate_interpolator(f, np.zeros(3))


def test_lipschitz_values():
    assert lipschitz_constant(1, 1.0, np.array([[1.0]])) == pytest.approx(0.857763, abs=1e-6)
    assert lipschitz_constant(4, 2.0, np.array([[3.0]])) == pytest.approx(2.573289, abs=5e-6)
    assert lipschitz_constant(4, 2.0, np.zeros((4, 2))) == 0.0


points = st.integers(1, 8).flatmap(
    lambda n: hnp.arrays(float, (n, 2), elements=st.floats(-3, 3, allow_nan=False))
)


@settings(max_examples=50, deadline=None)
@given(points, st.floats(0.2, 5.0), st.integers(0, 2**32 - 1))
def test_lipschitz_holds_on_random_pairs(X, sigma, seed):
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    C = rng.normal(size=(n, 2))
    f = InterpolatorModel(X, sigma, C, np.zeros_like(C))
    a = rng.normal(scale=3, size=(200, 2))
    b = a + rng.normal(scale=rng.choice([1e-3, 0.1, 1.0]), size=(200, 2))
    lhs = np.linalg.norm(f(a) - f(b), axis=1)
    rhs = f.lipschitz * np.linalg.norm(a - b, axis=1) + 1e-9
    assert np.all(lhs <= rhs)


@settings(max_examples=50, deadline=None)
@given(points, st.floats(0.1, 10.0))
def test_kernel_symmetric_unit_diagonal_psd(X, sigma):
    Psi = rbf_kernel_matrix(X, sigma)
    assert np.array_equal(Psi, Psi.T)
    assert np.all(np.diag(Psi) == 1.0)
    assert np.all((Psi >= 0) & (Psi <= 1))
    assert np.linalg.eigvalsh(Psi).min() > -1e-10 * X.shape[0]


@settings(max_examples=50, deadline=None)
@given(points, st.floats(0.1, 10.0))
def test_factor_always_returns_a_rung(X, sigma):
    F = factor_kernel(rbf_kernel_matrix(X, sigma))
    assert F.jitter in {0.0, 1e-12, 1e-10, 1e-8, 1e-6}
    assert math.isfinite(float(np.sum(F.inverse_squared())))


def test_training_floor_is_stricter_than_fit_floor():
    from mnse.kernel import MIN_RCOND

    X = np.random.default_rng(0).normal(size=(15, 2))
    Psi = rbf_kernel_matrix(X, 3.0)  # condition number near 2e8
    assert factor_kernel(Psi).jitter == 0.0
    assert factor_kernel(Psi, min_rcond=MIN_RCOND).jitter > 0.0
