import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from psizeta._validation import NotPositiveDefiniteError
from psizeta.fiber import (
    ContourSpec,
    PDMatrix,
    conjugate,
    contour_power,
    dyadic_t_operator,
    pd_power,
    t_operator,
    t_solve,
)
from psizeta.verify import random_pd


def rand_mat(rng, n=3):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def expm_conjugation(P, t, A):
    # independent route: P^{-t} A P^t through scipy's expm/logm
    L = scipy.linalg.logm(P)
    return scipy.linalg.expm(-t * L) @ A @ scipy.linalg.expm(t * L)


def test_pd_power_identity_fixed():
    np.testing.assert_allclose(pd_power(np.eye(2), 0.7), np.eye(2), atol=1e-15)


def test_pd_power_diagonal_sqrt():
    np.testing.assert_allclose(pd_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]), atol=1e-14)


def test_pd_power_zero_is_exact_identity(rng):
    assert np.array_equal(pd_power(random_pd(rng, 3), 0), np.eye(3))


def test_pd_power_matches_contour(rng):
    P = random_pd(rng, 3)
    np.testing.assert_allclose(pd_power(P, 0.3 + 0.2j), contour_power(P, 0.3 + 0.2j - 1) @ P, atol=1e-9)


def test_pd_power_matches_scipy(rng):
    P = random_pd(rng, 4)
    np.testing.assert_allclose(pd_power(P, -0.37), scipy.linalg.fractional_matrix_power(P, -0.37), atol=1e-11)


def test_group_law_100_samples(rng):
    for _ in range(100):
        P = PDMatrix(random_pd(rng, 3))
        s, t = rng.uniform(-2, 2, 2) + 1j * rng.uniform(-1, 1, 2)
        ref = pd_power(P, s + t)
        err = np.abs(pd_power(P, s) @ pd_power(P, t) - ref).max()
        assert err <= 1e-10 * np.abs(ref).max()


def test_rejects_non_hermitian():
    with pytest.raises(NotPositiveDefiniteError, match="not Hermitian"):
        PDMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_rejects_non_positive():
    with pytest.raises(NotPositiveDefiniteError, match="smallest eigenvalue"):
        pd_power(np.diag([1.0, -0.1]), 0.5)


def test_rejects_below_floor():
    with pytest.raises(NotPositiveDefiniteError, match="floor"):
        PDMatrix(np.diag([0.1, 2.0]), floor=0.5)


def test_reconstruction(rng):
    P = PDMatrix(random_pd(rng, 5))
    U = P.eigvecs
    np.testing.assert_allclose((U * P.eigvals) @ U.conj().T, P.matrix, atol=1e-12 * np.abs(P.matrix).max())


def test_symmetrizes_roundoff_asymmetry(rng):
    A = random_pd(rng, 3)
    A[0, 1] += 1e-14
    P = PDMatrix(A)
    np.testing.assert_array_equal(P.matrix, P.matrix.conj().T)


def test_conjugate_trivial_cases(rng):
    P = random_pd(rng, 3)
    A = rand_mat(rng)
    np.testing.assert_array_equal(conjugate(P, 0, A), A)
    np.testing.assert_allclose(conjugate(P, 2.5, P), P, atol=1e-12)


def test_conjugate_matches_expm_route(rng):
    P = random_pd(rng, 3)
    A = rand_mat(rng)
    np.testing.assert_allclose(conjugate(P, 0.6 - 0.3j, A), expm_conjugation(P, 0.6 - 0.3j, A), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(
    s=st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
    t=st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
    seed=st.integers(0, 2**32 - 1),
)
def test_conjugation_is_representation(s, t, seed):
    rng = np.random.default_rng(seed)
    P = PDMatrix(random_pd(rng, 3))
    A = rand_mat(rng)
    ref = conjugate(P, s + t, A)
    err = np.abs(conjugate(P, s, conjugate(P, t, A)) - ref).max()
    assert err <= 1e-10 * max(1.0, np.abs(ref).max())


def test_t_operator_fixes_base(rng):
    P = random_pd(rng, 3)
    np.testing.assert_allclose(t_operator(P, 1, P), P, atol=1e-12)


def test_t_operator_halving_identity(rng):
    P = PDMatrix(random_pd(rng, 3))
    A = rand_mat(rng)
    half = t_operator(P, 0.5, A)
    np.testing.assert_allclose(t_operator(P, 1, A), half + conjugate(P, 0.5, half), atol=1e-10)


def test_t_operator_matches_trapezoid_quadrature(rng):
    P = random_pd(rng, 3)
    A = rand_mat(rng)
    t, h = np.linspace(0, 1, 1025, retstep=True)
    vals = np.array([expm_conjugation(P, ti, A) for ti in t])
    # trapezoid plus its h^2 end correction; d/dt Phi(t)A = Phi(t)(AL - LA)
    L = scipy.linalg.logm(P)
    deriv = [expm_conjugation(P, ti, A @ L - L @ A) for ti in (0.0, 1.0)]
    quad = scipy.integrate.trapezoid(vals, t, axis=0) - h**2 / 12 * (deriv[1] - deriv[0])
    np.testing.assert_allclose(t_operator(P, 1, A), quad, atol=1e-8 * np.abs(quad).max())


def test_t_operator_complex_argument_derivative(rng):
    # d/da T(a) A = Phi(a) A
    P = PDMatrix(random_pd(rng, 3))
    A = rand_mat(rng)
    a, h = 0.4 + 0.3j, 1e-5
    num = (t_operator(P, a + h, A) - t_operator(P, a - h, A)) / (2 * h)
    np.testing.assert_allclose(num, conjugate(P, a, A), atol=1e-8)


@pytest.mark.parametrize("levels", range(1, 7))
def test_dyadic_factorization(rng, levels):
    P = PDMatrix(random_pd(rng, 4))
    A = rand_mat(rng, 4)
    np.testing.assert_allclose(dyadic_t_operator(P, A, levels), t_operator(P, 1, A), atol=1e-8)


def test_t_solve_trivial_cases(rng):
    P = random_pd(rng, 3)
    np.testing.assert_allclose(t_solve(P, P), P, atol=1e-12)
    B = rand_mat(rng)
    np.testing.assert_allclose(t_solve(2.5 * np.eye(3), B), B, atol=1e-14)


@pytest.mark.parametrize("method", ["direct", "dyadic"])
def test_t_solve_round_trip(rng, method):
    P = random_pd(rng, 3)
    A = rand_mat(rng)
    np.testing.assert_allclose(t_solve(P, t_operator(P, 1, A), method=method), A, atol=1e-10)
    np.testing.assert_allclose(t_operator(P, 1, t_solve(P, A, method=method)), A, atol=1e-10)


def test_t_solve_repeated_eigenvalues():
    P = np.diag([2.0, 2.0, 5.0])
    A = np.arange(9.0).reshape(3, 3) + 1j
    np.testing.assert_allclose(t_operator(P, 1, t_solve(P, A)), A, atol=1e-12)


def test_t_solve_dyadic_needs_levels():
    P = np.diag([1.0, 1e6])
    with pytest.raises(ValueError, match="more levels"):
        t_solve(P, np.eye(2), method="dyadic", levels=1)


def test_contour_identity_and_inverse():
    np.testing.assert_allclose(contour_power(np.eye(2), -1), np.eye(2), atol=1e-10)
    np.testing.assert_allclose(contour_power(np.diag([2.0, 5.0]), -1), np.diag([0.5, 0.2]), atol=1e-8)


@pytest.mark.parametrize("s", [-0.1, -0.4, -1.0, -2.2, -3.0, -0.5 + 0.8j])
def test_contour_matches_pd_power(rng, s):
    P = random_pd(rng, 3, 0.5, 10.0)
    np.testing.assert_allclose(contour_power(P, s, ContourSpec.for_matrix(P, 512)), pd_power(P, s), atol=1e-8)


def test_contour_rejects_bad_input(rng):
    P = np.diag([1.0, 3.0])
    with pytest.raises(ValueError, match="Re\\(s\\) < 0"):
        contour_power(P, 0.5)
    with pytest.raises(ValueError, match="touches the spectrum"):
        contour_power(P, -1, ContourSpec(1.5, 0.5))
    with pytest.raises(ValueError, match="node_count"):
        ContourSpec(0.5, 0.1, node_count=32)


def test_fiber_dimension_cap():
    with pytest.raises(ValueError, match="fiber dimension"):
        PDMatrix(np.eye(17))


def test_batched_sections(rng):
    P = PDMatrix(random_pd(rng, 2, batch=(4, 3)))
    A = rng.standard_normal((4, 3, 2, 2)) + 0j
    out = t_solve(P, t_operator(P, 0.7, A) * 0 + t_operator(P, 1, A))
    np.testing.assert_allclose(out, A, atol=1e-10)
