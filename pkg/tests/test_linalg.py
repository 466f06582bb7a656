import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from somapulse.linalg import (
    NoConvergence,
    NotHermitian,
    NumericPolicy,
    commutator,
    dag,
    expm_i,
    frob,
    herm_eig,
    jacobi_eigh,
    trace,
    unitarity_error,
)

from conftest import random_hermitian

X = np.array([[0, 1], [1, 0]], dtype=complex)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_diagonal_input(method):
    es = herm_eig(np.diag([1.0, 2.0, 3.0]).astype(complex), method=method)
    np.testing.assert_allclose(es.eigenvalues, [1, 2, 3], atol=1e-14)
    np.testing.assert_allclose(np.abs(es.eigenvectors), np.eye(3), atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_pauli_x_spectrum(method):
    es = herm_eig(X, method=method)
    np.testing.assert_allclose(es.eigenvalues, [-1, 1], atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
@pytest.mark.parametrize("seed", range(5))
def test_random_9x9_reconstruction(method, seed):
    a = random_hermitian(np.random.default_rng(seed), 9)
    es = herm_eig(a, method=method)
    v = es.eigenvectors
    assert frob(dag(v) @ v - np.eye(9)) <= 1e-10
    assert frob(es.reconstruct() - a) <= 1e-10 * frob(a)
    assert np.all(np.diff(es.eigenvalues) >= 0)


def test_jacobi_matches_lapack_eigenvalues(rng):
    for d in range(2, 10):
        a = random_hermitian(rng, d)
        np.testing.assert_allclose(jacobi_eigh(a).eigenvalues, np.linalg.eigvalsh(a), atol=1e-12)


def test_not_hermitian_rejected():
    with pytest.raises(NotHermitian):
        herm_eig(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(NotHermitian):
        expm_i(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


def test_jacobi_sweep_cap(rng):
    a = random_hermitian(rng, 6)
    with pytest.raises(NoConvergence):
        jacobi_eigh(a, NumericPolicy(jacobi_max_sweeps=1))


def test_expm_zero_is_identity():
    for s in (0.0, 1.3, -7.0):
        np.testing.assert_allclose(expm_i(np.zeros((3, 3), dtype=complex), s), np.eye(3), atol=1e-15)


@pytest.mark.parametrize("method", ["eig", "taylor"])
def test_expm_pauli_quarter_turn(method):
    np.testing.assert_allclose(expm_i(X, np.pi / 2, method=method), -1j * X, atol=1e-14)


@pytest.mark.parametrize("method", ["eig", "taylor"])
def test_expm_unitary(rng, method):
    for d in range(2, 10):
        u = expm_i(random_hermitian(rng, d), 0.37, method=method)
        assert unitarity_error(u) <= 1e-10


@pytest.mark.parametrize("method", ["eig", "taylor"])
def test_expm_against_scipy(rng, method):
    # scipy's Pade expm is an independent route
    for d in (2, 3, 9):
        a = random_hermitian(rng, d, scale=3.0)
        np.testing.assert_allclose(expm_i(a, 0.8, method=method), scipy.linalg.expm(-0.8j * a), atol=1e-12)


def test_expm_broadcasts_over_stack(rng):
    a = np.stack([random_hermitian(rng, 3) for _ in range(4)])
    s = np.linspace(0.1, 1.0, 4)
    u = expm_i(a, s)
    for k in range(4):
        np.testing.assert_allclose(u[k], expm_i(a[k], s[k]), atol=1e-13)


hermitian = st.builds(
    lambda seed, d, scale: random_hermitian(np.random.default_rng(seed), d, scale),
    st.integers(0, 2**32 - 1), st.integers(2, 9), st.floats(1e-3, 10.0),
)


@settings(max_examples=60, deadline=None)
@given(hermitian, st.floats(-5, 5))
def test_forward_backward_is_identity(a, s):
    n = a.shape[0]
    assert frob(expm_i(a, s) @ expm_i(a, -s) - np.eye(n)) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(hermitian, st.floats(-10, 10))
def test_shift_moves_spectrum(a, c):
    e0 = herm_eig(a).eigenvalues
    e1 = herm_eig(a + c * np.eye(a.shape[0])).eigenvalues
    np.testing.assert_allclose(e1, e0 + c, atol=1e-10 * max(1.0, abs(c)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
def test_trace_cyclicity(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    assert abs(trace(a @ b) - trace(b @ a)) <= 1e-12 * max(1.0, frob(a) * frob(b))


def test_commutator_antisymmetric(rng):
    a, b = random_hermitian(rng, 4), random_hermitian(rng, 4)
    np.testing.assert_allclose(commutator(a, b), -commutator(b, a))
