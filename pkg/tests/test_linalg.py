import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randmag.linalg import (
    count_below,
    hermitian_eigh,
    householder_tridiagonalize,
    inertia,
    tridiagonal_ql,
)


def random_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (X + X.conj().T) / 2


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_tridiagonalization_is_unitary_similarity(n, seed):
    A = random_hermitian(n, seed)
    d, e, Q = householder_tridiagonalize(A)
    T = np.diag(d) + np.diag(e, -1) + np.diag(e, 1)
    assert np.allclose(Q.conj().T @ Q, np.eye(n), atol=1e-12)
    assert np.allclose(Q.conj().T @ A @ Q, T, atol=1e-10)
    assert np.all(e >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_hermitian_eigh_matches_lapack(n, seed):
    A = random_hermitian(n, seed)
    w, V = hermitian_eigh(A)
    assert np.allclose(w, np.linalg.eigvalsh(A), atol=1e-10)
    assert np.linalg.norm(A @ V - V * w) < 1e-9
    assert np.allclose(V.conj().T @ V, np.eye(n), atol=1e-10)


def test_ql_on_known_tridiagonal():
    # path graph Laplacian-like matrix: eigenvalues 2 - 2 cos(k pi / (n+1))
    n = 12
    w, _ = tridiagonal_ql(np.full(n, 2.0), np.ones(n - 1))
    k = np.arange(1, n + 1)
    assert np.allclose(w, np.sort(2 + 2 * np.cos(k * np.pi / (n + 1))), atol=1e-12)


def test_degenerate_matrix():
    A = np.diag([1.0, 1.0, 1.0, 2.0]).astype(complex)
    w, V = hermitian_eigh(A)
    assert np.allclose(w, [1, 1, 1, 2])
    assert np.allclose(V.conj().T @ V, np.eye(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31), st.floats(-3, 3))
def test_inertia_counts_match_spectrum(n, seed, sigma):
    A = random_hermitian(n, seed)
    w = np.linalg.eigvalsh(A)
    neg, zero, pos = inertia(A - sigma * np.eye(n))
    assert neg == np.sum(w < sigma) and pos == np.sum(w > sigma) and zero == 0
    assert count_below(A, sigma, inclusive=False, zero_tol=0.0) == np.sum(w < sigma)


def test_inertia_detects_exact_zero():
    A = np.diag([-1.0, 0.0, 2.0])
    assert inertia(A, zero_tol=1e-12) == (1, 1, 1)
    assert count_below(A, 0.0, inclusive=True, zero_tol=1e-12) == 2


@pytest.mark.parametrize("n", [2, 17, 60])
def test_reconstruction(n):
    A = random_hermitian(n, n)
    w, V = hermitian_eigh(A)
    assert np.allclose(V @ np.diag(w) @ V.conj().T, A, atol=1e-10)
