"""Dense Hermitian eigensolver and inertia-based eigenvalue counting.

``hermitian_eigh`` reduces a complex Hermitian matrix to a real symmetric
tridiagonal one with Householder reflections and diagonalises it with the
implicit-shift QL iteration, accumulating eigenvectors.  It is the
reference route; production runs use LAPACK through :func:`numpy.linalg.eigh`,
which implements the same two stages.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg


class ConvergenceError(RuntimeError):
    pass


def householder_tridiagonalize(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unitary ``Q`` with ``Q^H A Q`` real tridiagonal ``(d, e)``.

    ``d`` is the diagonal, ``e`` the sub-diagonal (length ``n - 1``).
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    Q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = A[k + 1 :, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * nx
        v /= np.linalg.norm(v)
        # (I - 2vv^H) B (I - 2vv^H) = B - 2 v w^H - 2 w v^H with w = Bv - (v^H B v) v
        blk = A[k + 1 :, k + 1 :]
        p = blk @ v
        w = p - (v.conj() @ p).real * v
        blk -= 2.0 * (np.outer(v, w.conj()) + np.outer(w, v.conj()))
        A[k + 1 :, k] = 0.0
        A[k + 1, k] = -phase * nx
        A[k, k + 1 :] = A[k + 1 :, k].conj()
        Q[:, k + 1 :] -= 2.0 * np.outer(Q[:, k + 1 :] @ v, v.conj())
    d = A.diagonal().real.copy()
    sub = A.diagonal(-1).copy()
    # rotate the complex sub-diagonal onto the positive reals
    ph = np.ones(n, dtype=complex)
    for k in range(n - 1):
        s = sub[k]
        u = s / abs(s) if s != 0 else 1.0
        ph[k + 1] = ph[k] * u
    Q = Q * ph[None, :]
    return d, np.abs(sub), Q


def tridiagonal_ql(d: np.ndarray, e: np.ndarray, Z: np.ndarray | None = None, max_iter: int = 60):
    """Implicit-shift QL on a real symmetric tridiagonal matrix.

    Returns ascending eigenvalues and, when ``Z`` is given, ``Z`` times the
    accumulated rotations (the eigenvectors of the original matrix when
    ``Z`` is the tridiagonalising transformation).
    """
    d = np.array(d, dtype=float)
    n = len(d)
    ee = np.zeros(n)
    ee[: n - 1] = e
    R = np.eye(n)
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(ee[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise ConvergenceError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * ee[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + ee[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * ee[i]
                b = c * ee[i]
                r = math.hypot(f, g)
                ee[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    ee[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                ri = R[:, i].copy()
                R[:, i] = c * ri - s * R[:, i + 1]
                R[:, i + 1] = s * ri + c * R[:, i + 1]
                i -= 1
            if underflow:
                continue
            d[l] -= p
            ee[l] = g
            ee[m] = 0.0
    order = np.argsort(d, kind="stable")
    d = d[order]
    if Z is None:
        return d, None
    return d, (Z @ R)[:, order]


def hermitian_eigh(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d, e, Q = householder_tridiagonalize(A)
    return tridiagonal_ql(d, e, Q)


def inertia(A: np.ndarray, zero_tol: float = 0.0) -> tuple[int, int, int]:
    """``(n_negative, n_zero, n_positive)`` of a Hermitian matrix.

    Uses the Bunch-Kaufman factorisation ``P A P^T = L D L^H``; by Sylvester's
    law the inertia of ``A`` is that of the block-diagonal ``D``.
    """
    _, D, _ = scipy.linalg.ldl(A, hermitian=True)
    n = D.shape[0]
    neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0:
            ev = np.linalg.eigvalsh(D[i : i + 2, i : i + 2])
            i += 2
        else:
            ev = (D[i, i].real,)
            i += 1
        for x in ev:
            if abs(x) <= zero_tol:
                zero += 1
            elif x < 0:
                neg += 1
    return neg, zero, n - neg - zero


def count_below(A: np.ndarray, sigma: float, inclusive: bool, zero_tol: float) -> int:
    """Number of eigenvalues ``< sigma`` (or ``<= sigma`` when inclusive)."""
    n = A.shape[0]
    neg, zero, _ = inertia(A - sigma * np.eye(n), zero_tol)
    return neg + zero if inclusive else neg
