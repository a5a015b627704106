"""Small dense linear-algebra kernel.

Matrices are plain ``numpy.ndarray`` (row-major, finite entries). Everything
here operates on sizes n <= 16, so simple dense algorithms are used
throughout; the heavy lifting is delegated to numpy's LAPACK bindings.
"""

from __future__ import annotations

import numpy as np


class LinalgError(ValueError):
    pass


_SYM_TOL = 1e-12


def _check_symmetric(M: np.ndarray, what: str):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise LinalgError(f"{what} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > _SYM_TOL * scale:
        raise LinalgError(f"{what} is not symmetric")
    return M


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A = -Q for symmetric P.

    Uses Kronecker vectorization (I (x) A^T + A^T (x) I) vec(P) = -vec(Q);
    fine for the n <= 16 systems in scope. Raises when an eigenvalue pair of
    A sums to zero (no unique solution).
    """
    A = np.asarray(A, dtype=float)
    Q = _check_symmetric(Q, "Q")
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise LinalgError("A and Q must be square with matching size")
    if n > 16:
        raise LinalgError("solve_lyapunov supports n <= 16")
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    if np.linalg.cond(K) > 1e12:
        raise LinalgError("Lyapunov equation has no unique solution")
    # column-stacking vec convention
    vecP = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    P = vecP.reshape((n, n), order="F")
    P = 0.5 * (P + P.T)
    resid = np.linalg.norm(A.T @ P + P @ A + Q, "fro")
    if resid > 1e-10 * max(1.0, np.linalg.norm(Q, "fro")):
        raise LinalgError(f"Lyapunov residual too large: {resid:g}")
    return P


def sym_eig_extrema(M: np.ndarray) -> tuple:
    """Return (lambda_min, lambda_max) of a symmetric matrix."""
    M = _check_symmetric(M, "M")
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(w[0]), float(w[-1])


def cholesky_pd(M: np.ndarray) -> bool:
    """True iff the symmetric matrix M is positive definite."""
    M = _check_symmetric(M, "M")
    try:
        np.linalg.cholesky(0.5 * (M + M.T))
        return True
    except np.linalg.LinAlgError:
        return False


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value; 0 for the zero matrix."""
    M = np.asarray(M, dtype=float)
    if M.size == 0 or not np.any(M):
        return 0.0
    return float(np.linalg.norm(M, 2))


def top_singular_vectors(M: np.ndarray) -> tuple:
    """(sigma_1, u_1, v_1) with M v_1 = sigma_1 u_1; used for the
    subgradient of the spectral norm."""
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return float(s[0]), U[:, 0], Vt[0, :]


def is_hurwitz(A: np.ndarray) -> bool:
    """Converse-Lyapunov Hurwitz test: solve A^T P + P A = -I and check P > 0.

    Avoids a nonsymmetric eigendecomposition; exact for matrices where the
    Lyapunov equation is uniquely solvable.
    """
    try:
        P = solve_lyapunov(A, np.eye(A.shape[0]))
    except LinalgError:
        return False
    return cholesky_pd(P)
