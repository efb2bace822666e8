"""Dense complex linear algebra shared by the detector and analysis code.

All functions accept stacked inputs (leading batch dimensions) in addition
to single matrices, following numpy's linalg conventions.
"""

import numpy as np

from .errors import NotPositiveDefinite, RankDeficient, ShapeError

RANK_TOL = 1e-12


def qr_thin(H, check_rank=True):
    """Thin QR decomposition with a real non-negative diagonal of ``R``.

    Parameters
    ----------
    H : ndarray, shape (..., L, N)
        Matrix (or stack of matrices) with ``L >= N``.
    check_rank : bool
        Raise :class:`RankDeficient` when a diagonal entry of ``R`` falls
        below ``1e-12`` times the largest one.

    Returns
    -------
    Q1 : ndarray, shape (..., L, N)
        Orthonormal columns, ``Q1^H Q1 = I``.
    R : ndarray, shape (..., N, N)
        Upper triangular, ``Q1 R = H``.
    """
    H = np.asarray(H)
    if H.ndim < 2:
        raise ShapeError("qr_thin expects a matrix")
    L, N = H.shape[-2:]
    if L < N:
        raise ShapeError(f"qr_thin needs L >= N, got {L}x{N}")
    Q1, R = np.linalg.qr(H.astype(complex), mode="reduced")

    # LAPACK's Householder QR leaves arbitrary phases on diag(R); rotate them
    # into Q1 so that the diagonal becomes |d|.
    d = np.diagonal(R, axis1=-2, axis2=-1)
    mag = np.abs(d)
    phase = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    Q1 = Q1 * phase[..., None, :]
    R = np.conj(phase)[..., :, None] * R
    idx = np.arange(N)
    R[..., idx, idx] = mag
    R = np.triu(R)

    if check_rank:
        top = mag.max(axis=-1, keepdims=True)
        if np.any(mag < RANK_TOL * top) or np.any(top == 0):
            raise RankDeficient("R has a (near) zero diagonal entry")
    return Q1, R


def hermitian_solve(A, B):
    """Solve ``A X = B`` for hermitian positive definite ``A`` via Cholesky.

    Raises :class:`NotPositiveDefinite` if the factorization fails.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    vec = B.ndim == A.ndim - 1
    if vec:
        B = B[..., None]
    try:
        C = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    Y = np.linalg.solve(C, B)
    X = np.linalg.solve(np.conj(np.swapaxes(C, -1, -2)), Y)
    return X[..., 0] if vec else X


def hermitian_sqrt(A, tol=1e-12):
    """Hermitian square root of a PSD matrix.

    Returns ``None`` if ``A`` has an eigenvalue below ``-tol * max|eig|``.
    """
    A = np.asarray(A, dtype=complex)
    A = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(A)
    if w.min() < -tol * max(1.0, np.abs(w).max()):
        return None
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def herm(A):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(A, -1, -2))
