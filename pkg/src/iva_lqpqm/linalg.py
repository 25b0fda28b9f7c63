"""Dense complex Hermitian linear algebra.

All routines accept stacks of matrices: the last two axes are the matrix
axes and every leading axis is a batch axis.  LAPACK does the heavy lifting
through :mod:`numpy.linalg`; this module adds the contracts the separation
code relies on (symmetrization, ascending eigenvalues, a lower-triangular
factor with ``A = G^H G``, and typed failures).
"""

from typing import NamedTuple, Optional

import numpy as np

from .errors import ConvergenceFailure, NotPositiveDefinite, Singular

HERMITIAN_RTOL = 1e-10


class EigenDecomposition(NamedTuple):
    """Eigenvalues in ascending order and the matching unit-norm eigenvectors
    stored as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))


def is_hermitian(M: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    M = np.asarray(M)
    diff = np.linalg.norm(M - np.conj(np.swapaxes(M, -1, -2)), axis=(-2, -1))
    scale = np.linalg.norm(M, axis=(-2, -1))
    return bool(np.all(diff <= rtol * scale))


def as_complex_matrix(M, hermitian: bool = False) -> np.ndarray:
    """Validate and convert to a complex128 array.

    Raises:
        ValueError: non-finite entries, wrong rank, or (with ``hermitian``) a
            matrix further than ``HERMITIAN_RTOL`` from its adjoint.
    """
    M = np.array(M, dtype=np.complex128)
    if M.ndim < 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if hermitian and not is_hermitian(M):
        raise ValueError("matrix is not Hermitian")
    return M


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower-triangular ``G`` with positive real diagonal such that ``A = G^H G``.

    This is the reversed ("UL") factorization: with ``J`` the exchange matrix,
    ``J A J = L L^H`` and ``G = J L^H J``.

    Raises:
        NotPositiveDefinite: if a pivot is not safely positive.
    """
    A = hermitian_part(np.asarray(A, dtype=np.complex128))
    flipped = A[..., ::-1, ::-1]
    try:
        L = np.linalg.cholesky(flipped)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    G = np.conj(np.swapaxes(L, -1, -2))[..., ::-1, ::-1]

    pivots = np.real(np.diagonal(G, axis1=-2, axis2=-1))
    scale = np.sqrt(np.max(np.abs(np.diagonal(A, axis1=-2, axis2=-1)), axis=-1))
    if np.any(pivots <= 1e-14 * scale[..., None]) or not np.all(np.isfinite(G)):
        raise NotPositiveDefinite("Cholesky pivot below tolerance")
    return G


def eigh(U: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    U = hermitian_part(np.asarray(U, dtype=np.complex128))
    try:
        phi, sigma = np.linalg.eigh(U)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from None
    return EigenDecomposition(phi, sigma)


def solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B``.

    Raises:
        Singular: when LAPACK detects an exactly singular matrix or the
            solution is not finite.
    """
    try:
        X = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from None
    if not np.all(np.isfinite(X)):
        raise Singular("solution is not finite")
    return X


def inverse(A: np.ndarray, max_cond: Optional[float] = 1e12) -> np.ndarray:
    """Matrix inverse with a cheap 1-norm condition check."""
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from None
    if not np.all(np.isfinite(Ainv)):
        raise Singular("inverse is not finite")
    if max_cond is not None:
        cond = np.linalg.norm(A, 1, axis=(-2, -1)) * np.linalg.norm(Ainv, 1, axis=(-2, -1))
        if np.any(cond > max_cond):
            raise Singular(f"condition number estimate {np.max(cond):.3g} exceeds {max_cond:.3g}")
    return Ainv


def generalized_eig(P: np.ndarray, Q: np.ndarray) -> EigenDecomposition:
    """Solve ``P w = phi Q w`` for Hermitian ``P`` and Hermitian PD ``Q``.

    Eigenvalues are real and ascending; eigenvectors are ``Q``-orthonormal,
    i.e. ``W^H Q W = I``.
    """
    P = hermitian_part(np.asarray(P, dtype=np.complex128))
    Q = hermitian_part(np.asarray(Q, dtype=np.complex128))
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from None
    Linv = inverse(L, max_cond=None)
    Linv_h = np.conj(np.swapaxes(Linv, -1, -2))
    phi, Y = eigh(Linv @ P @ Linv_h)
    return EigenDecomposition(phi, Linv_h @ Y)
