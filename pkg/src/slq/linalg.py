"""Dense primitives for small control-theoretic matrices.

Everything operates on plain float64 numpy arrays in row-major layout.
Symmetric matrices are ordinary square arrays passed through
:func:`symmetrize`; no routine ever trusts raw input to be symmetric.
All tolerances are relative to ``1 + ||.||`` (Frobenius) so that zero
matrices are handled without special cases.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NoSolutionError

__all__ = [
    "DEFAULT_PSD_TOL",
    "DEFAULT_RANK_TOL",
    "as_matrix",
    "expm",
    "fro",
    "is_pd",
    "is_psd",
    "pinv",
    "range_contained",
    "range_defect",
    "solve_matrix_eq",
    "symmetrize",
]

#: Singular values below DEFAULT_RANK_TOL * sigma_max are treated as zero.
DEFAULT_RANK_TOL = 1e-10

#: Default relative tolerance for positive-(semi)definiteness decisions.
DEFAULT_PSD_TOL = 1e-9


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d float array; 1-d input becomes a column."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(-1, 1)
    elif A.ndim != 2:
        raise InvalidInputError(f"{name} must be at most 2-dimensional")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def fro(M) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(M))


def symmetrize(M, name: str = "matrix") -> np.ndarray:
    """Return (M + M') / 2, the canonical symmetric representative."""
    A = as_matrix(M, name)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"{name} must be square to symmetrize")
    return (A + A.T) / 2.0


def pinv(M, rel_tol: float = DEFAULT_RANK_TOL, abs_tol: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD with a relative rank cutoff.

    Singular values below ``max(rel_tol * sigma_max, abs_tol)`` are zeroed.
    The absolute floor matters for matrices that are zero up to rounding,
    where every singular value is noise yet each is O(sigma_max).  For
    symmetric input the result is symmetrized so that it is exactly symmetric
    and commutes with the input up to rounding.
    """
    A = as_matrix(M)
    if not 0.0 < rel_tol < 1.0:
        raise InvalidInputError("rel_tol must lie in (0, 1)")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] <= abs_tol:
        return np.zeros((A.shape[1], A.shape[0]))
    cutoff = max(rel_tol * s[0], abs_tol)
    inv = np.where(s > cutoff, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    P = Vt.T @ (inv[:, None] * U.T)
    if A.shape[0] == A.shape[1] and fro(A - A.T) <= 1e-14 * (1.0 + fro(A)):
        P = (P + P.T) / 2.0
    return P


def range_defect(L, N, rel_tol: float = DEFAULT_RANK_TOL) -> float:
    """Normalized defect ||N N^+ L - L|| / (1 + ||L||) of the inclusion R(L) <= R(N)."""
    Lm = as_matrix(L, "L")
    Nm = as_matrix(N, "N")
    if Lm.shape[0] != Nm.shape[0]:
        raise InvalidInputError("L and N must have equal row counts")
    Nd = pinv(Nm, rel_tol)
    return fro(Nm @ (Nd @ Lm) - Lm) / (1.0 + fro(Lm))


def range_contained(L, N, tol: float = 1e-9) -> bool:
    """True iff the column space of L is contained in that of N.

    Decided by ``||N N^+ L - L|| <= tol * (1 + ||L||)``, which is exactly the
    solvability criterion for N X = L.
    """
    return range_defect(L, N) <= tol


def solve_matrix_eq(N, L, Y=None, tol: float = 1e-9) -> np.ndarray:
    """Solve N X = L, returning X = N^+ L + (I - N^+ N) Y.

    Y parametrizes the affine family of solutions; Y = 0 gives the
    minimum-norm one.  Raises :class:`NoSolutionError` when the range
    condition fails.
    """
    Nm = as_matrix(N, "N")
    Lm = as_matrix(L, "L")
    if not range_contained(Lm, Nm, tol):
        raise NoSolutionError("N X = L has no solution: range(L) not within range(N)")
    Nd = pinv(Nm)
    X = Nd @ Lm
    if Y is not None:
        Ym = as_matrix(Y, "Y")
        if Ym.shape != (Nm.shape[1], Lm.shape[1]):
            raise InvalidInputError("Y has incompatible shape")
        X = X + (np.eye(Nm.shape[1]) - Nd @ Nm) @ Ym
    return X


def _min_eig(M) -> tuple[float, float]:
    A = symmetrize(M)
    w = np.linalg.eigvalsh(A)
    return float(w[0]), fro(A)


def is_psd(M, tol: float = DEFAULT_PSD_TOL) -> bool:
    """True iff the smallest eigenvalue is >= -tol * (1 + ||M||)."""
    lam, nrm = _min_eig(M)
    return lam >= -tol * (1.0 + nrm)


def is_pd(M, tol: float = DEFAULT_PSD_TOL) -> bool:
    """True iff the smallest eigenvalue clears a strict margin +tol * (1 + ||M||)."""
    lam, nrm = _min_eig(M)
    return lam >= tol * (1.0 + nrm)


def expm(M, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^(M t) (scaling-and-squaring with Pade approximant)."""
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError("expm requires a square matrix")
    if not np.isfinite(t):
        raise InvalidInputError("t must be finite")
    return scipy.linalg.expm(A * float(t))
