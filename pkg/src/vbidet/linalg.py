"""Dense complex linear-algebra primitives shared by every detector.

Everything here is a pure function of its inputs: Gram products, a
deterministic power iteration for the largest eigenvalue, a truncated SVD
built from the Hermitian eigen-decomposition of the Gram matrix, and a
Cholesky-backed Hermitian solve.  Matrices are plain ``complex128`` NumPy
arrays; batched variants accept a leading stack dimension.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdFactors",
    "NonConvergenceWarning",
    "largest_eigenvalue",
    "largest_eigenvalue_stacked",
    "truncated_svd",
    "truncated_svd_stacked",
    "hermitian_solve",
    "gram",
]

# Singular values below this multiple of sigma_max are treated as exact zeros.
_RANK_TOL = 1e-12


class NonConvergenceWarning(UserWarning):
    """Raised as a warning when power iteration hits its iteration cap."""


def as_complex(a) -> np.ndarray:
    """Return ``a`` as a finite complex128 array, validating for NaN/Inf."""
    a = np.asarray(a, dtype=np.complex128)
    if not np.all(np.isfinite(a.view(np.float64))):
        raise ValueError("array contains non-finite entries")
    return a


def gram(h: np.ndarray) -> np.ndarray:
    """Gram matrix H^H H (stacked inputs allowed)."""
    h = np.asarray(h, dtype=np.complex128)
    return np.swapaxes(h, -1, -2).conj() @ h


@dataclass(frozen=True)
class SvdFactors:
    """Truncated SVD ``H = U diag(sigma) V^H`` with U: N_r x N_t, V: N_t x N_t.

    ``sigma`` is real, non-negative and sorted descending; both U and V have
    orthonormal columns.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma[..., None, :]) @ np.swapaxes(self.V, -1, -2).conj()

    @property
    def A(self) -> np.ndarray:
        """The column-scaled factor U diag(sigma) used by the SVD-domain model."""
        return self.U * self.sigma[..., None, :]


def largest_eigenvalue(g: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Uses a fixed all-ones start vector so the result is reproducible run to
    run.  On non-convergence the best estimate is returned and a
    :class:`NonConvergenceWarning` is emitted.

    Parameters
    ----------
    g : ndarray
        Hermitian positive semi-definite matrix, shape (n, n).
    tol : float
        Relative tolerance on successive Rayleigh-quotient estimates.
    max_iter : int
        Iteration cap.
    """
    g = as_complex(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    return float(largest_eigenvalue_stacked(g[None], tol=tol, max_iter=max_iter)[0])


def largest_eigenvalue_stacked(
    g: np.ndarray, tol: float = 1e-8, max_iter: int = 1000
) -> np.ndarray:
    """Power iteration over a stack of Hermitian PSD matrices, shape (..., n, n).

    All members of the stack iterate in lockstep until every estimate has
    converged; each member's limit is independent of its stack-mates.
    """
    g = np.asarray(g, dtype=np.complex128)
    n = g.shape[-1]
    v = np.ones(g.shape[:-2] + (n, 1), dtype=np.complex128) / np.sqrt(n)
    lam = np.zeros(g.shape[:-2] + (1, 1))
    converged = False
    for _ in range(max_iter):
        w = g @ v
        norm = np.sqrt(np.sum(np.abs(w) ** 2, axis=-2, keepdims=True))
        # Rayleigh quotient of the current (unit) v: v^H G v = v^H w.
        lam_new = np.sum(v.conj() * w, axis=-2, keepdims=True).real
        if np.all(norm > 0):
            v = w / norm
        else:
            # Zero matrix in the stack: its eigenvalue is 0, keep v fixed.
            safe = np.where(norm > 0, norm, 1.0)
            v = np.where(norm > 0, w / safe, v)
        if np.all(np.abs(lam_new - lam) <= tol * np.maximum(np.abs(lam_new), 1e-300)):
            lam = lam_new
            converged = True
            break
        lam = lam_new
    if not converged:
        warnings.warn(
            f"power iteration did not reach tol={tol} within {max_iter} iterations; "
            "returning best estimate",
            NonConvergenceWarning,
        )
    return lam[..., 0, 0]


def truncated_svd(h: np.ndarray) -> SvdFactors:
    """Truncated SVD of an N_r x N_t matrix with N_r >= N_t.

    Thin LAPACK factorization; the Gram-matrix eigen route was rejected
    because squaring the condition number puts a sqrt(eps) floor under the
    small singular values, which breaks the 1e-10 orthonormality and
    reconstruction contracts near rank deficiency.  Singular values below
    ``1e-12 * sigma_max`` are reported as exact zeros (U keeps orthonormal
    columns for them regardless).
    """
    h = as_complex(h)
    if h.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    n_r, n_t = h.shape
    if n_r < n_t:
        raise ValueError(f"need N_r >= N_t, got {n_r} < {n_t}")
    return truncated_svd_stacked(h)


def truncated_svd_stacked(h: np.ndarray) -> SvdFactors:
    """:func:`truncated_svd` for one matrix or a stack (B, N_r, N_t)."""
    h = np.asarray(h, dtype=np.complex128)
    u, sigma, vh = np.linalg.svd(h, full_matrices=False)
    smax = sigma[..., :1]
    sigma = np.where(sigma <= _RANK_TOL * smax, 0.0, sigma)
    return SvdFactors(U=u, sigma=sigma, V=np.swapaxes(vh, -1, -2).conj())


def hermitian_solve(m: np.ndarray, b: np.ndarray, check_condition: bool = True) -> np.ndarray:
    """Solve ``M X = B`` for Hermitian positive-definite M (stack-friendly).

    Positive definiteness is established via a Cholesky attempt; indefinite
    M raises ``np.linalg.LinAlgError``, and so does a Cholesky pivot ratio
    indicating an effectively singular matrix (condition estimate beyond
    ~1e15).  Pass ``check_condition=False`` for matrices that are positive
    definite by construction (e.g. noise-regularized covariances).
    """
    m = np.asarray(m, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    chol = np.linalg.cholesky(m)  # raises LinAlgError when not PD
    if check_condition:
        d = np.abs(np.diagonal(chol, axis1=-2, axis2=-1))
        if np.any(np.min(d, axis=-1) <= 3e-8 * np.max(d, axis=-1)):
            raise np.linalg.LinAlgError(
                "matrix is singular to working precision (condition estimate exceeded)"
            )
    return np.linalg.solve(m, b)
