"""Small dense linear algebra for task-space computations.

The eigendecomposition is a cyclic Jacobi iteration rather than a LAPACK
call: the matrices here are tiny (one row/column per task), Jacobi keeps
good relative accuracy on graded Gram matrices, and the rotation order plus
an explicit sign convention make the output reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import check_matrix, check_square_symmetric

# Eigenvalues at or below RANK_RTOL * lambda_max (or negative) count as zero.
# The threshold is relative because Gram formation squares the conditioning
# of the underlying gradient matrix; absolute cutoffs fail across scales. It
# must sit below 1e-12 so that full-rank systems with condition numbers up
# to 1e6 survive the squaring, yet above the ~1e-14 noise floor that exact
# rank deficiencies leave after rounding.
RANK_RTOL = 1e-13

# Convergence target for the Jacobi sweep, relative to the Frobenius norm.
JACOBI_OFFDIAG_RTOL = 1e-12

_MAX_SWEEPS = 100


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    ``rank`` counts the eigenvalues above the relative zero threshold;
    negative eigenvalues never count. Eigenvector columns match the
    eigenvalue order and carry a deterministic sign (the largest-magnitude
    component of each column is positive).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    def positive_part(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues above the rank threshold and their eigenvectors."""
        r = self.rank
        return self.eigenvalues[:r], self.eigenvectors[:, :r]


def _jacobi(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps run until none of the rotations fire anymore (per-pair relative
    floor near machine epsilon), which lands the off-diagonal far below the
    JACOBI_OFFDIAG_RTOL * ||M||_F target. Iterating to the epsilon floor
    preserves the relative accuracy of small eigenvalues, which the
    downstream alignment relies on for badly conditioned gradient systems.
    """
    a = np.array(M, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    if n == 2:
        # A single rotation diagonalizes a symmetric 2x2 exactly.
        apq = a[0, 1]
        app = a[0, 0]
        aqq = a[1, 1]
        if apq == 0.0:
            return np.array([app, aqq]), v
        tau = (aqq - app) / (2.0 * apq)
        if tau >= 0.0:
            t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
        else:
            t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
        c = 1.0 / math.sqrt(1.0 + t * t)
        s = t * c
        return np.array([app - t * apq, aqq + t * apq]), np.array([[c, s], [-s, c]])

    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                # Skip rotations that cannot change the diagonal at working
                # precision; a full quiet sweep terminates the iteration.
                if abs(apq) <= 1e-17 * (abs(app) + abs(aqq)):
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                a[:, p] = new_p
                a[p, :] = new_p
                a[:, q] = new_q
                a[q, :] = new_q
                # The rotated 2x2 block has an exact closed form; using it
                # avoids the cancellation of the generic update.
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        if not rotated:
            break
    return a.diagonal().copy(), v


def sym_eigh(M, *, rank_rtol: float = RANK_RTOL, sym_rtol: float = 1e-10) -> Spectrum:
    """Eigendecomposition of a symmetric matrix with deterministic output.

    Eigenvalues are sorted descending; each eigenvector is flipped so its
    largest-magnitude component (first such index on ties) is positive.
    Raises ValueError for non-square or asymmetric input.
    """
    M = check_square_symmetric(M, rtol=sym_rtol)
    M = 0.5 * (M + M.T)
    lam, V = _jacobi(M)

    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    V = V[:, order]

    for j in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]

    rank = _positive_rank(lam, rank_rtol)
    return Spectrum(eigenvalues=lam, eigenvectors=V, rank=rank)


def _positive_rank(lam_desc: np.ndarray, rank_rtol: float) -> int:
    lam_max = lam_desc[0] if lam_desc.size else 0.0
    if lam_max <= 0.0:
        return 0
    thresh = rank_rtol * lam_max
    return int(np.sum(lam_desc > thresh))


def gram(G) -> np.ndarray:
    """Task-space Gram matrix of a gradient matrix (columns = tasks)."""
    G = check_matrix(G)
    M = G.T @ G
    return 0.5 * (M + M.T)


def singular_values(G) -> tuple[np.ndarray, Spectrum]:
    """Singular values of ``G`` (descending) via its task-space Gram matrix.

    Returns the full vector (negatives clamped to zero) together with the
    Gram spectrum.
    """
    spectrum = sym_eigh(gram(G))
    sigma = np.sqrt(np.clip(spectrum.eigenvalues, 0.0, None))
    return sigma, spectrum


def condition_number(G) -> float:
    """Ratio of the largest to smallest singular value of ``G``.

    Singular values at or below the relative rank threshold count as zero;
    if any do (column-rank deficiency), the system is ill-posed and the
    +inf sentinel is returned. An all-zero matrix is rejected.
    """
    G = check_matrix(G)
    if not np.any(G):
        raise ValueError("condition number of an all-zero matrix is undefined")
    sigma, spectrum = singular_values(G)
    if spectrum.rank < G.shape[1]:
        return math.inf
    return float(sigma[0] / sigma[spectrum.rank - 1])


def frobenius(A) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(np.asarray(A, dtype=np.float64)))
