"""Pfaffian of real skew-symmetric matrices.

Uses the Parlett-Reid tridiagonalization: Gaussian elimination with
congruence updates that preserve the Pfaffian up to the sign of the
row/column swaps.  The product of super-diagonal pivots is accumulated
as (sign, log magnitude) so that matrices of dimension several hundred
neither overflow nor underflow.
"""

from __future__ import annotations

import math

import numpy as np


def pfaffian_sign_log(mat: np.ndarray, skew_tol: float = 1e-10) -> tuple[float, float]:
    """Return ``(sign, log|Pf|)`` of a real skew-symmetric matrix.

    Parameters
    ----------
    mat:
        Square matrix with ``mat.T == -mat`` up to ``skew_tol``.
    skew_tol:
        Largest tolerated elementwise deviation from skew symmetry,
        relative to the largest entry.

    Returns
    -------
    sign, log_abs:
        ``sign`` in {-1.0, 0.0, +1.0}; ``log_abs`` is ``-inf`` when the
        Pfaffian vanishes (odd dimension or structurally singular).
    """
    a = np.array(mat, dtype=float, copy=True)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if n > 0:
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a + a.T)) > skew_tol * scale:
            raise ValueError("matrix is not skew-symmetric within tolerance")
    if n % 2 == 1:
        return 0.0, -math.inf
    if n == 0:
        return 1.0, 0.0  # Pf of the empty matrix is 1

    sign = 1.0
    log_abs = 0.0
    for k in range(0, n - 1, 2):
        # pivot: largest entry in column k below the diagonal
        col = np.abs(a[k + 1 :, k])
        p = int(np.argmax(col)) + k + 1
        if col[p - k - 1] == 0.0:
            return 0.0, -math.inf
        if p != k + 1:
            a[[k + 1, p], :] = a[[p, k + 1], :]
            a[:, [k + 1, p]] = a[:, [p, k + 1]]
            sign = -sign
        pivot = a[k, k + 1]
        sign *= math.copysign(1.0, pivot)
        log_abs += math.log(abs(pivot))
        if k + 2 < n:
            # congruence update eliminating the pivot pair from the trailing block
            tau = a[k, k + 2 :] / pivot
            w = a[k + 2 :, k + 1]
            a[k + 2 :, k + 2 :] += np.outer(tau, w) - np.outer(w, tau)
    return sign, log_abs


def pfaffian(mat: np.ndarray) -> float:
    """Pfaffian as a plain float (may overflow for very large matrices)."""
    sign, log_abs = pfaffian_sign_log(mat)
    if sign == 0.0:
        return 0.0
    return sign * math.exp(log_abs)
