"""Pure-NumPy implementation of the NLE kernels.

Selected at import time by :mod:`vbidet.kernels` when the compiled
extension is unavailable.  Must stay numerically equivalent to
``_moments.pyx``: same log-sum-exp stabilization, same summation order.
"""

from __future__ import annotations

import numpy as np


def posterior_moments_flat(
    r: np.ndarray, phi: np.ndarray, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-weighted constellation moments, element-wise over flat arrays.

    Weights are ``exp(-|c_j - r|^2 / phi)`` normalized with a max-shift
    (log-sum-exp); returns the posterior mean and second moment
    ``sum_j w_j |c_j|^2``.
    """
    ex = -np.abs(points[None, :] - r[:, None]) ** 2 / phi[:, None]
    ex -= ex.max(axis=1, keepdims=True)
    w = np.exp(ex)
    z = w.sum(axis=1)
    mean = (w * points[None, :]).sum(axis=1) / z
    m2 = (w * np.abs(points[None, :]) ** 2).sum(axis=1) / z
    return mean, m2


def nearest_index_flat(x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Index of the nearest constellation point; ties break to the lowest index."""
    d = np.abs(x[:, None] - points[None, :]) ** 2
    return np.argmin(d, axis=1).astype(np.int64)
