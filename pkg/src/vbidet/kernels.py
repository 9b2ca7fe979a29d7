"""Kernel dispatch: compiled extension when present, NumPy fallback otherwise.

``USING_COMPILED`` records which backend was selected at import time;
``benchmarks/bench_kernels.py`` compares the two head to head.
"""

from __future__ import annotations

import numpy as np

from . import _moments_np

try:  # pragma: no cover - exercised indirectly via either branch
    from . import _moments as _impl

    USING_COMPILED = True
except ImportError:  # pragma: no cover
    _impl = _moments_np
    USING_COMPILED = False

__all__ = ["USING_COMPILED", "posterior_moments", "nearest_index"]

PHI_FLOOR = 1e-12


def posterior_moments(
    r: np.ndarray, phi, points: np.ndarray, module=None
) -> tuple[np.ndarray, np.ndarray]:
    """Batched constellation posterior mean / second moment.

    ``r`` may have any shape; ``phi`` broadcasts against it and is clamped
    below at ``PHI_FLOOR`` before exponentiation.
    """
    impl = _impl if module is None else module
    r = np.asarray(r, dtype=np.complex128)
    phi = np.maximum(np.broadcast_to(np.asarray(phi, dtype=np.float64), r.shape), PHI_FLOOR)
    mean, m2 = impl.posterior_moments_flat(
        np.ascontiguousarray(r.ravel()),
        np.ascontiguousarray(phi.ravel()),
        np.ascontiguousarray(points),
    )
    return mean.reshape(r.shape), m2.reshape(r.shape)


def nearest_index(x: np.ndarray, points: np.ndarray, module=None) -> np.ndarray:
    """Index of the nearest constellation point for every element of ``x``."""
    impl = _impl if module is None else module
    x = np.asarray(x, dtype=np.complex128)
    idx = impl.nearest_index_flat(
        np.ascontiguousarray(x.ravel()), np.ascontiguousarray(points)
    )
    return idx.reshape(x.shape)
