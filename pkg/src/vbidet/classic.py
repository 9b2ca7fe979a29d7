"""Non-learned baseline detectors: zero-forcing, LMMSE, exhaustive ML.

Each detector has a stacked core operating on (B, N_r, 1) observations
against (B, N_r, N_t) channels (a single shared channel broadcasts), plus
a per-sample wrapper returning a :class:`DetectionResult`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import Constellation, hard_decision
from .linalg import hermitian_solve

__all__ = [
    "DetectionResult",
    "detect_zf",
    "detect_lmmse",
    "detect_ml",
    "zf_stacked",
    "lmmse_stacked",
    "ml_stacked",
    "ml_candidates",
    "ML_SEARCH_BITS_LIMIT",
]

# Exhaustive ML is refused beyond 2^20 candidate vectors.
ML_SEARCH_BITS_LIMIT = 20


@dataclass(frozen=True)
class DetectionResult:
    """Pre-rounding estimate plus its hard decision."""

    xhat: np.ndarray  # (N_t,) complex
    hard: np.ndarray  # (N_t,) int64 symbol indices
    weights: np.ndarray | None = None


def _stack3(y: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    single = y.ndim == 1
    if single:
        y = y[None, :, None]
    elif y.ndim == 2:
        y = y[..., None]
    if h.ndim == 2:
        h = h[None]
    return y, h, single


def zf_stacked(y: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Zero-forcing estimates (H^H H)^(-1) H^H y, shape (B, N_t, 1)."""
    hh = np.swapaxes(h, -1, -2).conj()
    g = hh @ h
    try:
        return hermitian_solve(g, hh @ y)
    except np.linalg.LinAlgError as exc:
        raise ValueError("zero-forcing requires a full column-rank channel") from exc


def detect_zf(y: np.ndarray, h: np.ndarray, constellation: Constellation) -> DetectionResult:
    """Zero-forcing detector."""
    y3, h3, _ = _stack3(y, h)
    xhat = zf_stacked(y3, h3)[0, :, 0]
    return DetectionResult(xhat=xhat, hard=hard_decision(xhat, constellation))


def lmmse_stacked(y: np.ndarray, h: np.ndarray, noise_var, form: str = "nr") -> np.ndarray:
    """LMMSE estimates, shape (B, N_t, 1).

    ``form="nr"`` computes H^H (H H^H + nv I)^(-1) y as published;
    ``form="nt"`` uses the algebraically identical (H^H H + nv I)^(-1) H^H y.
    """
    nv = np.asarray(noise_var, dtype=np.float64)
    if np.any(nv <= 0):
        raise ValueError("noise_var must be positive")
    nv = nv.reshape(nv.shape + (1, 1)) if nv.ndim else nv
    hh = np.swapaxes(h, -1, -2).conj()
    if form == "nr":
        n_r = h.shape[-2]
        m = h @ hh + nv * np.eye(n_r)
        return hh @ hermitian_solve(m, y, check_condition=False)
    if form == "nt":
        n_t = h.shape[-1]
        m = hh @ h + nv * np.eye(n_t)
        return hermitian_solve(m, hh @ y, check_condition=False)
    raise ValueError(f"unknown LMMSE form {form!r}")


def detect_lmmse(
    y: np.ndarray, h: np.ndarray, noise_var: float, constellation: Constellation
) -> DetectionResult:
    """LMMSE detector (unit-power symbols assumed)."""
    y3, h3, _ = _stack3(y, h)
    xhat = lmmse_stacked(y3, h3, noise_var)[0, :, 0]
    return DetectionResult(xhat=xhat, hard=hard_decision(xhat, constellation))


def ml_candidates(n_t: int, constellation: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """All M^N_t candidate index vectors in odometer order (first symbol most
    significant), plus the matching point matrix of shape (N_t, M^N_t)."""
    m = constellation.size
    if n_t * constellation.bits_per_symbol > ML_SEARCH_BITS_LIMIT:
        raise ValueError(
            f"ML search space 2^{n_t * constellation.bits_per_symbol} exceeds the "
            f"2^{ML_SEARCH_BITS_LIMIT} guard; use a smaller N_t or constellation"
        )
    k = m**n_t
    codes = np.arange(k)
    idx = np.empty((n_t, k), dtype=np.int64)
    for pos in range(n_t - 1, -1, -1):
        idx[pos] = codes % m
        codes //= m
    return idx, constellation.points[idx]


def ml_stacked(
    y: np.ndarray, h: np.ndarray, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive ML: argmin over all candidate vectors of ||y - Hx||^2.

    Ties break to the lexicographically smallest index vector (first hit of
    the odometer enumeration).  Returns (indices (B, N_t), xhat (B, N_t, 1)).
    """
    idx, pts = ml_candidates(h.shape[-1], constellation)
    resid = y - h @ pts  # (B, N_r, K)
    cost = np.sum(np.abs(resid) ** 2, axis=-2)  # (B, K)
    best = np.argmin(cost, axis=-1)
    hard = idx[:, best].T
    xhat = constellation.modulate(hard)[..., None]
    return hard, xhat


def detect_ml(y: np.ndarray, h: np.ndarray, constellation: Constellation) -> DetectionResult:
    """Exhaustive maximum-likelihood detector (small N_t only)."""
    y3, h3, _ = _stack3(y, h)
    hard, xhat = ml_stacked(y3, h3, constellation)
    return DetectionResult(xhat=xhat[0, :, 0], hard=hard[0])
