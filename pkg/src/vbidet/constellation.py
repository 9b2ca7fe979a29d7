"""Square-QAM constellations and their posterior-moment operators.

A :class:`Constellation` is an immutable set of complex points with a
uniform prior, zero mean and unit average power.  Every nonlinear
estimation (NLE) step in the package funnels through
:func:`posterior_moments` / :func:`posterior_moments_array`, which weight
the points with a circularly-symmetric Gaussian kernel
``exp(-|c - r|^2 / phi)``.

Gray labeling convention: per-axis reflected Gray code of the amplitude
level, I-axis bits first, so ``labels[k]`` is the bit pattern of point
``k``.  SER (not BER) is the primary metric, but the labels are fixed and
documented so bit-level metrics built on top are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "Constellation",
    "PosteriorMoments",
    "make_qam",
    "posterior_moments",
    "posterior_moments_array",
    "hard_decision",
]


@dataclass(frozen=True)
class Constellation:
    """Discrete symbol set with uniform prior and unit average power."""

    name: str
    points: np.ndarray
    labels: np.ndarray  # (M, bits_per_symbol) 0/1 ints, Gray-coded
    bits_per_symbol: int = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bits_per_symbol", int(np.log2(len(pts))))

    @property
    def size(self) -> int:
        return len(self.points)

    def modulate(self, indices: np.ndarray) -> np.ndarray:
        """Map symbol indices to constellation points."""
        return self.points[np.asarray(indices)]


@dataclass(frozen=True)
class PosteriorMoments:
    """First moment and raw second moment of a single-symbol posterior."""

    mean: complex
    second_moment: float

    @property
    def variance(self) -> float:
        return max(self.second_moment - abs(self.mean) ** 2, 0.0)


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def make_qam(m: int) -> Constellation:
    """Gray-labeled square QAM with zero mean and unit average power.

    Supported orders: 4 (QPSK), 16, 64.
    """
    if m not in (4, 16, 64):
        raise ValueError(f"unsupported QAM order {m}; expected 4, 16 or 64")
    k = int(np.sqrt(m))
    levels = np.arange(-(k - 1), k, 2, dtype=np.float64)  # -(k-1), ..., k-1
    scale = np.sqrt(2.0 * (k * k - 1) / 3.0)  # unit average power
    bits_per_axis = int(np.log2(k))

    points = np.empty(m, dtype=np.complex128)
    labels = np.empty((m, 2 * bits_per_axis), dtype=np.int64)
    for i in range(k):
        gi = _gray(i)
        for q in range(k):
            idx = i * k + q
            points[idx] = (levels[i] + 1j * levels[q]) / scale
            gq = _gray(q)
            for b in range(bits_per_axis):
                labels[idx, b] = (gi >> (bits_per_axis - 1 - b)) & 1
                labels[idx, bits_per_axis + b] = (gq >> (bits_per_axis - 1 - b)) & 1
    labels.setflags(write=False)
    return Constellation(name=f"{m}-QAM" if m != 4 else "QPSK", points=points, labels=labels)


def posterior_moments_array(
    r: np.ndarray, phi, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior mean and second moment at Gaussian width ``phi``.

    ``phi`` broadcasts against ``r`` and is clamped below at
    ``kernels.PHI_FLOOR``; the weights are normalized with a max-shift so
    extreme ``(r, phi)`` combinations stay finite.
    """
    return kernels.posterior_moments(r, phi, constellation.points)


def posterior_moments(r: complex, phi: float, constellation: Constellation) -> PosteriorMoments:
    """Single-symbol posterior moments; scalar convenience wrapper."""
    mean, m2 = posterior_moments_array(np.array([r]), np.array([float(phi)]), constellation)
    return PosteriorMoments(mean=complex(mean[0]), second_moment=float(m2[0]))


def hard_decision(xhat: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Per-element index of the nearest constellation point.

    Ties break to the lowest point index.  Accepts any array shape and
    returns int64 indices of the same shape.
    """
    return kernels.nearest_index(xhat, constellation.points)
