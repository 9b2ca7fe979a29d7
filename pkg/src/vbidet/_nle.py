"""Shared nonlinear-estimation step used by every detector forward pass.

On plain arrays this routes to the fast kernel; on tape nodes it composes
autodiff primitives so gradients flow through the softmax exactly.  Both
paths clamp the Gaussian width at ``kernels.PHI_FLOOR`` and stabilize the
weights with a max-shift.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import kernels


def nle_moments(r, phi, points: np.ndarray):
    """Posterior mean and second moment of each element of ``r``.

    ``r`` is complex of shape (..., 1) or any broadcast-friendly shape;
    ``phi`` broadcasts against it.  Returns (mean, second_moment) with the
    shape of ``r``.
    """
    if not (isinstance(r, ad.Node) or isinstance(phi, ad.Node)):
        return kernels.posterior_moments(r, phi, points)

    pts = points.reshape((1,) * (ad.value_of(r).ndim - 1) + (-1,))
    phi_c = ad.maximum(phi, kernels.PHI_FLOOR)
    ex = -ad.absq(pts - r) / phi_c
    # Constant max-shift: cancels exactly in the ratio, so detaching is exact.
    shift = np.max(ad.value_of(ex), axis=-1, keepdims=True)
    w = ad.exp(ex - shift)
    z = ad.asum(w, axis=-1, keepdims=True)
    mean = ad.asum(w * pts, axis=-1, keepdims=True) / z
    m2 = ad.asum(w * np.abs(pts) ** 2, axis=-1, keepdims=True) / z
    return mean, m2


def nle_moments_anisotropic(r, phi_re, phi_im, points: np.ndarray):
    """Axis-wise Gaussian variant: weights exp(-d_re^2/phi_re - d_im^2/phi_im).

    Needed by the full-matrix MMNet, whose per-symbol variance estimates are
    learned separately for the real and imaginary axes.  Composition-only
    (no compiled kernel): this path is online-training territory.
    """
    nd = ad.value_of(r).ndim
    pts = points.reshape((1,) * (nd - 1) + (-1,))
    pre = ad.maximum(phi_re, kernels.PHI_FLOOR)
    pim = ad.maximum(phi_im, kernels.PHI_FLOOR)
    d = pts - r
    ex = -(ad.absq(ad.real(d)) / pre) - (ad.absq(ad.imag(d)) / pim)
    shift = np.max(ad.value_of(ex), axis=-1, keepdims=True)
    w = ad.exp(ex - shift)
    z = ad.asum(w, axis=-1, keepdims=True)
    mean = ad.asum(w * pts, axis=-1, keepdims=True) / z
    m2 = ad.asum(w * np.abs(pts) ** 2, axis=-1, keepdims=True) / z
    return mean, m2
