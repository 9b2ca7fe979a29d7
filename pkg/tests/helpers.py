"""Independent oracles shared by the test modules.

Everything here is deliberately written from first principles (direct
sums, enumeration, finite differences) rather than reusing the library
paths it checks.
"""

import numpy as np


def brute_force_moments(r, phi, points):
    """Posterior moments by direct 4..64-point enumeration.

    Max-shifted so extreme (r, phi) stay finite, but otherwise a literal
    sum over the constellation.
    """
    ex = np.array([-abs(c - r) ** 2 / phi for c in points])
    ex -= ex.max()
    w = np.exp(ex)
    w = w / w.sum()
    mean = sum(wj * cj for wj, cj in zip(w, points))
    m2 = sum(wj * abs(cj) ** 2 for wj, cj in zip(w, points))
    return mean, m2, w


def qpsk_tanh_mean(r, phi):
    """Closed-form QPSK posterior mean: per-axis scaled tanh."""
    a = 1.0 / np.sqrt(2.0)
    return a * np.tanh(2.0 * a * np.real(r) / phi) + 1j * a * np.tanh(
        2.0 * a * np.imag(r) / phi
    )


def central_diff_gradient(f, vec, rel_step=1e-4):
    """Central finite differences with step 1e-4 * (1 + |p|) per coordinate."""
    g = np.zeros_like(vec)
    for i in range(vec.size):
        h = rel_step * (1.0 + abs(vec[i]))
        vp = vec.copy()
        vm = vec.copy()
        vp[i] += h
        vm[i] -= h
        g[i] = (f(vp) - f(vm)) / (2.0 * h)
    return g


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2.0)


def ser_sigma(ser, symbols):
    """Binomial standard error of an SER estimate."""
    return np.sqrt(max(ser * (1.0 - ser), 1e-12) / symbols)
