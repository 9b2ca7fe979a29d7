# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled NLE kernels: constellation posterior moments and hard decisions.

Numerically matched to the NumPy fallback in ``_moments_np.py``; keep the
two in lockstep when touching either.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def posterior_moments_flat(
    const double complex[::1] r,
    const double[::1] phi,
    const double complex[::1] points,
):
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t m = points.shape[0]
    mean_arr = np.empty(n, dtype=np.complex128)
    m2_arr = np.empty(n, dtype=np.float64)
    cdef double complex[::1] mean = mean_arr
    cdef double[::1] m2 = m2_arr

    cdef double[64] ex
    cdef double[64] pw
    cdef Py_ssize_t i, j
    cdef double complex d, num_mean
    cdef double mx, w, z, num_m2, inv_phi

    if m > 64:
        raise ValueError("constellations beyond 64 points are not supported")

    for j in range(m):
        pw[j] = points[j].real * points[j].real + points[j].imag * points[j].imag

    for i in range(n):
        inv_phi = 1.0 / phi[i]
        mx = -1e300
        for j in range(m):
            d = points[j] - r[i]
            ex[j] = -(d.real * d.real + d.imag * d.imag) * inv_phi
            if ex[j] > mx:
                mx = ex[j]
        z = 0.0
        num_mean = 0.0
        num_m2 = 0.0
        for j in range(m):
            w = exp(ex[j] - mx)
            z += w
            num_mean += w * points[j]
            num_m2 += w * pw[j]
        mean[i] = num_mean / z
        m2[i] = num_m2 / z
    return mean_arr, m2_arr


def nearest_index_flat(
    const double complex[::1] x,
    const double complex[::1] points,
):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = points.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t i, j, best
    cdef double complex d
    cdef double dist, bd

    for i in range(n):
        best = 0
        d = points[0] - x[i]
        bd = d.real * d.real + d.imag * d.imag
        for j in range(1, m):
            d = points[j] - x[i]
            dist = d.real * d.real + d.imag * d.imag
            if dist < bd:
                bd = dist
                best = j
        out[i] = best
    return out_arr
