# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Philox4x32-10 counter streams and the half-line heat kernel."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, sqrt, M_PI
from libc.stdint cimport uint32_t, uint64_t

cnp.import_array()

cdef uint32_t PHILOX_M0 = 0xD2511F53
cdef uint32_t PHILOX_M1 = 0xCD9E8D57
cdef uint32_t PHILOX_W0 = 0x9E3779B9
cdef uint32_t PHILOX_W1 = 0xBB67AE85
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef uint64_t MASK32 = 0xFFFFFFFF


cdef inline void _philox4x32_10(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        p0 = <uint64_t>PHILOX_M0 * <uint64_t>c[0]
        p1 = <uint64_t>PHILOX_M1 * <uint64_t>c[2]
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c[0] = hi1 ^ c[1] ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0
        k0 = k0 + PHILOX_W0
        k1 = k1 + PHILOX_W1


def philox4x32(cnp.uint32_t[:, ::1] counters, uint32_t k0, uint32_t k1):
    """Apply Philox4x32-10 to each row of an (m, 4) counter array."""
    cdef Py_ssize_t m = counters.shape[0], i
    out = np.empty((m, 4), dtype=np.uint32)
    cdef cnp.uint32_t[:, ::1] o = out
    cdef uint32_t c[4]
    with nogil:
        for i in range(m):
            c[0] = counters[i, 0]
            c[1] = counters[i, 1]
            c[2] = counters[i, 2]
            c[3] = counters[i, 3]
            _philox4x32_10(c, k0, k1)
            o[i, 0] = c[0]
            o[i, 1] = c[1]
            o[i, 2] = c[2]
            o[i, 3] = c[3]
    return out


def philox_uniforms(uint64_t seed, uint64_t path_start, Py_ssize_t n_paths,
                    Py_ssize_t n_steps, Py_ssize_t n_blocks):
    """Uniforms in (0, 1) keyed on (seed, path, step, block).

    Returns an array of shape (n_paths, n_steps, 2 * n_blocks); each block
    consumes one Philox call and yields two 53-bit uniforms.
    """
    out = np.empty((n_paths, n_steps, 2 * n_blocks), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef uint32_t k0 = <uint32_t>(seed & MASK32)
    cdef uint32_t k1 = <uint32_t>(seed >> 32)
    cdef uint32_t c[4]
    cdef uint64_t path
    cdef Py_ssize_t p, s, b
    with nogil:
        for p in range(n_paths):
            path = path_start + <uint64_t>p
            for s in range(n_steps):
                for b in range(n_blocks):
                    c[0] = <uint32_t>b
                    c[1] = <uint32_t>s
                    c[2] = <uint32_t>(path & MASK32)
                    c[3] = <uint32_t>(path >> 32)
                    _philox4x32_10(c, k0, k1)
                    o[p, s, 2 * b] = (<double>((<uint64_t>(c[0] >> 5) << 26) | (c[1] >> 6)) + 0.5) * TWO_M53
                    o[p, s, 2 * b + 1] = (<double>((<uint64_t>(c[2] >> 5) << 26) | (c[3] >> 6)) + 0.5) * TWO_M53
    return out


cdef inline double _kernel(double x, double y, double scale, double inv4t, double invt) noexcept nogil:
    cdef double d = x - y
    cdef double g = d * d * inv4t
    cdef double q = x * y * invt
    # exp(-g) underflows to 0 past 746; expm1(-q) rounds to -1 past 40
    if g > 746.0:
        return 0.0
    if q > 40.0:
        return scale * exp(-g)
    return -scale * exp(-g) * expm1(-q)


def heat_kernel_matrix(double t, const double[::1] xi, const double[::1] eta):
    """Dense matrix k(t, xi[i], eta[j]) of the Dirichlet heat kernel on the half-line."""
    cdef Py_ssize_t n = xi.shape[0], m = eta.shape[0], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double scale = 1.0 / sqrt(4.0 * M_PI * t)
    cdef double inv4t = 1.0 / (4.0 * t)
    cdef double invt = 1.0 / t
    cdef bint same = n == m
    if same:
        for i in range(n):
            if xi[i] != eta[i]:
                same = False
                break
    with nogil:
        if same:
            # the kernel is symmetric: fill the upper triangle and mirror
            for i in range(n):
                for j in range(i, n):
                    o[i, j] = _kernel(xi[i], xi[j], scale, inv4t, invt)
                    o[j, i] = o[i, j]
        else:
            for i in range(n):
                for j in range(m):
                    o[i, j] = _kernel(xi[i], eta[j], scale, inv4t, invt)
    return out
