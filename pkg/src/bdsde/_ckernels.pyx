# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counter-based random kernels; same streams as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, log, sqrt
from libc.stdint cimport uint64_t

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


def normal_block(uint64_t key, Py_ssize_t rows, Py_ssize_t cols, Py_ssize_t row_offset=0):
    out = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c
    cdef uint64_t s, j, z1, z2
    cdef double u1, u2, rad, theta
    with nogil:
        for r in range(rows):
            s = mix64(key + GAMMA * <uint64_t>(row_offset + r + 1))
            c = 0
            while c < cols:
                j = <uint64_t>(c >> 1)
                z1 = mix64(s + GAMMA * (2 * j + 1))
                z2 = mix64(s + GAMMA * (2 * j + 2))
                u1 = <double>((z1 >> 11) + 1) * INV_2_53
                u2 = <double>(z2 >> 11) * INV_2_53
                rad = sqrt(-2.0 * log(u1))
                theta = TWO_PI * u2
                o[r, c] = rad * cos(theta)
                if c + 1 < cols:
                    o[r, c + 1] = rad * sin(theta)
                c += 2
    return out


def uniform_block(uint64_t key, Py_ssize_t rows, Py_ssize_t cols, Py_ssize_t row_offset=0):
    out = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c
    cdef uint64_t s
    with nogil:
        for r in range(rows):
            s = mix64(key + GAMMA * <uint64_t>(row_offset + r + 1))
            for c in range(cols):
                o[r, c] = <double>(mix64(s + GAMMA * <uint64_t>(c + 1)) >> 11) * INV_2_53
    return out
