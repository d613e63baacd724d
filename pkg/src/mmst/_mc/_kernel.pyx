# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo block: draw, correlate, and aggregate in one pass.

Consumes a numpy BitGenerator through the standard capsule interface and
draws with the same ziggurat normal generator numpy uses, so output is
bit-identical to the pure-numpy fallback for the same generator state.
"""

import numpy as np

cimport numpy as np
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

np.import_array()

AGG_MAX = 0
AGG_WEIGHTED_QUADRATIC_MEAN = 1


def block_aggregates(
    bit_generator,
    double[::1] mu,
    double[:, ::1] L,
    int aggregator,
    double[::1] weights,
    Py_ssize_t n,
):
    cdef bitgen_t *rng
    cdef Py_ssize_t m = mu.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc, best, t

    if L.shape[0] != m or L.shape[1] != m:
        raise ValueError("L must be m x m")
    if aggregator == 1 and weights.shape[0] != m:
        raise ValueError("weights must have length m")
    if aggregator not in (0, 1):
        raise ValueError(f"unknown aggregator code {aggregator}")

    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    out_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(m, dtype=np.float64)
    x_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] z = z_arr
    cdef double[::1] x = x_arr

    with bit_generator.lock, nogil:
        for i in range(n):
            for k in range(m):
                z[k] = random_standard_normal(rng)
            for j in range(m):
                acc = mu[j]
                for k in range(m):
                    acc += L[j, k] * z[k]
                x[j] = acc
            if aggregator == 0:
                best = x[0]
                for j in range(1, m):
                    if x[j] > best:
                        best = x[j]
                out[i] = best
            else:
                acc = 0.0
                for j in range(m):
                    t = x[j] * x[j]
                    acc += weights[j] * t
                out[i] = sqrt(acc)
    return out_arr
