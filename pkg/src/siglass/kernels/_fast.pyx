# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled line-sweep kernels.

Single fused pass per tensor: piece selection, interval tightening and
status flags without intermediate arrays.  Must stay bit-identical to
siglass.kernels._pure; every root uses the same IEEE expression and the
same strict/inclusive comparisons.
"""

from libc.math cimport INFINITY


def two_piece_update(double[::1] bias, double[::1] coeff, double z,
                     double neg_slope, double lo, double hi,
                     double[::1] out_bias, double[::1] out_coeff):
    cdef Py_ssize_t i, n = bias.shape[0]
    cdef double a, b, phi, root
    cdef bint pos
    for i in range(n):
        a = bias[i]
        b = coeff[i]
        phi = a + b * z
        pos = phi > 0.0
        if b != 0.0:
            root = -a / b
            if pos == (b > 0.0):
                if root > lo:
                    lo = root
            else:
                if root < hi:
                    hi = root
        if pos:
            out_bias[i] = a
            out_coeff[i] = b
        else:
            out_bias[i] = neg_slope * a
            out_coeff[i] = neg_slope * b
    return lo, hi


def threshold_update(double[::1] bias, double[::1] coeff, excluded, double z,
                     double tau, double lo, double hi,
                     unsigned char[::1] flags_out):
    cdef Py_ssize_t i, n = bias.shape[0]
    cdef double a, b, root
    cdef bint inside
    cdef unsigned char[::1] excl
    cdef bint has_excl = excluded is not None
    if has_excl:
        excl = excluded
    for i in range(n):
        if has_excl and excl[i]:
            flags_out[i] = 0
            continue
        a = bias[i]
        b = coeff[i]
        inside = a + b * z >= tau
        flags_out[i] = 1 if inside else 0
        if b != 0.0:
            root = (tau - a) / b
            if inside == (b > 0.0):
                if root > lo:
                    lo = root
            else:
                if root < hi:
                    hi = root
    return lo, hi


def dominance_update(double[::1] bias, double[::1] coeff, excluded,
                     Py_ssize_t k, double sense, double z,
                     double lo, double hi):
    cdef Py_ssize_t i, n = bias.shape[0]
    cdef double da, db, root
    cdef unsigned char[::1] excl
    cdef bint has_excl = excluded is not None
    if has_excl:
        excl = excluded
    for i in range(n):
        if i == k or (has_excl and excl[i]):
            continue
        da = sense * (bias[k] - bias[i])
        db = sense * (coeff[k] - coeff[i])
        if db > 0.0:
            root = -da / db
            if root > lo:
                lo = root
        elif db < 0.0:
            root = -da / db
            if root < hi:
                hi = root
    return lo, hi


def maxpool_update(double[:, ::1] win_bias, double[:, ::1] win_coeff, valid,
                   double z, double lo, double hi,
                   double[::1] out_bias, double[::1] out_coeff):
    cdef Py_ssize_t r, j, k_star, rows = win_bias.shape[0], cols = win_bias.shape[1]
    cdef double best, v, da, db, root, ak, bk
    cdef unsigned char[:, ::1] vmask
    cdef bint has_mask = valid is not None
    if has_mask:
        vmask = valid
    for r in range(rows):
        k_star = -1
        best = -INFINITY
        for j in range(cols):
            if has_mask and not vmask[r, j]:
                continue
            v = win_bias[r, j] + win_coeff[r, j] * z
            if k_star < 0 or v > best:
                best = v
                k_star = j
        ak = win_bias[r, k_star]
        bk = win_coeff[r, k_star]
        out_bias[r] = ak
        out_coeff[r] = bk
        for j in range(cols):
            if j == k_star or (has_mask and not vmask[r, j]):
                continue
            da = ak - win_bias[r, j]
            db = bk - win_coeff[r, j]
            if db > 0.0:
                root = -da / db
                if root > lo:
                    lo = root
            elif db < 0.0:
                root = -da / db
                if root < hi:
                    hi = root
    return lo, hi
