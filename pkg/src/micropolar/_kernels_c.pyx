# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pointwise 3x3 kernels; same contract as ``_kernels_py``."""

import numpy as np
from libc.math cimport sqrt, cos, acos, M_PI


def matvec(const double[:, :, ::1] A, const double[:, ::1] v):
    cdef Py_ssize_t p, n = v.shape[1]
    out = np.empty((3, n))
    cdef double[:, ::1] o = out
    with nogil:
        for p in range(n):
            o[0, p] = A[0, 0, p] * v[0, p] + A[0, 1, p] * v[1, p] + A[0, 2, p] * v[2, p]
            o[1, p] = A[1, 0, p] * v[0, p] + A[1, 1, p] * v[1, p] + A[1, 2, p] * v[2, p]
            o[2, p] = A[2, 0, p] * v[0, p] + A[2, 1, p] * v[1, p] + A[2, 2, p] * v[2, p]
    return out


def matmat(const double[:, :, ::1] A, const double[:, :, ::1] B):
    cdef Py_ssize_t p, i, j, k, n = A.shape[2]
    cdef double s
    out = np.empty((3, 3, n))
    cdef double[:, :, ::1] o = out
    with nogil:
        for i in range(3):
            for k in range(3):
                for p in range(n):
                    o[i, k, p] = (A[i, 0, p] * B[0, k, p] + A[i, 1, p] * B[1, k, p]
                                  + A[i, 2, p] * B[2, k, p])
    return out


def cross(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t p, n = a.shape[1]
    out = np.empty((3, n))
    cdef double[:, ::1] o = out
    with nogil:
        for p in range(n):
            o[0, p] = a[1, p] * b[2, p] - a[2, p] * b[1, p]
            o[1, p] = a[2, p] * b[0, p] - a[0, p] * b[2, p]
            o[2, p] = a[0, p] * b[1, p] - a[1, p] * b[0, p]
    return out


def advect(const double[:, ::1] u, const double[:, :, ::1] grad):
    cdef Py_ssize_t c, p, nc = grad.shape[0], n = u.shape[1]
    out = np.empty((nc, n))
    cdef double[:, ::1] o = out
    with nogil:
        for c in range(nc):
            for p in range(n):
                o[c, p] = u[0, p] * grad[c, 0, p] + u[1, p] * grad[c, 1, p] + u[2, p] * grad[c, 2, p]
    return out


def commutator_ten(const double[:, ::1] w, const double[:, :, ::1] S):
    cdef Py_ssize_t p, i, j, n = w.shape[1]
    cdef double W[3][3]
    cdef double s
    out = np.empty((3, 3, n))
    cdef double[:, :, ::1] o = out
    with nogil:
        for p in range(n):
            W[0][0] = 0.0
            W[1][1] = 0.0
            W[2][2] = 0.0
            W[0][1] = -w[2, p]
            W[0][2] = w[1, p]
            W[1][0] = w[2, p]
            W[1][2] = -w[0, p]
            W[2][0] = -w[1, p]
            W[2][1] = w[0, p]
            for i in range(3):
                for j in range(3):
                    s = (W[i][0] * S[0, j, p] + W[i][1] * S[1, j, p] + W[i][2] * S[2, j, p]
                         - S[i, 0, p] * W[0][j] - S[i, 1, p] * W[1][j] - S[i, 2, p] * W[2][j])
                    o[i, j, p] = s
    return out


def sym_solve(const double[:, :, ::1] S, const double[:, ::1] b):
    cdef Py_ssize_t p, n = b.shape[1]
    cdef double s00, s01, s02, s11, s12, s22
    cdef double c00, c01, c02, c11, c12, c22, det
    out = np.empty((3, n))
    cdef double[:, ::1] x = out
    with nogil:
        for p in range(n):
            s00 = S[0, 0, p]
            s01 = S[0, 1, p]
            s02 = S[0, 2, p]
            s11 = S[1, 1, p]
            s12 = S[1, 2, p]
            s22 = S[2, 2, p]
            c00 = s11 * s22 - s12 * s12
            c01 = s02 * s12 - s01 * s22
            c02 = s01 * s12 - s02 * s11
            c11 = s00 * s22 - s02 * s02
            c12 = s01 * s02 - s00 * s12
            c22 = s00 * s11 - s01 * s01
            det = s00 * c00 + s01 * c01 + s02 * c02
            x[0, p] = (c00 * b[0, p] + c01 * b[1, p] + c02 * b[2, p]) / det
            x[1, p] = (c01 * b[0, p] + c11 * b[1, p] + c12 * b[2, p]) / det
            x[2, p] = (c02 * b[0, p] + c12 * b[1, p] + c22 * b[2, p]) / det
    return out


def sym_eigvalsh(const double[:, :, ::1] S):
    cdef Py_ssize_t p, n = S.shape[2]
    cdef double s00, s01, s02, s11, s12, s22, q, p1, p2, d0, d1, d2, pp
    cdef double b00, b11, b22, b01, b02, b12, detb, r, phi, hi, lo
    out = np.empty((3, n))
    cdef double[:, ::1] e = out
    with nogil:
        for p in range(n):
            s00 = S[0, 0, p]
            s01 = S[0, 1, p]
            s02 = S[0, 2, p]
            s11 = S[1, 1, p]
            s12 = S[1, 2, p]
            s22 = S[2, 2, p]
            q = (s00 + s11 + s22) / 3.0
            p1 = s01 * s01 + s02 * s02 + s12 * s12
            d0 = s00 - q
            d1 = s11 - q
            d2 = s22 - q
            p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1
            pp = sqrt(p2 / 6.0)
            if pp == 0.0:
                e[0, p] = q
                e[1, p] = q
                e[2, p] = q
                continue
            b00 = d0 / pp
            b11 = d1 / pp
            b22 = d2 / pp
            b01 = s01 / pp
            b02 = s02 / pp
            b12 = s12 / pp
            detb = (b00 * (b11 * b22 - b12 * b12)
                    - b01 * (b01 * b22 - b12 * b02)
                    + b02 * (b01 * b12 - b11 * b02))
            r = 0.5 * detb
            if r > 1.0:
                r = 1.0
            elif r < -1.0:
                r = -1.0
            phi = acos(r) / 3.0
            hi = q + 2.0 * pp * cos(phi)
            lo = q + 2.0 * pp * cos(phi + 2.0 * M_PI / 3.0)
            e[0, p] = lo
            e[1, p] = 3.0 * q - hi - lo
            e[2, p] = hi
    return out
