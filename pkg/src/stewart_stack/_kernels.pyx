# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched planar forward kinematics and leg constraints.

Mirrors ``_kernels_py`` exactly in signature and layout.
"""

import numpy as np
from libc.math cimport cos, sin, sqrt

BACKEND = "cython"


def forward_batch(x):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t N = xv.shape[0], n = xv.shape[1], i, k
    out = np.empty((N, 3), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double rho, z, total, c, s
    with nogil:
        for i in range(N):
            rho = 0.0
            z = 0.0
            total = 0.0
            for k in range(n):
                c = cos(total)
                s = sin(total)
                rho = rho + (c * xv[i, k, 0] - s * xv[i, k, 1])
                z = z + (s * xv[i, k, 0] + c * xv[i, k, 1])
                total = total + xv[i, k, 2]
            ov[i, 0] = rho
            ov[i, 1] = z
            ov[i, 2] = total
    return out


def leg_constraints(x, double phi, top, bottom, double l_min, double l_max, double sin_tmin):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] tv = np.ascontiguousarray(top, dtype=np.float64)
    cdef const double[:, ::1] bv = np.ascontiguousarray(bottom, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, k, p, q
    values = np.empty((n, 6, 4), dtype=np.float64)
    grads = np.empty((n, 6, 4, 3), dtype=np.float64)
    cdef double[:, :, ::1] vv = values
    cdef double[:, :, :, ::1] gv = grads

    cdef double cphi = cos(phi), sphi = sin(phi)
    cdef double a[3]
    cdef double kx[3][3]
    cdef double rot[3][3]
    cdef double drot[3][3]
    cdef double leg[3]
    cdef double dleg[3][3]
    cdef double nt[3]
    cdef double dnt[3]
    cdef double c, s, len_sq, norm, mb, mt, lnt, lvdnt
    cdef double dlen[3]
    cdef double dnorm[3]
    a[0] = sphi
    a[1] = -cphi
    a[2] = 0.0
    kx[0][0] = 0.0; kx[0][1] = 0.0; kx[0][2] = a[1]
    kx[1][0] = 0.0; kx[1][1] = 0.0; kx[1][2] = -a[0]
    kx[2][0] = -a[1]; kx[2][1] = a[0]; kx[2][2] = 0.0

    with nogil:
        for i in range(n):
            c = cos(xv[i, 2])
            s = sin(xv[i, 2])
            for p in range(3):
                for q in range(3):
                    rot[p][q] = s * kx[p][q] + (1.0 - c) * a[p] * a[q]
                    drot[p][q] = c * kx[p][q] + s * a[p] * a[q]
                rot[p][p] += c
                drot[p][p] -= s
            for p in range(3):
                nt[p] = rot[p][2]
                dnt[p] = drot[p][2]
            for k in range(6):
                for p in range(3):
                    leg[p] = rot[p][0] * tv[k, 0] + rot[p][1] * tv[k, 1] + rot[p][2] * tv[k, 2] - bv[k, p]
                    # columns: d/drho, d/dz, d/dtheta
                    dleg[p][2] = drot[p][0] * tv[k, 0] + drot[p][1] * tv[k, 1] + drot[p][2] * tv[k, 2]
                leg[0] += xv[i, 0] * cphi
                leg[1] += xv[i, 0] * sphi
                leg[2] += xv[i, 1]
                dleg[0][0] = cphi
                dleg[1][0] = sphi
                dleg[2][0] = 0.0
                dleg[0][1] = 0.0
                dleg[1][1] = 0.0
                dleg[2][1] = 1.0

                len_sq = leg[0] * leg[0] + leg[1] * leg[1] + leg[2] * leg[2]
                norm = sqrt(len_sq)
                for q in range(3):
                    dlen[q] = 2.0 * (leg[0] * dleg[0][q] + leg[1] * dleg[1][q] + leg[2] * dleg[2][q])
                    dnorm[q] = 0.5 * dlen[q] / norm if norm > 0.0 else 0.0

                vv[i, k, 0] = len_sq - l_min * l_min
                vv[i, k, 1] = l_max * l_max - len_sq
                for q in range(3):
                    gv[i, k, 0, q] = dlen[q]
                    gv[i, k, 1, q] = -dlen[q]

                if norm > 0.0:
                    mb = leg[2] - norm * sin_tmin
                    lnt = leg[0] * nt[0] + leg[1] * nt[1] + leg[2] * nt[2]
                    mt = lnt - norm * sin_tmin
                    vv[i, k, 2] = mb
                    vv[i, k, 3] = mt
                    for q in range(3):
                        gv[i, k, 2, q] = dleg[2][q] - dnorm[q] * sin_tmin
                        gv[i, k, 3, q] = (dleg[0][q] * nt[0] + dleg[1][q] * nt[1] + dleg[2][q] * nt[2]) - dnorm[q] * sin_tmin
                    lvdnt = leg[0] * dnt[0] + leg[1] * dnt[1] + leg[2] * dnt[2]
                    gv[i, k, 3, 2] += lvdnt
                else:
                    for p in range(2, 4):
                        vv[i, k, p] = 0.0
                        for q in range(3):
                            gv[i, k, p, q] = 0.0
    return values, grads
