# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels; signatures mirror gsplit._kernels_py.

Per-element work lives in ``nogil`` helpers so that stack scratch arrays are
private to each OpenMP thread.
"""
import os

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport erfc, exp, sqrt, fabs

cnp.import_array()

BACKEND = "cython"

cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double INV_SQRT2 = 0.7071067811865476


cdef int _threads():
    try:
        return max(1, int(os.environ.get("GSPLIT_THREADS", "1")))
    except ValueError:
        return 1


cdef inline void _aux(const double[:, ::1] mu, const double[:, :, ::1] cov,
                      const double[:, ::1] n, const double[::1] off, double eps,
                      Py_ssize_t i, double* L, double* out) noexcept nogil:
    # out = (c_l, c_r, D, tau, d0)
    cdef Py_ssize_t a, b
    cdef double tau2 = 0.0, d0 = off[i], z
    for a in range(3):
        L[a] = 0.0
        for b in range(3):
            L[a] += cov[i, a, b] * n[i, b]
        tau2 += n[i, a] * L[a]
        d0 += n[i, a] * mu[i, a]
    out[3] = sqrt(tau2)
    z = d0 / out[3] * INV_SQRT2
    out[0] = 0.5 * (erfc(z) + eps)
    out[1] = 0.5 * (erfc(-z) + eps)
    out[2] = INV_SQRT_2PI * (exp(-z * z) + eps)
    out[4] = d0


cdef inline double _threshold_one(const double[:, ::1] rotations, const double[:, ::1] scales,
                                  const double[:, ::1] normals, Py_ssize_t i) noexcept nogil:
    cdef double w = rotations[i, 0], x = rotations[i, 1], y = rotations[i, 2], z = rotations[i, 3]
    cdef double nrm = sqrt(w * w + x * x + y * y + z * z)
    cdef double R[9]
    cdef double p, best = 0.0
    cdef Py_ssize_t a
    w = w / nrm; x = x / nrm; y = y / nrm; z = z / nrm
    R[0] = 1 - 2 * (y * y + z * z); R[1] = 2 * (x * y - w * z); R[2] = 2 * (x * z + w * y)
    R[3] = 2 * (x * y + w * z); R[4] = 1 - 2 * (x * x + z * z); R[5] = 2 * (y * z - w * x)
    R[6] = 2 * (x * z - w * y); R[7] = 2 * (y * z + w * x); R[8] = 1 - 2 * (x * x + y * y)
    for a in range(3):
        p = fabs(R[a] * normals[i, 0] + R[3 + a] * normals[i, 1] + R[6 + a] * normals[i, 2]) * scales[i, a]
        if p > best:
            best = p
    return 3.0 * best


cdef inline void _aux_one(const double[:, ::1] mu, const double[:, :, ::1] cov,
                          const double[:, ::1] n, const double[::1] off, double eps, Py_ssize_t i,
                          double[::1] c_l, double[::1] c_r, double[::1] D, double[:, ::1] L0,
                          double[::1] tau, double[::1] d0) noexcept nogil:
    cdef double L[3]
    cdef double o[5]
    cdef Py_ssize_t a
    _aux(mu, cov, n, off, eps, i, L, o)
    c_l[i] = o[0]; c_r[i] = o[1]; D[i] = o[2]; tau[i] = o[3]; d0[i] = o[4]
    for a in range(3):
        L0[i, a] = L[a]


cdef inline void _split_one(const double[:, ::1] mu, const double[:, :, ::1] cov, const double[::1] alpha,
                            const double[:, ::1] n, const double[::1] off, double eps, Py_ssize_t i,
                            double[::1] al, double[:, ::1] ml, double[:, :, ::1] cl,
                            double[::1] ar, double[:, ::1] mr, double[:, :, ::1] cr) noexcept nogil:
    cdef double L[3]
    cdef double o[5]
    cdef double s, kl, kr, ll
    cdef Py_ssize_t a, b
    _aux(mu, cov, n, off, eps, i, L, o)
    al[i] = alpha[i] * o[0]
    ar[i] = alpha[i] * o[1]
    s = o[2] / o[3]
    kl = o[4] * o[2] / (o[3] * o[0]) - (o[2] / o[0]) * (o[2] / o[0])
    kr = o[4] * o[2] / (o[3] * o[1]) + (o[2] / o[1]) * (o[2] / o[1])
    for a in range(3):
        ml[i, a] = mu[i, a] - L[a] * s / o[0]
        mr[i, a] = mu[i, a] + L[a] * s / o[1]
        for b in range(3):
            ll = L[a] * L[b] / (o[3] * o[3])
            cl[i, a, b] = cov[i, a, b] + ll * kl
            cr[i, a, b] = cov[i, a, b] - ll * kr


cdef inline void _halfspace_one(const double[:, ::1] mu, const double[:, :, ::1] cov, const double[::1] alpha,
                                const double[:, ::1] n, const double[::1] off, Py_ssize_t i,
                                double[::1] mass, double[:, ::1] first, double[:, :, ::1] second) noexcept nogil:
    cdef double L[3]
    cdef double o[5]
    cdef double s, t3
    cdef Py_ssize_t a, b
    _aux(mu, cov, n, off, 0.0, i, L, o)
    mass[i] = alpha[i] * o[0]
    s = o[2] / o[3]
    t3 = o[4] * o[2] / (o[3] * o[3] * o[3])
    for a in range(3):
        first[i, a] = alpha[i] * (o[0] * mu[i, a] - L[a] * s)
        for b in range(3):
            second[i, a, b] = alpha[i] * (
                o[0] * (cov[i, a, b] + mu[i, a] * mu[i, b])
                + L[a] * L[b] * t3
                - (mu[i, a] * L[b] + L[a] * mu[i, b]) * s
            )


cdef inline double _mass_one(const double[:, ::1] mu, const double[:, :, ::1] cov, const double[::1] alpha,
                             const double[:, ::1] n, const double[::1] off, Py_ssize_t i) noexcept nogil:
    cdef double L[3]
    cdef double o[5]
    _aux(mu, cov, n, off, 0.0, i, L, o)
    return alpha[i] * o[0]


cdef inline void _merge_one(const double[::1] alpha_l, const double[:, ::1] mu_l, const double[:, :, ::1] cov_l,
                            const double[::1] alpha_r, const double[:, ::1] mu_r, const double[:, :, ::1] cov_r,
                            Py_ssize_t i, double[::1] a0, double[:, ::1] m0, double[:, :, ::1] c0) noexcept nogil:
    cdef double dl[3]
    cdef double dr[3]
    cdef double wl, wr
    cdef Py_ssize_t a, b
    a0[i] = alpha_l[i] + alpha_r[i]
    wl = alpha_l[i] / a0[i]
    wr = alpha_r[i] / a0[i]
    for a in range(3):
        m0[i, a] = wl * mu_l[i, a] + wr * mu_r[i, a]
        dl[a] = mu_l[i, a] - m0[i, a]
        dr[a] = mu_r[i, a] - m0[i, a]
    for a in range(3):
        for b in range(3):
            c0[i, a, b] = (wl * (cov_l[i, a, b] + dl[a] * dl[b])
                           + wr * (cov_r[i, a, b] + dr[a] * dr[b]))


def split_threshold(double[:, ::1] rotations, double[:, ::1] scales, double[:, ::1] normals):
    cdef int nt = _threads()
    cdef Py_ssize_t N = rotations.shape[0], i
    cdef double[::1] eta = np.empty(N)
    for i in prange(N, nogil=True, num_threads=nt):
        eta[i] = _threshold_one(rotations, scales, normals, i)
    return np.asarray(eta)


def split_aux(double[:, ::1] mu, double[:, :, ::1] cov, double[:, ::1] normals,
              double[::1] offsets, double eps):
    cdef int nt = _threads()
    cdef Py_ssize_t N = mu.shape[0], i
    cdef double[::1] c_l = np.empty(N), c_r = np.empty(N), D = np.empty(N)
    cdef double[::1] tau = np.empty(N), d0 = np.empty(N)
    cdef double[:, ::1] L0 = np.empty((N, 3))
    for i in prange(N, nogil=True, num_threads=nt):
        _aux_one(mu, cov, normals, offsets, eps, i, c_l, c_r, D, L0, tau, d0)
    return (np.asarray(c_l), np.asarray(c_r), np.asarray(D), np.asarray(L0),
            np.asarray(tau), np.asarray(d0))


def split_moments(double[:, ::1] mu, double[:, :, ::1] cov, double[::1] alpha,
                  double[:, ::1] normals, double[::1] offsets, double eps):
    cdef int nt = _threads()
    cdef Py_ssize_t N = mu.shape[0], i
    cdef double[::1] al = np.empty(N), ar = np.empty(N)
    cdef double[:, ::1] ml = np.empty((N, 3)), mr = np.empty((N, 3))
    cdef double[:, :, ::1] cl = np.empty((N, 3, 3)), cr = np.empty((N, 3, 3))
    for i in prange(N, nogil=True, num_threads=nt):
        _split_one(mu, cov, alpha, normals, offsets, eps, i, al, ml, cl, ar, mr, cr)
    return (np.asarray(al), np.asarray(ml), np.asarray(cl),
            np.asarray(ar), np.asarray(mr), np.asarray(cr))


def halfspace_moments(double[:, ::1] mu, double[:, :, ::1] cov, double[::1] alpha,
                      double[:, ::1] normals, double[::1] offsets):
    cdef int nt = _threads()
    cdef Py_ssize_t N = mu.shape[0], i
    cdef double[::1] mass = np.empty(N)
    cdef double[:, ::1] first = np.empty((N, 3))
    cdef double[:, :, ::1] second = np.empty((N, 3, 3))
    for i in prange(N, nogil=True, num_threads=nt):
        _halfspace_one(mu, cov, alpha, normals, offsets, i, mass, first, second)
    return np.asarray(mass), np.asarray(first), np.asarray(second)


def halfspace_mass(double[:, ::1] mu, double[:, :, ::1] cov, double[::1] alpha,
                   double[:, ::1] normals, double[::1] offsets):
    cdef int nt = _threads()
    cdef Py_ssize_t N = mu.shape[0], i
    cdef double[::1] mass = np.empty(N)
    for i in prange(N, nogil=True, num_threads=nt):
        mass[i] = _mass_one(mu, cov, alpha, normals, offsets, i)
    return np.asarray(mass)


def merge_moments(double[::1] alpha_l, double[:, ::1] mu_l, double[:, :, ::1] cov_l,
                  double[::1] alpha_r, double[:, ::1] mu_r, double[:, :, ::1] cov_r):
    cdef int nt = _threads()
    cdef Py_ssize_t N = mu_l.shape[0], i
    cdef double[::1] a0 = np.empty(N)
    cdef double[:, ::1] m0 = np.empty((N, 3))
    cdef double[:, :, ::1] c0 = np.empty((N, 3, 3))
    for i in prange(N, nogil=True, num_threads=nt):
        _merge_one(alpha_l, mu_l, cov_l, alpha_r, mu_r, cov_r, i, a0, m0, c0)
    return np.asarray(a0), np.asarray(m0), np.asarray(c0)
