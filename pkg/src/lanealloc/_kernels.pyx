# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``; same signatures,
same results up to libm rounding."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log1p

cnp.import_array()


cdef inline double _response(double W, double L, double *x_out, double *e_out) noexcept nogil:
    cdef double wm1 = W - 1.0
    if L <= 0.0:
        x_out[0] = wm1
        e_out[0] = 0.0
        return log1p(wm1)
    cdef double b = 2.0 + W * (L - 1.0)
    cdef double bs = b + sqrt(b * b + 4.0 * wm1)
    cdef double e = 2.0 * wm1 / bs
    cdef double x = wm1 * (bs - 2.0) / bs
    cdef double u = 1.0 + e
    x_out[0] = x
    e_out[0] = e
    return log1p(x / u) + L * (log1p(e) - e / u)


def link_response(W, L):
    cdef const double[::1] wv = np.ascontiguousarray(W, dtype=np.float64).ravel()
    cdef const double[::1] lv = np.array(
        np.broadcast_to(np.asarray(L, dtype=np.float64), np.shape(W)), dtype=np.float64).ravel()
    cdef Py_ssize_t i, n = wv.shape[0]
    cdef cnp.ndarray[double, ndim=1] xs = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] es = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] gs = np.zeros(n)
    cdef double x, e
    cdef double[::1] xv = xs, ev = es, gv = gs
    with nogil:
        for i in range(n):
            if wv[i] > 1.0:
                gv[i] = _response(wv[i], lv[i], &x, &e)
                xv[i] = x
                ev[i] = e
    shape = np.shape(W)
    return xs.reshape(shape), es.reshape(shape), gs.reshape(shape)


def dual_sweep(c, V, window, gam, L):
    cdef const double[:, :, :, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const cnp.int64_t[::1] wv = np.ascontiguousarray(window, dtype=np.int64)
    cdef const double[:, ::1] gv = np.ascontiguousarray(gam, dtype=np.float64)
    cdef const cnp.int64_t[::1] Lv = np.ascontiguousarray(L, dtype=np.int64)
    cdef Py_ssize_t M = cv.shape[0], J = cv.shape[1], N = cv.shape[2], K = cv.shape[3]
    cdef Py_ssize_t nw = Vv.shape[1]

    assign_a = np.full((M, J, N), -1, dtype=np.int64)
    power_a = np.zeros((M, J, N))
    rate_a = np.zeros((M, J, N))
    e_a = np.zeros((M, J, N))
    block_a = np.zeros((M, J))
    user_a = np.zeros((K, nw))
    cdef cnp.int64_t[:, :, ::1] assign = assign_a
    cdef double[:, :, ::1] power = power_a, rate = rate_a, ev = e_a
    cdef double[:, ::1] block = block_a, user = user_a

    cdef Py_ssize_t m, j, n, k, w, bk
    cdef double a, Lj, Vk, cc, W, P, g, U, best, bp, bg, be, x, e, bsum
    cdef double u_sum = 0.0
    with nogil:
        for m in range(M):
            w = wv[m]
            for j in range(J):
                a = 1.0 + gv[m, j]
                Lj = <double> Lv[j]
                bsum = 0.0
                for n in range(N):
                    best = 0.0
                    bk = -1
                    bp = 0.0
                    bg = 0.0
                    be = 0.0
                    for k in range(K):
                        Vk = Vv[k, w]
                        if Vk <= 0.0:
                            continue
                        cc = cv[m, j, n, k]
                        W = cc * (Vk / a)
                        if W <= 1.0:
                            continue
                        g = _response(W, Lj, &x, &e)
                        P = x / cc
                        U = a * P - Vk * g
                        if U < best:
                            best = U
                            bk = k
                            bp = P
                            bg = g
                            be = e
                    if bk >= 0:
                        assign[m, j, n] = bk
                        power[m, j, n] = bp
                        rate[m, j, n] = bg
                        ev[m, j, n] = be
                        bsum = bsum + bp
                        user[bk, w] += bg
                        u_sum = u_sum + best
                block[m, j] = bsum
    return assign_a, power_a, rate_a, e_a, block_a, user_a, u_sum
