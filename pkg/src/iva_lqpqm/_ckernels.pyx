# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cbrt, cos, acos, fabs, INFINITY, NAN

cnp.import_array()

cdef enum:
    STATUS_OK = 0
    STATUS_MAX_ITER = 1
    STATUS_EMPTY_SUPPORT = 2

cdef double DBL_EPS = 2.220446049250313e-16


cdef inline double _cubic_poly(double x, double b, double c, double d) nogil:
    return ((x - b) * x + c) * x - d


cdef double _cubic_largest_root(double b, double c, double d) nogil:
    cdef double shift = b / 3.0
    cdef double p = c - b * b / 3.0
    cdef double q = -2.0 * b * b * b / 27.0 + b * c / 3.0 - d
    cdef double disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0)
    cdef double r, arg, sq, x, P, dP, x_new, P_new
    cdef double scale = fabs(q / 2.0) * fabs(q / 2.0) + fabs(p / 3.0) * fabs(p / 3.0) * fabs(p / 3.0)
    cdef int i
    # near-zero discriminant is treated as a double root (trigonometric branch)
    if disc > 1e-10 * scale:
        sq = sqrt(disc)
        x = cbrt(-q / 2.0 + sq) + cbrt(-q / 2.0 - sq) + shift
    else:
        r = sqrt(-p / 3.0) if p < 0 else 0.0
        if r > 0:
            arg = -q / (2.0 * r * r * r)
            if arg > 1.0:
                arg = 1.0
            elif arg < -1.0:
                arg = -1.0
            x = 2.0 * r * cos(acos(arg) / 3.0) + shift
        else:
            x = shift
    for i in range(3):
        P = _cubic_poly(x, b, c, d)
        dP = (3.0 * x - 2.0 * b) * x + c
        if dP > 0:
            x_new = x - P / dP
            P_new = _cubic_poly(x_new, b, c, d)
            if fabs(P_new) < fabs(P):
                x = x_new
    return x


def cubic_largest_root(b, c, d):
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    b, c, d = np.broadcast_arrays(b, c, d)
    shape = b.shape
    cdef double[::1] bb = np.ascontiguousarray(b).ravel()
    cdef double[::1] cc = np.ascontiguousarray(c).ravel()
    cdef double[::1] dd = np.ascontiguousarray(d).ravel()
    out = np.empty(bb.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(bb.shape[0]):
        o[i] = _cubic_largest_root(bb[i], cc[i], dd[i])
    return out.reshape(shape)


cdef int _solve_one(const double[::1] phi, const double[::1] vsq, double z,
                    double eps, int max_iter, double* lam_out, long* n_out) nogil:
    cdef Py_ssize_t d = phi.shape[0]
    cdef Py_ssize_t m
    cdef double pmax = -INFINITY, total = 0.0, vmax_sq = 0.0, w
    cdef bint any_support = False
    for m in range(d):
        w = phi[m] * vsq[m]
        if w > 0:
            any_support = True
            total += w
            if phi[m] > pmax:
                pmax = phi[m]
    if not any_support:
        lam_out[0] = NAN
        n_out[0] = 0
        return STATUS_EMPTY_SUPPORT
    for m in range(d):
        if phi[m] * vsq[m] > 0 and phi[m] == pmax:
            vmax_sq += vsq[m]

    cdef double lo = pmax if pmax > z else z
    cdef double hi = 2.0 * pmax
    if 4.0 * total + z > hi:
        hi = 4.0 * total + z
    hi *= 1.0 + 1e-9

    cdef double lam = _cubic_largest_root(pmax * vmax_sq + 2.0 * pmax + z,
                                          (pmax + 2.0 * z) * pmax, pmax * pmax * z)
    if lam < z:
        lam = z
    if not (lam > lo and lam < hi):
        if z > pmax:
            lam = z
        if not (lam > pmax and lam < hi):
            lam = 0.5 * (lo + hi)

    cdef double f, fp, diff, ratio, s, sp, mu, cand
    cdef int it
    for it in range(max_iter + 1):
        s = 0.0
        sp = 0.0
        for m in range(d):
            w = phi[m] * vsq[m]
            if w > 0:
                diff = lam - phi[m]
                ratio = w / (diff * diff)
                s += ratio
                sp += ratio * phi[m] / diff
        f = lam * lam * s - lam + z
        if fabs(f) <= eps * (lam if lam > 1.0 else 1.0):
            lam_out[0] = lam
            n_out[0] = it
            return STATUS_OK
        if it == max_iter:
            break
        if f > 0 and lam > lo:
            lo = lam
        elif f < 0 and lam < hi:
            hi = lam
        fp = -2.0 * lam * sp - 1.0
        mu = lam - f / fp
        if mu > pmax:
            cand = mu
        else:
            cand = 0.5 * (pmax + lam)
        if not (cand > lo and cand < hi):
            cand = 0.5 * (lo + hi)
        if cand == lam or hi - lo <= 4.0 * DBL_EPS * lam:
            lam_out[0] = lam
            n_out[0] = it + 1
            return STATUS_OK
        lam = cand
    lam_out[0] = lam
    n_out[0] = max_iter
    return STATUS_MAX_ITER


def solve_secular_batch(phi, vsq, z, double eps=1e-12, int max_iter=100):
    cdef double[:, ::1] P = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[:, ::1] Q = np.ascontiguousarray(vsq, dtype=np.float64)
    cdef double[::1] Z = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t B = P.shape[0], b
    lam = np.empty(B, dtype=np.float64)
    n_iter = np.empty(B, dtype=np.int64)
    status = np.empty(B, dtype=np.int64)
    cdef double[::1] L = lam
    cdef long[::1] NI = n_iter
    cdef long[::1] ST = status
    with nogil:
        for b in range(B):
            ST[b] = _solve_one(P[b], Q[b], Z[b], eps, max_iter, &L[b], &NI[b])
    return lam, n_iter, status


def weighted_covariance(X, weights):
    cdef double complex[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double[:, ::1] wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t F = x.shape[0], M = x.shape[1], N = x.shape[2], K = wt.shape[0]
    cdef Py_ssize_t P = M * (M + 1) // 2
    out = np.zeros((F, K, M, M), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] V = out
    # per-frame outer products are formed once, then spread to every source
    cdef double[:, ::1] acc_re = np.zeros((K, P))
    cdef double[:, ::1] acc_im = np.zeros((K, P))
    cdef double[::1] p_re = np.zeros(P)
    cdef double[::1] p_im = np.zeros(P)
    cdef double[::1] xr = np.zeros(M)
    cdef double[::1] xi = np.zeros(M)
    cdef Py_ssize_t f, k, i, j, n, p
    cdef double w
    cdef double inv_n = 1.0 / N
    with nogil:
        for f in range(F):
            acc_re[:, :] = 0.0
            acc_im[:, :] = 0.0
            for n in range(N):
                for i in range(M):
                    xr[i] = x[f, i, n].real
                    xi[i] = x[f, i, n].imag
                p = 0
                for i in range(M):
                    for j in range(i, M):
                        p_re[p] = xr[i] * xr[j] + xi[i] * xi[j]
                        p_im[p] = xi[i] * xr[j] - xr[i] * xi[j]
                        p += 1
                for k in range(K):
                    w = wt[k, n]
                    for p in range(P):
                        acc_re[k, p] += w * p_re[p]
                        acc_im[k, p] += w * p_im[p]
            for k in range(K):
                p = 0
                for i in range(M):
                    for j in range(i, M):
                        if i == j:
                            V[f, k, i, i] = acc_re[k, p] * inv_n
                        else:
                            V[f, k, i, j] = (acc_re[k, p] + 1j * acc_im[k, p]) * inv_n
                            V[f, k, j, i] = (acc_re[k, p] - 1j * acc_im[k, p]) * inv_n
                        p += 1
    return out
