# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same signatures as ``_kernels_py``."""

import numpy as np

from libc.math cimport asinh, sinh, log, log1p, expm1, hypot, isinf, isfinite, INFINITY, fabs


cdef inline double _asinh_stage(double x, double a) nogil:
    if isinf(a):
        return x
    return a * asinh(x / a)


cdef inline double _asinh_stage_inv(double y, double a) nogil:
    if isinf(a):
        return y
    return a * sinh(y / a)


cdef inline double _asinh_stage_logd(double x, double a) nogil:
    if isinf(a):
        return 0.0
    return -log(hypot(1.0, x / a))


cdef inline double _yj(double y, double lam) nogil:
    cdef double mu
    if y >= 0:
        if fabs(lam) < 1e-12:
            return log1p(y)
        return expm1(lam * log1p(y)) / lam
    mu = 2.0 - lam
    if fabs(mu) < 1e-12:
        return -log1p(-y)
    return -expm1(mu * log1p(-y)) / mu


cdef inline double _yj_inv(double z, double lam) nogil:
    cdef double mu, arg
    if z >= 0:
        if fabs(lam) < 1e-12:
            return expm1(z)
        arg = lam * z
        if arg <= -1.0:
            return INFINITY
        return expm1(log1p(arg) / lam)
    mu = 2.0 - lam
    if fabs(mu) < 1e-12:
        return -expm1(-z)
    arg = -mu * z
    if arg <= -1.0:
        return -INFINITY
    return -expm1(log1p(arg) / mu)


cdef inline double _yj_logd(double y, double lam) nogil:
    if y >= 0:
        return (lam - 1.0) * log1p(y)
    return (1.0 - lam) * log1p(-y)


cdef inline double _forward(double x, double a, double lam, double loc, double scale) nogil:
    return (_yj(_asinh_stage(x, a), lam) - loc) / scale


def pipeline_forward(x, double a, double lam, double loc, double scale):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _forward(xv[i], a, lam, loc, scale)
    return out.reshape(np.shape(x))


def pipeline_inverse(z, double a, double lam, double loc, double scale):
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64).ravel()
    out = np.empty(zv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(zv.shape[0]):
            ov[i] = _asinh_stage_inv(_yj_inv(zv[i] * scale + loc, lam), a)
    return out.reshape(np.shape(z))


def pipeline_log_jacobian(x, double a, double lam, double loc, double scale):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef double logs = log(scale)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = (_asinh_stage_logd(xv[i], a)
                     + _yj_logd(_asinh_stage(xv[i], a), lam) - logs)
    return out.reshape(np.shape(x))


def profile_nll(x, double a, double lam):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    cdef double y, u, s1 = 0.0, s2 = 0.0, logd = 0.0, mean, var, shift = 0.0
    if n == 0:
        return INFINITY
    with nogil:
        # shifted sums keep the variance accurate when |mean| >> std
        shift = _yj(_asinh_stage(xv[0], a), lam)
        for i in range(n):
            y = _asinh_stage(xv[i], a)
            u = _yj(y, lam) - shift
            s1 += u
            s2 += u * u
            logd += _asinh_stage_logd(xv[i], a) + _yj_logd(y, lam)
    mean = s1 / n
    var = s2 / n - mean * mean
    if not isfinite(var) or var <= 0.0:
        return INFINITY
    return 0.5 * n * log(var) - logd


def grid_quadform(base, alphas, betas, z_obs, chol, double a, double lam,
                  double loc, double scale):
    cdef const double[::1] bv = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef const double[::1] btv = np.ascontiguousarray(betas, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(z_obs, dtype=np.float64)
    cdef const double[:, ::1] L = np.ascontiguousarray(chol, dtype=np.float64)
    cdef Py_ssize_t K = bv.shape[0], na = av.shape[0], nb = btv.shape[0]
    out = np.empty((na, nb))
    cdef double[:, ::1] ov = out
    # all betas of one alpha are solved together so the inner loop is a contiguous axpy
    W_arr = np.empty((K, nb))
    cdef double[:, ::1] W = W_arr
    cdef double* wr
    cdef double* wc
    cdef double* o
    cdef Py_ssize_t i, j, r, c
    cdef double k, lrc, inv, zr
    with nogil:
        for i in range(na):
            o = &ov[i, 0]
            for j in range(nb):
                o[j] = 0.0
            for r in range(K):
                k = r + 1.0
                zr = zv[r]
                wr = &W[r, 0]
                for j in range(nb):
                    wr[j] = zr - _forward(bv[r] + av[i] * k + btv[j] * k * k, a, lam, loc, scale)
                for c in range(r):
                    lrc = L[r, c]
                    wc = &W[c, 0]
                    for j in range(nb):
                        wr[j] -= lrc * wc[j]
                inv = 1.0 / L[r, r]
                for j in range(nb):
                    wr[j] *= inv
                    o[j] += wr[j] * wr[j]
            for j in range(nb):
                if not isfinite(o[j]):
                    o[j] = INFINITY
    return out


def profile_nll_grid(x, scales, lambdas):
    """``profile_nll`` on the outer product of arcsinh scales and lambdas.

    The arcsinh stage and log1p|y| depend on the scale only, so they are
    computed once per scale; each lambda then costs one expm1 per point.
    """
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef const double[::1] av = np.ascontiguousarray(scales, dtype=np.float64)
    cdef const double[::1] lv = np.ascontiguousarray(lambdas, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], na = av.shape[0], nl = lv.shape[0], i, j, q
    out = np.empty((na, nl))
    cdef double[:, ::1] ov = out
    cdef double[::1] ell = np.empty(n)
    cdef char[::1] pos = np.empty(n, dtype=np.int8)
    cdef double a, y, lam, mu, u, s1, s2, shift, mean, var
    cdef double logd_a, sum_lpos, sum_lneg
    if n == 0:
        out[:] = INFINITY
        return out
    with nogil:
        for i in range(na):
            a = av[i]
            logd_a = 0.0
            sum_lpos = 0.0
            sum_lneg = 0.0
            for q in range(n):
                y = _asinh_stage(xv[q], a)
                logd_a += _asinh_stage_logd(xv[q], a)
                if y >= 0:
                    pos[q] = 1
                    ell[q] = log1p(y)
                    sum_lpos += ell[q]
                else:
                    pos[q] = 0
                    ell[q] = log1p(-y)
                    sum_lneg += ell[q]
            for j in range(nl):
                lam = lv[j]
                mu = 2.0 - lam
                s1 = 0.0
                s2 = 0.0
                shift = 0.0
                for q in range(n):
                    if pos[q]:
                        u = ell[q] if fabs(lam) < 1e-12 else expm1(lam * ell[q]) / lam
                    else:
                        u = -ell[q] if fabs(mu) < 1e-12 else -expm1(mu * ell[q]) / mu
                    if q == 0:
                        shift = u
                    u = u - shift
                    s1 += u
                    s2 += u * u
                mean = s1 / n
                var = s2 / n - mean * mean
                if not isfinite(var) or var <= 0.0:
                    ov[i, j] = INFINITY
                else:
                    ov[i, j] = 0.5 * n * log(var) - logd_a - (lam - 1.0) * (sum_lpos - sum_lneg)
    return out
