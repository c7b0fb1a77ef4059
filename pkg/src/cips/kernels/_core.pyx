# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; the numpy twins live in pyref.py.

Loops are fused per pair / per (row, cluster) so batches make a single pass
with no temporaries. Signatures and semantics match pyref exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p, sqrt

cnp.import_array()

BACKEND = "cython"


cdef inline double _sigmoid(double z) nogil:
    cdef double ez
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


cdef inline double _softplus(double z) nogil:
    cdef double m = z if z > 0.0 else 0.0
    return m + log1p(exp(-fabs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    cdef cnp.ndarray flat = np.ascontiguousarray(z).reshape(-1)
    out = np.empty_like(flat)
    cdef double[::1] zi = flat
    cdef double[::1] oi = out
    cdef Py_ssize_t i
    for i in range(zi.shape[0]):
        oi[i] = _sigmoid(zi[i])
    return out.reshape(z.shape)


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    cdef cnp.ndarray flat = np.ascontiguousarray(z).reshape(-1)
    out = np.empty_like(flat)
    cdef double[::1] zi = flat
    cdef double[::1] oi = out
    cdef Py_ssize_t i
    for i in range(zi.shape[0]):
        oi[i] = _softplus(zi[i])
    return out.reshape(z.shape)


def bce_terms_and_grad(z, alpha, beta):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0]
    terms = np.empty(n, dtype=np.float64)
    dz = np.empty(n, dtype=np.float64)
    cdef double[::1] tv = terms
    cdef double[::1] dv = dz
    cdef Py_ssize_t i
    for i in range(n):
        tv[i] = av[i] * _softplus(-zv[i]) + bv[i] * _softplus(zv[i])
        dv[i] = (av[i] + bv[i]) * _sigmoid(zv[i]) - av[i]
    return terms, dz


def dot_rows(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], d = av.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += av[i, j] * bv[i, j]
        ov[i] = acc
    return out


def scatter_add_rows(out, idx, rows):
    if not out.flags.c_contiguous:
        raise ValueError("scatter_add_rows needs a C-contiguous target")
    cdef double[:, ::1] ov = out
    cdef cnp.int64_t[::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[:, ::1] rv = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t n = iv.shape[0], d = ov.shape[1]
    cdef Py_ssize_t i, j, r
    for i in range(n):
        r = iv[i]
        for j in range(d):
            ov[r, j] += rv[i, j]


def pairwise_distances(h, centers):
    cdef double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t b = hv.shape[0], k = cv.shape[0], d = hv.shape[1]
    out = np.empty((b, k), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, l
    cdef double acc, diff
    for i in range(b):
        for j in range(k):
            acc = 0.0
            for l in range(d):
                diff = hv[i, l] - cv[j, l]
                acc += diff * diff
            ov[i, j] = sqrt(acc)
    return out


def soft_assign_from_distances(dist, squared):
    cdef double[:, ::1] dv = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t b = dv.shape[0], k = dv.shape[1]
    cdef bint sq = bool(squared)
    out = np.empty((b, k), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double q, s
    for i in range(b):
        s = 0.0
        for j in range(k):
            if sq:
                q = 1.0 / (1.0 + dv[i, j] * dv[i, j])
            else:
                q = 1.0 / (1.0 + dv[i, j])
            ov[i, j] = q
            s += q
        for j in range(k):
            ov[i, j] /= s
    return out


def kl_grads(h, centers, dist, soft, target, squared):
    cdef double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[:, ::1] dv = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(soft, dtype=np.float64)
    cdef double[:, ::1] tv = np.ascontiguousarray(target, dtype=np.float64)
    cdef bint sq = bool(squared)
    cdef Py_ssize_t b = hv.shape[0], k = cv.shape[0], d = hv.shape[1]
    grad_h = np.zeros((b, d), dtype=np.float64)
    grad_centers = np.zeros((k, d), dtype=np.float64)
    cdef double[:, ::1] gh = grad_h
    cdef double[:, ::1] gc = grad_centers
    cdef Py_ssize_t i, j, l
    cdef double q, s, dq, coef, diff, loss = 0.0
    for i in range(b):
        s = 0.0
        for j in range(k):
            if sq:
                s += 1.0 / (1.0 + dv[i, j] * dv[i, j])
            else:
                s += 1.0 / (1.0 + dv[i, j])
        for j in range(k):
            if sq:
                q = 1.0 / (1.0 + dv[i, j] * dv[i, j])
            else:
                q = 1.0 / (1.0 + dv[i, j])
            dq = (1.0 - tv[i, j] / av[i, j]) / s
            if sq:
                coef = dq * (-q * q) * 2.0
            elif dv[i, j] > 0.0:
                coef = dq * (-q * q) / dv[i, j]
            else:
                coef = 0.0
            if tv[i, j] > 0.0:
                loss += tv[i, j] * log(tv[i, j] / av[i, j])
            for l in range(d):
                diff = hv[i, l] - cv[j, l]
                gh[i, l] += coef * diff
                gc[j, l] -= coef * diff
    return loss, grad_h, grad_centers


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps, weight_decay):
    if not (param.flags.c_contiguous and m.flags.c_contiguous and v.flags.c_contiguous):
        raise ValueError("adam_update needs C-contiguous state arrays")
    cdef double[::1] pv = param.reshape(-1)
    cdef double[::1] gv = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef double[::1] mv = m.reshape(-1)
    cdef double[::1] vv = v.reshape(-1)
    cdef double b1 = beta1, b2 = beta2, step = lr, e = eps, wd = weight_decay
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double g
    for i in range(n):
        g = gv[i]
        if wd != 0.0:
            g += wd * pv[i]
        mv[i] = b1 * mv[i] + (1.0 - b1) * g
        vv[i] = b2 * vv[i] + (1.0 - b2) * g * g
        pv[i] -= step * (mv[i] / c1) / (sqrt(vv[i] / c2) + e)
