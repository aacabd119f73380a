# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused C implementations of the training-step kernels.

Same contracts as ``_kernels_np``; selected automatically at import when the
extension is built. The win over numpy comes from fusing the elementwise
passes (sigmoid + clamp, loss + gradient) into single loops with no
temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


def sigmoid(object logits, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z = np.ascontiguousarray(
        np.atleast_2d(logits), dtype=np.float64
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty_like(z)
    cdef Py_ssize_t i, j, n = z.shape[0], m = z.shape[1]
    cdef double v, s, hi = 1.0 - eps
    for i in range(n):
        for j in range(m):
            v = z[i, j]
            if v >= 0.0:
                s = 1.0 / (1.0 + exp(-v))
            else:
                s = exp(v)
                s = s / (1.0 + s)
            if s < eps:
                s = eps
            elif s > hi:
                s = hi
            out[i, j] = s
    if np.ndim(logits) == 1:
        return out[0]
    return out


def bce_loss_dz(object probs, object targets, object weights):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.ascontiguousarray(targets, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dz = np.empty_like(p)
    cdef Py_ssize_t i, j, n = p.shape[0], m = p.shape[1]
    cdef double loss = 0.0, pij, yij, wj
    for i in range(n):
        for j in range(m):
            pij = p[i, j]
            yij = y[i, j]
            wj = w[j]
            loss -= wj * (yij * log(pij) + (1.0 - yij) * log1p(-pij))
            dz[i, j] = wj * (pij - yij)
    return loss, dz


def cos_loss_dz(object probs, object targets, object weights):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.ascontiguousarray(targets, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dz = np.empty_like(p)
    cdef Py_ssize_t i, j, n = p.shape[0], m = p.shape[1]
    cdef double loss = 0.0, un, vn, uv, uj, vj, a, b, scale
    for i in range(n):
        un = 0.0
        vn = 0.0
        uv = 0.0
        for j in range(m):
            uj = w[j] * y[i, j]
            vj = w[j] * p[i, j]
            un += uj * uj
            vn += vj * vj
            uv += uj * vj
        if un == 0.0 or vn == 0.0:
            raise ValueError("cosine loss undefined for a zero weighted vector")
        a = sqrt(un)
        b = sqrt(vn)
        loss += 1.0 - uv / (a * b)
        scale = uv / (a * b * b * b)
        for j in range(m):
            uj = w[j] * y[i, j]
            vj = w[j] * p[i, j]
            dz[i, j] = -(uj / (a * b) - vj * scale) * w[j] * p[i, j] * (1.0 - p[i, j])
    return loss, dz


def nesterov_step(object param, object velocity, object grad,
                  double lr, double momentum, double weight_decay):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = param
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = velocity
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = grad
    cdef Py_ssize_t j, m = p.shape[0]
    cdef double gj
    for j in range(m):
        gj = g[j] + weight_decay * p[j]
        v[j] = momentum * v[j] + gj
        p[j] = p[j] - lr * (gj + momentum * v[j])
