# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled counterparts of :mod:`oimlab._kernels_py` (same signatures)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

# above this many multiply-adds per matrix product the two bank products go
# through BLAS; the per-row loops stay compiled
BLAS_MIN_WORK = 1 << 16


def oim_loss_grad(x_raw, targets, bank, double tau, double eps):
    if np.shape(x_raw)[0] * np.shape(bank)[0] * np.shape(bank)[1] >= BLAS_MIN_WORK:
        return _oim_loss_grad_blas(x_raw, targets, bank, tau, eps)
    cdef double[:, ::1] X = np.ascontiguousarray(x_raw, dtype=np.float64)
    cdef double[:, ::1] V = np.ascontiguousarray(bank, dtype=np.float64)
    cdef cnp.intp_t[::1] T = np.ascontiguousarray(targets, dtype=np.intp)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], m = V.shape[0]
    loss_arr = np.zeros(n)
    pt_arr = np.zeros(n)
    grad_arr = np.zeros((n, d))
    cdef double[::1] loss = loss_arr
    cdef double[::1] pt = pt_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double[::1] xhat = np.empty(d)
    cdef double[::1] logit = np.empty(m)
    cdef double[::1] ghat = np.empty(d)
    cdef Py_ssize_t b, i, j, t
    cdef double norm, denom, s, mx, z, p, radial, inv_tau = 1.0 / tau

    for b in range(n):
        t = T[b]
        s = 0.0
        for j in range(d):
            s += X[b, j] * X[b, j]
        norm = sqrt(s)
        denom = norm if norm > eps else eps
        for j in range(d):
            xhat[j] = X[b, j] / denom

        mx = -1e308
        for i in range(m):
            s = 0.0
            for j in range(d):
                s += V[i, j] * xhat[j]
            logit[i] = s / tau
            if logit[i] > mx:
                mx = logit[i]
        z = 0.0
        for i in range(m):
            logit[i] = exp(logit[i] - mx)
            z += logit[i]
        loss[b] = log(z) - log(logit[t])
        pt[b] = logit[t] / z

        for j in range(d):
            ghat[j] = -V[t, j]
        for i in range(m):
            p = logit[i] / z
            for j in range(d):
                ghat[j] += p * V[i, j]
        if norm < eps:
            continue
        radial = 0.0
        for j in range(d):
            ghat[j] *= inv_tau
            radial += xhat[j] * ghat[j]
        for j in range(d):
            grad[b, j] = (ghat[j] - radial * xhat[j]) / denom
    return loss_arr, pt_arr, grad_arr


def _oim_loss_grad_blas(x_raw, targets, bank, double tau, double eps):
    cdef double[:, ::1] X = np.ascontiguousarray(x_raw, dtype=np.float64)
    bank = np.ascontiguousarray(bank, dtype=np.float64)
    cdef double[:, ::1] V = bank
    cdef cnp.intp_t[::1] T = np.ascontiguousarray(targets, dtype=np.intp)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], m = V.shape[0]
    xhat_arr = np.empty((n, d))
    norm_arr = np.empty(n)
    cdef double[:, ::1] xh = xhat_arr
    cdef double[::1] nrm = norm_arr
    cdef Py_ssize_t b, i, j, t
    cdef double s, mx, z, denom, radial, inv_tau = 1.0 / tau

    for b in range(n):
        s = 0.0
        for j in range(d):
            s += X[b, j] * X[b, j]
        nrm[b] = sqrt(s)
        denom = nrm[b] if nrm[b] > eps else eps
        for j in range(d):
            xh[b, j] = X[b, j] / denom

    prob_arr = np.dot(xhat_arr, bank.T)
    cdef double[:, ::1] P = prob_arr
    loss_arr = np.empty(n)
    pt_arr = np.empty(n)
    cdef double[::1] loss = loss_arr
    cdef double[::1] pt = pt_arr
    for b in range(n):
        mx = -1e308
        for i in range(m):
            P[b, i] *= inv_tau
            if P[b, i] > mx:
                mx = P[b, i]
        z = 0.0
        for i in range(m):
            P[b, i] = exp(P[b, i] - mx)
            z += P[b, i]
        t = T[b]
        loss[b] = -(log(P[b, t]) - log(z))
        for i in range(m):
            P[b, i] /= z
        pt[b] = P[b, t]

    grad_arr = np.dot(prob_arr, bank)
    cdef double[:, ::1] G = grad_arr
    for b in range(n):
        t = T[b]
        if nrm[b] < eps:
            for j in range(d):
                G[b, j] = 0.0
            continue
        radial = 0.0
        for j in range(d):
            G[b, j] = (G[b, j] - V[t, j]) * inv_tau
            radial += xh[b, j] * G[b, j]
        for j in range(d):
            G[b, j] = (G[b, j] - radial * xh[b, j]) / nrm[b]
    return loss_arr, pt_arr, grad_arr


def weighted_standardize(x, weights, double sigma_floor):
    cdef double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], b, j
    y_arr = np.empty((n, d))
    mu_arr = np.zeros(d)
    sigma_arr = np.empty(d)
    floored_arr = np.zeros(d, dtype=bool)
    cdef double[:, ::1] Y = y_arr
    cdef double[::1] mu = mu_arr
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] acc = np.zeros(d)
    cdef double s, c

    # row-major passes: weighted mean, squared deviations, output
    for b in range(n):
        for j in range(d):
            mu[j] += w[b] * X[b, j]
    for b in range(n):
        for j in range(d):
            c = X[b, j] - mu[j]
            acc[j] += c * c
    for j in range(d):
        s = sqrt(acc[j] / n)
        if s < sigma_floor:
            floored_arr[j] = True
            s = sigma_floor
        sigma[j] = s
    for b in range(n):
        for j in range(d):
            Y[b, j] = (X[b, j] - mu[j]) / sigma[j]
    return y_arr, mu_arr, sigma_arr, floored_arr


def weighted_standardize_backward(y, sigma, floored, weights, upstream):
    cdef double[:, ::1] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] sg = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef cnp.npy_bool[::1] fl = np.ascontiguousarray(floored, dtype=bool).view(np.uint8)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[:, ::1] G = np.ascontiguousarray(upstream, dtype=np.float64)
    cdef Py_ssize_t n = Y.shape[0], d = Y.shape[1], b, j
    dx_arr = np.empty((n, d))
    cdef double[:, ::1] dX = dx_arr
    cdef double[::1] g_sum = np.zeros(d)
    cdef double[::1] gy = np.zeros(d)
    cdef double[::1] y_sum = np.zeros(d)

    for b in range(n):
        for j in range(d):
            g_sum[j] += G[b, j]
            gy[j] += G[b, j] * Y[b, j]
            y_sum[j] += Y[b, j]
    for j in range(d):
        gy[j] = 0.0 if fl[j] else gy[j] / n
    for b in range(n):
        for j in range(d):
            dX[b, j] = (G[b, j] - w[b] * g_sum[j] - gy[j] * (Y[b, j] - w[b] * y_sum[j])) / sg[j]
    return dx_arr


def ema_update_rows(double[:, ::1] table, ids, feats, weights, double eps):
    cdef cnp.intp_t[::1] I = np.ascontiguousarray(ids, dtype=np.intp)
    cdef double[:, ::1] F = np.ascontiguousarray(feats, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t k, j, i, d = table.shape[1]
    cdef double w, s, norm
    cdef double[::1] row = np.empty(d)
    for k in range(I.shape[0]):
        i = I[k]
        w = W[k]
        s = 0.0
        for j in range(d):
            row[j] = (1.0 - w) * table[i, j] + w * F[k, j]
            s += row[j] * row[j]
        norm = sqrt(s)
        for j in range(d):
            table[i, j] = row[j] / norm if norm >= eps else row[j]
