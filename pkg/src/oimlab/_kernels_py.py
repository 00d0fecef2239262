"""Reference (numpy) implementations of the per-step hot kernels.

The compiled module ``oimlab._ckernels`` exposes the same four functions with
the same signatures; :mod:`oimlab.kernels` picks one at import time.
"""
import numpy as np


def oim_loss_grad(x_raw, targets, bank, tau, eps):
    """Per-sample OIM loss and gradient w.r.t. the raw (pre-L2) features.

    ``bank`` stacks the LUT rows followed by the active queue rows; ``targets``
    index into it.  Returns ``(loss, prob_target, grad)`` where ``grad`` is the
    gradient of ``loss.sum()``; the bank is treated as constant.
    """
    x_raw = np.ascontiguousarray(x_raw, dtype=np.float64)
    bank = np.ascontiguousarray(bank, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.intp)
    n = x_raw.shape[0]
    norm = np.sqrt(np.sum(x_raw * x_raw, axis=1))
    denom = np.maximum(norm, eps)
    xhat = x_raw / denom[:, None]

    logits = xhat @ bank.T / tau
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    z = e.sum(axis=1)
    prob = e / z[:, None]
    rows = np.arange(n)
    p_t = prob[rows, targets]
    loss = -(logits[rows, targets] - np.log(z))

    g_hat = (prob @ bank - bank[targets]) / tau
    radial = np.sum(xhat * g_hat, axis=1)
    grad = (g_hat - radial[:, None] * xhat) / denom[:, None]
    grad[norm < eps] = 0.0
    return loss, p_t, grad


def weighted_standardize(x, weights, sigma_floor):
    """Standardize columns with a weighted mean and a plain (1/B) spread.

    ``mu = sum_b w_b x_b``; ``sigma = max(sqrt(mean_b (x_b - mu)^2), floor)``.
    Returns ``(y, mu, sigma, floored)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    mu = w @ x
    centered = x - mu
    var = np.mean(centered * centered, axis=0)
    sigma_raw = np.sqrt(var)
    floored = sigma_raw < sigma_floor
    sigma = np.where(floored, sigma_floor, sigma_raw)
    return centered / sigma, mu, sigma, floored


def weighted_standardize_backward(y, sigma, floored, weights, upstream):
    """VJP of :func:`weighted_standardize` given its outputs.

    Floored channels have a constant sigma, so only the mean path is
    differentiated there.
    """
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = y.shape[0]
    g_sum = g.sum(axis=0)
    gy = np.sum(g * y, axis=0)
    y_sum = y.sum(axis=0)
    gy = np.where(floored, 0.0, gy)
    dx = g - w[:, None] * g_sum - (gy / b) * (y - w[:, None] * y_sum)
    return dx / sigma


def ema_update_rows(table, ids, feats, weights, eps):
    """Sequential in-place ``row <- normalize((1-w) row + w x)`` updates.

    Applied in order, so repeated ids see earlier updates from the same call.
    A zero result row stays zero.
    """
    for k in range(len(ids)):
        i = int(ids[k])
        w = float(weights[k])
        row = (1.0 - w) * table[i] + w * feats[k]
        norm = np.sqrt(np.dot(row, row))
        if norm >= eps:
            row = row / norm
        table[i] = row
