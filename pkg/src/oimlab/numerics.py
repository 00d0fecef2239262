"""Dense float64 helpers shared by every layer.

Random streams come from numpy's ``Generator`` over ``PCG64``.  For a fixed
numpy version the stream for a given seed is identical on every platform,
which is what the experiment determinism guarantees rest on.
"""
import warnings

import numpy as np

EPS = 1e-12


class DegenerateNormWarning(RuntimeWarning):
    """Raised (as a warning) when a gradient is requested at a near-zero vector."""


def make_rng(seed, *stream):
    """Seeded PCG64 generator; extra ints in ``stream`` derive independent substreams."""
    return np.random.Generator(np.random.PCG64([int(seed), *map(int, stream)]))


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    return a


def l2_normalize(v, eps=EPS):
    """Project rows (or a single vector) onto the unit sphere: ``v / max(||v||, eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    return v / np.maximum(norm, eps)


def l2_normalize_backward(v, upstream, eps=EPS):
    """Vector-Jacobian product of :func:`l2_normalize`.

    Rows with ``||v|| < eps`` get a zero gradient and trigger a
    :class:`DegenerateNormWarning`.
    """
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    degenerate = norm < eps
    safe = np.where(degenerate, 1.0, norm)
    vhat = v / safe
    radial = np.sum(vhat * g, axis=-1, keepdims=True)
    out = (g - radial * vhat) / safe
    if np.any(degenerate):
        warnings.warn("l2_normalize_backward at a degenerate norm; gradient set to zero",
                      DegenerateNormWarning, stacklevel=2)
        out = np.where(degenerate, 0.0, out)
    return out


def softmax(logits):
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at ``x`` by central differences (copies ``x``)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    """max |a - n| / max(|a| + |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
