"""Small numerically stable kernels shared by the rest of the package.

Every function accepts anything ``np.asarray`` understands and computes in
float64. Reductions over the last axis sum left to right so repeated runs
give bit-identical results.
"""

import numpy as np

from .errors import DimensionError


def _vec(x, name="input"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {x.shape}")
    return x


def dot(u, v):
    u = _vec(u, "u")
    v = _vec(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    total = 0.0
    for a, b in zip(u.tolist(), v.tolist()):
        total += a * b
    return total


def log_sum_exp(xs, axis=-1, where=None):
    """Return log(sum(exp(xs))) along ``axis`` without overflow.

    ``where`` masks entries out of the sum; a row with nothing selected
    yields ``-inf``. A 1-d call with an empty vector raises.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if where is None:
        if xs.shape[axis] == 0:
            raise DimensionError("log_sum_exp of an empty vector")
        m = np.max(xs, axis=axis, keepdims=True)
        out = m + np.log(np.sum(np.exp(xs - m), axis=axis, keepdims=True))
        out = np.squeeze(out, axis=axis)
    else:
        where = np.broadcast_to(where, xs.shape)
        masked = np.where(where, xs, -np.inf)
        m = np.max(masked, axis=axis, keepdims=True, initial=-np.inf)
        safe_m = np.where(np.isfinite(m), m, 0.0)
        s = np.sum(np.where(where, np.exp(masked - safe_m), 0.0), axis=axis, keepdims=True)
        with np.errstate(divide="ignore"):
            out = np.squeeze(safe_m + np.log(s), axis=axis)
    return float(out) if np.ndim(out) == 0 else out


def l2_normalize(v, eps=1e-12, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.sum(v * v, axis=axis, keepdims=True))
    return v / np.maximum(norm, eps)


def softmax(xs, axis=-1):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.shape[axis] == 0:
        raise DimensionError("softmax of an empty vector")
    e = np.exp(xs - np.max(xs, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(xs, axis=-1):
    xs = np.asarray(xs, dtype=np.float64)
    shifted = xs - np.max(xs, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softplus(x):
    """log(1 + exp(x)), accurate for large |x|. ``-inf`` maps to 0."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
