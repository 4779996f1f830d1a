"""Vectorised numpy implementations of the hot numeric kernels.

This is the fallback backend: it is what you get when the compiled
extension (``replyrank.kernels._core``) is unavailable.  Both backends
implement the same flat-function API over C-contiguous float64 arrays;
validity masks are uint8 (nonzero = valid).

Backward kernels take saved forward outputs instead of inputs wherever
the derivative is cheaper that way (tanh, sigmoid, softmax).
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def matmul(a, b):
    return a @ b


def matmul_ta(a, b):
    """a.T @ b without materialising the transpose."""
    return a.T @ b


def matmul_tb(a, b):
    """a @ b.T without materialising the transpose."""
    return a @ b.T


def softmax_rows(x, mask):
    """Row softmax over valid entries; masked entries are exactly 0.

    Every row must have at least one valid entry (callers validate).
    Uses per-row max subtraction over valid entries for stability.
    """
    valid = mask != 0
    neg = np.where(valid, x, -np.inf)
    mx = neg.max(axis=1, keepdims=True)
    e = np.where(valid, np.exp(x - mx), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(y, gy, mask):
    dot = (gy * y).sum(axis=1, keepdims=True)
    gx = y * (gy - dot)
    gx[mask == 0] = 0.0
    return gx


def tanh_fwd(x):
    return np.tanh(x)


def tanh_grad(y, gy):
    return gy * (1.0 - y * y)


def sigmoid_fwd(x):
    # Split by sign to avoid overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(y, gy):
    return gy * y * (1.0 - y)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_grad(y, gy):
    return np.where(y > 0.0, gy, 0.0)


def maxpool_rows(x, row_mask):
    """Column-wise max over valid rows.

    Returns (out[d], argmax[d]); ties resolve to the lowest row index,
    which is where the gradient is routed.
    """
    valid = row_mask != 0
    neg = np.where(valid[:, None], x, -np.inf)
    arg = neg.argmax(axis=0)
    out = neg[arg, np.arange(x.shape[1])]
    return out, arg.astype(np.int64)


def maxpool_rows_grad(gy, arg, nrows):
    gx = np.zeros((nrows, gy.shape[0]))
    gx[arg, np.arange(gy.shape[0])] = gy
    return gx


def layernorm_rows(x, gain, bias, eps):
    """Per-row layer norm. Returns (y, xhat, inv_std) for the backward."""
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * gain + bias, xhat, inv_std[:, 0].copy()


def layernorm_rows_grad(gy, xhat, inv_std, gain):
    gyh = gy * gain
    mean_g = gyh.mean(axis=1, keepdims=True)
    mean_gx = (gyh * xhat).mean(axis=1, keepdims=True)
    gx = inv_std[:, None] * (gyh - mean_g - xhat * mean_gx)
    dgain = (gy * xhat).sum(axis=0)
    dbias = gy.sum(axis=0)
    return gx, dgain, dbias


def scatter_add_rows(out, ids, g):
    """out[ids[i]] += g[i], accumulating over repeated ids, in place."""
    np.add.at(out, ids, g)
