"""Forward/backward kernels for each layer kind.

All kernels operate on ``N x C x H x W`` arrays (``N x D`` for fully connected
layers) and are dtype-agnostic: float32 for training, float64 for gradient
checks. Each ``*_forward`` returns ``(output, cache)``; the matching
``*_backward`` consumes the cache.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_output_size(n: int, kernel: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - kernel) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return cols, oh, ow


def conv_forward(x, w, b, stride=1, pad=0):
    f, c, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols, oh, ow = _im2col(xp, kh, kw, stride)
    out = cols @ w.reshape(f, -1).T
    out += b
    y = out.reshape(x.shape[0], oh, ow, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), (x.shape, xp.shape, cols, w, stride, pad)


def conv_backward(dy, cache, need_dx=True):
    """Gradients ``(dx, dw, db)``; ``dx`` is None when ``need_dx`` is false."""
    x_shape, xp_shape, cols, w, stride, pad = cache
    f, c, kh, kw = w.shape
    n, _, oh, ow = dy.shape
    dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dy2.T @ cols).reshape(w.shape)
    db = dy2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dy2 @ w.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    dcols = np.ascontiguousarray(dcols.transpose(4, 5, 0, 3, 1, 2))
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[i, j]
    dx = dxp[:, :, pad : pad + x_shape[2], pad : pad + x_shape[3]] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dy, x):
    return dy * (x > 0)


def maxpool_forward(x, window, stride):
    n, c, h, w = x.shape
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, oh, ow, window * window)
    # np.argmax returns the first maximum in scan order: the pinned tie rule
    arg = flat.argmax(axis=4)
    y = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
    return y, (x.shape, arg, window, stride)


def maxpool_backward(dy, cache):
    x_shape, arg, window, stride = cache
    oh, ow = dy.shape[2], dy.shape[3]
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for i in range(window):
        for j in range(window):
            routed = np.where(arg == i * window + j, dy, 0)
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += routed
    return dx


def _channel_window_sum(a, n):
    """Sum over channels c-n//2 .. c+n//2 (clipped at the edges)."""
    half = n // 2
    c = a.shape[1]
    csum = np.cumsum(np.pad(a, ((0, 0), (1, 0), (0, 0), (0, 0))), axis=1)
    hi = np.minimum(np.arange(c) + half + 1, c)
    lo = np.maximum(np.arange(c) - half, 0)
    return csum[:, hi] - csum[:, lo]


def lrn_forward(x, n=5, alpha=1e-4, beta=0.75, k=1.0):
    """Cross-channel LRN: ``b = a / (k + alpha/n * sum(a^2))^beta``."""
    scale = k + (alpha / n) * _channel_window_sum(x * x, n)
    y = x * scale ** (-beta)
    return y, (x, scale, n, alpha, beta)


def lrn_backward(dy, cache):
    x, scale, n, alpha, beta = cache
    inner = _channel_window_sum(dy * x * scale ** (-beta - 1), n)
    return dy * scale ** (-beta) - (2.0 * alpha * beta / n) * x * inner


def dropout_mask(shape, rate, rng: np.random.Generator, dtype):
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype(1.0 - rate)


def dropout_forward(x, mask):
    if mask is None:
        return x, None
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def fc_forward(x, w, b):
    x2 = x.reshape(x.shape[0], -1)
    y = x2 @ w.T
    y += b
    return y, (x.shape, x2, w)


def fc_backward(dy, cache):
    x_shape, x2, w = cache
    dw = dy.T @ x2
    db = dy.sum(axis=0)
    dx = (dy @ w).reshape(x_shape)
    return dx, dw, db


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy of ``softmax(logits)`` and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label outside class range 0..{k - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)
