"""Finite-difference checks of every layer kind, in float64.

Each ``check_*`` draws a random instance of the given shape, projects the
layer output on a random tensor ``R`` (loss ``sum(y * R)``), and returns the
worst norm-wise relative error over all gradients the layer produces.
"""
from __future__ import annotations

import numpy as np
from oracles import central_difference, rel_error

from plastisort.nncore import layers as L

EPS = 1e-5
TOL = 1e-6


def _projected(fn, shape_out, rng):
    r = rng.standard_normal(shape_out)
    return r, lambda: float(np.sum(fn() * r))


def check_conv(rng, n, c, h, w, f, k, stride, pad) -> float:
    x = rng.standard_normal((n, c, h, w))
    wt = rng.standard_normal((f, c, k, k)) * 0.5
    b = rng.standard_normal(f)
    y, cache = L.conv_forward(x, wt, b, stride, pad)
    r, loss = _projected(lambda: L.conv_forward(x, wt, b, stride, pad)[0], y.shape, rng)
    dx, dw, db = L.conv_backward(r, cache)
    return max(
        rel_error(dx, central_difference(loss, x, EPS)),
        rel_error(dw, central_difference(loss, wt, EPS)),
        rel_error(db, central_difference(loss, b, EPS)),
    )


def check_fc(rng, n, d_in, d_out, spatial=None) -> float:
    shape = (n, d_in) if spatial is None else (n, d_in, *spatial)
    x = rng.standard_normal(shape)
    wt = rng.standard_normal((d_out, int(np.prod(shape[1:]))))
    b = rng.standard_normal(d_out)
    y, cache = L.fc_forward(x, wt, b)
    r, loss = _projected(lambda: L.fc_forward(x, wt, b)[0], y.shape, rng)
    dx, dw, db = L.fc_backward(r, cache)
    return max(
        rel_error(dx, central_difference(loss, x, EPS)),
        rel_error(dw, central_difference(loss, wt, EPS)),
        rel_error(db, central_difference(loss, b, EPS)),
    )


def check_relu(rng, *shape) -> float:
    x = rng.standard_normal(shape)
    x += np.sign(x) * 0.05  # keep clear of the kink
    y, cache = L.relu_forward(x)
    r, loss = _projected(lambda: L.relu_forward(x)[0], y.shape, rng)
    return rel_error(L.relu_backward(r, cache), central_difference(loss, x, EPS))


def check_maxpool(rng, n, c, h, w, window, stride) -> float:
    # distinct values spaced far beyond EPS, so no window has a near-tie
    x = rng.permutation(n * c * h * w).reshape(n, c, h, w) * 0.01
    y, cache = L.maxpool_forward(x, window, stride)
    r, loss = _projected(lambda: L.maxpool_forward(x, window, stride)[0], y.shape, rng)
    return rel_error(L.maxpool_backward(r, cache), central_difference(loss, x, EPS))


def check_lrn(rng, n, c, h, w, size=5, alpha=1e-4, beta=0.75, k=1.0) -> float:
    x = rng.standard_normal((n, c, h, w)) * 2
    y, cache = L.lrn_forward(x, size, alpha, beta, k)
    r, loss = _projected(lambda: L.lrn_forward(x, size, alpha, beta, k)[0], y.shape, rng)
    return rel_error(L.lrn_backward(r, cache), central_difference(loss, x, EPS))


def check_dropout(rng, *shape, rate=0.5) -> float:
    x = rng.standard_normal(shape)
    mask = L.dropout_mask(shape, rate, rng, np.float64)
    y, cache = L.dropout_forward(x, mask)
    r, loss = _projected(lambda: L.dropout_forward(x, mask)[0], y.shape, rng)
    return rel_error(L.dropout_backward(r, cache), central_difference(loss, x, EPS))


def check_softmax_xent(rng, n, k) -> float:
    logits = rng.standard_normal((n, k)) * 3
    labels = rng.integers(0, k, n)
    _, grad = L.softmax_xent(logits, labels)
    numeric = central_difference(lambda: L.softmax_xent(logits, labels)[0], logits, EPS)
    return rel_error(grad, numeric)


# at least five shapes per kind; strides, paddings and edge-clipped windows included
CASES = {
    "conv": [
        (2, 1, 5, 5, 2, 3, 1, 0),
        (1, 3, 6, 7, 4, 3, 1, 1),
        (2, 2, 9, 9, 3, 3, 2, 0),
        (1, 2, 11, 11, 2, 5, 3, 2),
        (3, 1, 4, 4, 1, 1, 1, 0),
        (1, 3, 12, 12, 2, 4, 4, 0),
    ],
    "fc": [(2, 5, 3, None), (4, 1, 2, None), (1, 7, 7, None), (3, 2, 4, (3, 3)), (2, 8, 1, None)],
    "relu": [(3, 4), (2, 3, 4, 4), (1, 1, 1, 9), (5, 2), (2, 2, 3, 1)],
    "maxpool": [
        (1, 1, 4, 4, 2, 2),
        (2, 3, 7, 7, 3, 2),
        (1, 2, 6, 5, 2, 1),
        (2, 1, 9, 9, 3, 3),
        (1, 4, 5, 5, 5, 1),
    ],
    "lrn": [
        (1, 3, 2, 2, 5, 1e-4, 0.75, 1.0),
        (2, 7, 3, 3, 5, 1.0, 0.75, 1.0),
        (1, 8, 2, 2, 3, 0.5, 0.75, 2.0),
        (2, 1, 3, 3, 5, 2.0, 0.5, 1.0),
        (1, 6, 4, 2, 5, 1.0, 1.0, 0.5),
    ],
    "dropout": [(3, 4), (2, 3, 4, 4), (1, 10), (4, 2, 2, 2), (6, 1)],
    "softmax-xent": [(1, 2), (4, 2), (3, 5), (8, 3), (2, 10)],
}

CHECKS = {
    "conv": check_conv,
    "fc": check_fc,
    "relu": check_relu,
    "maxpool": check_maxpool,
    "lrn": check_lrn,
    "dropout": check_dropout,
    "softmax-xent": check_softmax_xent,
}


def run_case(kind: str, case, seed: int) -> float:
    return CHECKS[kind](np.random.default_rng(seed), *case)
