"""Independent reference implementations used only by the tests.

Each oracle takes a deliberately different route from the code it checks:
exact rational arithmetic over pixel lists, breadth-first flood fill,
central finite differences, and scalar recurrences in plain Python floats.
"""
from __future__ import annotations

import math
from collections import deque
from fractions import Fraction

import numpy as np


def otsu_exhaustive(gray: np.ndarray) -> tuple[int, bool]:
    """Scan t = 0..254 evaluating w0*w1*(mu0-mu1)^2 exactly from the pixel values."""
    vals = gray.ravel().tolist()
    total = len(vals)
    best_t, best = 0, Fraction(0)
    for t in range(255):
        low = [v for v in vals if v <= t]
        high = [v for v in vals if v > t]
        if not low or not high:
            continue
        w0 = Fraction(len(low), total)
        w1 = Fraction(len(high), total)
        mu0 = Fraction(sum(low), len(low))
        mu1 = Fraction(sum(high), len(high))
        score = w0 * w1 * (mu0 - mu1) ** 2
        if score > best:
            best_t, best = t, score
    if best == 0:
        return int(vals[0]), True
    return best_t, False


def otsu_histogram_exact(gray: np.ndarray) -> tuple[int, bool]:
    """Same maximisation over a histogram with Fractions; faster for large images."""
    hist = np.bincount(gray.ravel(), minlength=256).tolist()
    total = sum(hist)
    best_t, best = 0, Fraction(0)
    n0 = s0 = 0
    s_all = sum(i * h for i, h in enumerate(hist))
    for t in range(255):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        score = Fraction(n0 * n1, total * total) * (Fraction(s0, n0) - Fraction(s_all - s0, n1)) ** 2
        if score > best:
            best_t, best = t, score
    if best == 0:
        return int(gray.flat[0]), True
    return best_t, False


def flood_fill_labels(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """BFS from each unvisited foreground pixel in raster order."""
    h, w = mask.shape
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    labels = np.zeros((h, w), dtype=np.int64)
    m = mask.tolist()
    lab = [[0] * w for _ in range(h)]
    count = 0
    for y in range(h):
        for x in range(w):
            if not m[y][x] or lab[y][x]:
                continue
            count += 1
            lab[y][x] = count
            queue = deque([(y, x)])
            while queue:
                cy, cx = queue.popleft()
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and m[ny][nx] and not lab[ny][nx]:
                        lab[ny][nx] = count
                        queue.append((ny, nx))
    labels[:] = lab
    return labels, count


def central_difference(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar ``f`` at ``x`` (modified in place, then restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)``."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-30)
    return float(np.linalg.norm(analytic - numeric) / denom)


def sgdm_scalar(w, v, g, lr, momentum):
    v = momentum * v - lr * g
    return w + v, v


def adam_scalar(w, m, v, g, t, lr, b1, b2, eps):
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    return w - lr * m_hat / (math.sqrt(v_hat) + eps), m, v


def rmsprop_scalar(w, s, g, lr, decay, eps):
    s = decay * s + (1.0 - decay) * g * g
    return w - lr * g / (math.sqrt(s) + eps), s
