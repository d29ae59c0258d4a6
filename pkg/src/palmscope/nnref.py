"""Forward-pass reference kernels: correlation, ReLU, max pooling, dense layer.

Feature maps are float arrays of shape ``(H, W)`` or ``(H, W, C)``. A kernel
of half-size ``k`` is a ``(2k+1, 2k+1)`` array indexed ``kern[j + k, i + k]``
for offsets ``i`` (x, columns) and ``j`` (y, rows).
"""
from __future__ import annotations

import numpy as np


def _as_kernel(kern) -> tuple[np.ndarray, int]:
    kern = np.asarray(kern, dtype=np.float64)
    if kern.ndim != 2 or kern.shape[0] != kern.shape[1] or kern.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be square with odd side, got shape {kern.shape}")
    return kern, kern.shape[0] // 2


def conv2d(image, kern) -> np.ndarray:
    """``out(x, y) = sum_{i,j=-k..k} in(x+i, y+j) * kern(i, j)`` over the valid region.

    No kernel flip is applied (cross-correlation), and no padding: the output is
    ``(H - 2k, W - 2k)`` and ``out[y, x]`` corresponds to input center ``(x + k, y + k)``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("conv2d takes a single-channel (H, W) map")
    kern, k = _as_kernel(kern)
    h, w = img.shape
    if h < 2 * k + 1 or w < 2 * k + 1:
        raise ValueError(f"input {w}x{h} smaller than {2 * k + 1}x{2 * k + 1} window")
    oh, ow = h - 2 * k, w - 2 * k
    out = np.zeros((oh, ow))
    for j in range(-k, k + 1):
        for i in range(-k, k + 1):
            out += kern[j + k, i + k] * img[k + j: k + j + oh, k + i: k + i + ow]
    return out


def relu(x):
    return np.maximum(0, x)


def max_pool(feature_map, window: int, stride: int) -> np.ndarray:
    """Windowed max; windows overhanging the input edge are dropped."""
    fm = np.asarray(feature_map)
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    h, w = fm.shape[:2]
    if window > h or window > w:
        raise ValueError(f"window {window} larger than input {w}x{h}")
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    out = np.empty((oh, ow) + fm.shape[2:], dtype=fm.dtype)
    for r in range(oh):
        for c in range(ow):
            y, x = r * stride, c * stride
            out[r, c] = fm[y: y + window, x: x + window].max(axis=(0, 1))
    return out


def dense_forward(weights, x, bias) -> np.ndarray:
    """``z = W^T x + b`` with ``W`` shaped ``(n_in, n_out)``."""
    weights = np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or x.shape != (weights.shape[0],) or bias.shape != (weights.shape[1],):
        raise ValueError(
            f"shape mismatch: W {weights.shape}, x {x.shape}, b {bias.shape}"
        )
    return weights.T @ x + bias
