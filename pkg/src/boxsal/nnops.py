"""Minimal conv-net primitives with hand-written backward passes.

Feature maps are (C, H, W) float64.  Convolutions go through im2col so
both directions are matrix products; the column matrices are cached in
the forward caches for reuse in backward.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """(C, H, W) -> (C*k*k, Ho*Wo) patch matrix."""
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kernel, kernel), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, Ho, Wo, k, k)
    c, ho, wo = win.shape[:3]
    return win.transpose(0, 3, 4, 1, 2).reshape(c * kernel * kernel, ho * wo)


def _col2im(cols: np.ndarray, x_shape: tuple[int, int, int], kernel: int,
            stride: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch columns back onto the input."""
    c, h, w = x_shape
    ho = conv_out_size(h, kernel, stride, pad)
    wo = conv_out_size(w, kernel, stride, pad)
    dxp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(c, kernel, kernel, ho, wo)
    for a in range(kernel):
        for b in range(kernel):
            dxp[:, a:a + stride * ho:stride, b:b + stride * wo:stride] += cols[:, a, b]
    return dxp[:, pad:pad + h, pad:pad + w]


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                   stride: int = 1, pad: int = 1) -> tuple[np.ndarray, tuple]:
    """x: (Cin, H, W), weight: (Cout, Cin, k, k), bias: (Cout,)."""
    cout, cin, k, _ = weight.shape
    cols = _im2col(x, k, stride, pad)
    ho = conv_out_size(x.shape[1], k, stride, pad)
    wo = conv_out_size(x.shape[2], k, stride, pad)
    out = (weight.reshape(cout, -1) @ cols + bias[:, None]).reshape(cout, ho, wo)
    cache = (cols, x.shape, weight.shape, stride, pad)
    return out, cache


def conv2d_backward(d_out: np.ndarray, weight: np.ndarray, cache: tuple
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d_x, d_weight, d_bias)."""
    cols, x_shape, w_shape, stride, pad = cache
    cout, cin, k, _ = w_shape
    d_flat = d_out.reshape(cout, -1)
    d_weight = (d_flat @ cols.T).reshape(w_shape)
    d_bias = d_flat.sum(axis=1)
    d_cols = weight.reshape(cout, -1).T @ d_flat
    d_x = _col2im(d_cols, x_shape, k, stride, pad)
    return d_x, d_weight, d_bias


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return x * mask, mask


def relu_backward(d_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return d_out * mask


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 along both spatial axes."""
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(d_out: np.ndarray) -> np.ndarray:
    c, h, w = d_out.shape
    return d_out.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
