"""Pure-numpy kernel backend: im2col + gemm convolution, windowed pooling.

Slower than the numba backend on large batches (the im2col copy is pure
memory traffic) but has no compilation step and no extra dependency.
"""

import numpy as np

NAME = "numpy"


def _im2col(x_pad, k1, k2, stride, ho, wo):
    b, c, hp, wp = x_pad.shape
    s = x_pad.strides
    view = np.lib.stride_tricks.as_strided(
        x_pad,
        shape=(b, ho, wo, c, k1, k2),
        strides=(s[0], s[2] * stride, s[3] * stride, s[1], s[2], s[3]),
    )
    return np.ascontiguousarray(view).reshape(b * ho * wo, c * k1 * k2)


def conv2d_forward(x_pad, weight, bias, stride):
    """Correlate x_pad (B,Cin,Hp,Wp) with weight (Cout,Cin,K1,K2), add bias."""
    b = x_pad.shape[0]
    cout, cin, k1, k2 = weight.shape
    ho = (x_pad.shape[2] - k1) // stride + 1
    wo = (x_pad.shape[3] - k2) // stride + 1
    col = _im2col(x_pad, k1, k2, stride, ho, wo)
    out = col @ weight.reshape(cout, -1).T + bias
    return np.ascontiguousarray(out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2))


def conv2d_input_grad(gout, weight, stride, x_pad_shape):
    """Gradient of conv2d_forward w.r.t. the padded input."""
    b, cout, ho, wo = gout.shape
    _, cin, k1, k2 = weight.shape
    gcol = gout.transpose(0, 2, 3, 1).reshape(-1, cout) @ weight.reshape(cout, -1)
    gcol = gcol.reshape(b, ho, wo, cin, k1, k2)
    gx = np.zeros(x_pad_shape, dtype=gout.dtype)
    for i in range(k1):
        for j in range(k2):
            gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                gcol[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return gx


def conv2d_weight_grad(gout, x_pad, stride, weight_shape):
    """Gradients of conv2d_forward w.r.t. weight and bias."""
    b, cout, ho, wo = gout.shape
    _, cin, k1, k2 = weight_shape
    col = _im2col(x_pad, k1, k2, stride, ho, wo)
    gflat = gout.transpose(0, 2, 3, 1).reshape(-1, cout)
    gw = (col.T @ gflat).T.reshape(cout, cin, k1, k2)
    gb = gout.sum(axis=(0, 2, 3))
    return gw, gb


def maxpool_forward(x, k, stride):
    """Max-pool with k×k windows; returns (out, idx of first max per window)."""
    b, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    windows = np.empty((k * k, b, c, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            windows[i * k + j] = x[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
    idx = windows.argmax(axis=0).astype(np.int64)
    out = np.take_along_axis(windows, idx[None], axis=0)[0]
    return np.ascontiguousarray(out), idx


def maxpool_backward(gout, idx, k, stride, x_shape):
    """Scatter gout back to the argmax positions recorded by maxpool_forward."""
    gx = np.zeros(x_shape, dtype=gout.dtype)
    ho, wo = gout.shape[2], gout.shape[3]
    for i in range(k):
        for j in range(k):
            sel = idx == i * k + j
            gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += np.where(
                sel, gout, 0
            )
    return gx
