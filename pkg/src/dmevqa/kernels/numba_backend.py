"""Numba kernel backend: direct-loop convolution and pooling, @njit compiled.

Loop kernels beat im2col+gemm here because they avoid the large column-matrix
copy; the 3x3/stride-1 forward path is unrolled so LLVM emits fused
multiply-add SIMD over output rows. Kernels are single-threaded and
deterministic. First call per dtype pays a compile; cache=True persists the
machine code on disk.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, fastmath=True)
def _conv_fwd_3x3(xp, w, bias, out):
    bn, cin, hp, wp = xp.shape
    cout = w.shape[0]
    ho, wo = out.shape[2], out.shape[3]
    cb = 8
    acc = np.empty((cb, wo), xp.dtype)
    for b in range(bn):
        for co0 in range(0, cout, cb):
            nco = min(cb, cout - co0)
            for r in range(ho):
                for j in range(nco):
                    accj = acc[j]
                    bj = bias[co0 + j]
                    for i in range(wo):
                        accj[i] = bj
                for ci in range(cin):
                    x0 = xp[b, ci, r]
                    x1 = xp[b, ci, r + 1]
                    x2 = xp[b, ci, r + 2]
                    for j in range(nco):
                        accj = acc[j]
                        wj = w[co0 + j, ci]
                        w00 = wj[0, 0]; w01 = wj[0, 1]; w02 = wj[0, 2]
                        w10 = wj[1, 0]; w11 = wj[1, 1]; w12 = wj[1, 2]
                        w20 = wj[2, 0]; w21 = wj[2, 1]; w22 = wj[2, 2]
                        for i in range(wo):
                            accj[i] += (w00 * x0[i] + w01 * x0[i + 1] + w02 * x0[i + 2]
                                        + w10 * x1[i] + w11 * x1[i + 1] + w12 * x1[i + 2]
                                        + w20 * x2[i] + w21 * x2[i + 1] + w22 * x2[i + 2])
                for j in range(nco):
                    accj = acc[j]
                    for i in range(wo):
                        out[b, co0 + j, r, i] = accj[i]


@njit(cache=True, fastmath=True)
def _conv_fwd_any(xp, w, bias, stride, out):
    bn, cin, hp, wp = xp.shape
    cout, _, k1, k2 = w.shape
    ho, wo = out.shape[2], out.shape[3]
    acc = np.empty(wo, xp.dtype)
    for b in range(bn):
        for co in range(cout):
            for r in range(ho):
                for i in range(wo):
                    acc[i] = bias[co]
                hi = r * stride
                for ci in range(cin):
                    for a in range(k1):
                        xrow = xp[b, ci, hi + a]
                        for c in range(k2):
                            wv = w[co, ci, a, c]
                            for i in range(wo):
                                acc[i] += wv * xrow[i * stride + c]
                for i in range(wo):
                    out[b, co, r, i] = acc[i]


@njit(cache=True, fastmath=True)
def _conv_gx(go, w, stride, gx):
    bn, cout, ho, wo = go.shape
    _, cin, k1, k2 = w.shape
    for b in range(bn):
        for r in range(ho):
            hi = r * stride
            for co in range(cout):
                grow = go[b, co, r]
                for ci in range(cin):
                    for a in range(k1):
                        gxrow = gx[b, ci, hi + a]
                        for c in range(k2):
                            wv = w[co, ci, a, c]
                            for i in range(wo):
                                gxrow[i * stride + c] += wv * grow[i]


@njit(cache=True, fastmath=True)
def _conv_gw_3x3(go, xp, gw, gb):
    # Tap sums are accumulated in 16-wide lane buffers so the inner loop is a
    # fixed-width map LLVM turns into vector FMAs; a multi-scalar reduction
    # over i would stay scalar. Lanes are folded after the row loop.
    bn, cout, ho, wo = go.shape
    cin = gw.shape[1]
    zero = xp[0, 0, 0, 0] * 0
    nv = (wo // 16) * 16
    vac = np.empty((9, 16), xp.dtype)
    for b in range(bn):
        for co in range(cout):
            s = zero
            for r in range(ho):
                grow = go[b, co, r]
                for i in range(wo):
                    s += grow[i]
            gb[co] += s
            for ci in range(cin):
                for j in range(9):
                    for l in range(16):
                        vac[j, l] = zero
                a00 = zero; a01 = zero; a02 = zero
                a10 = zero; a11 = zero; a12 = zero
                a20 = zero; a21 = zero; a22 = zero
                for r in range(ho):
                    grow = go[b, co, r]
                    x0 = xp[b, ci, r]
                    x1 = xp[b, ci, r + 1]
                    x2 = xp[b, ci, r + 2]
                    for i0 in range(0, nv, 16):
                        for l in range(16):
                            i = i0 + l
                            g = grow[i]
                            vac[0, l] += g * x0[i]
                            vac[1, l] += g * x0[i + 1]
                            vac[2, l] += g * x0[i + 2]
                            vac[3, l] += g * x1[i]
                            vac[4, l] += g * x1[i + 1]
                            vac[5, l] += g * x1[i + 2]
                            vac[6, l] += g * x2[i]
                            vac[7, l] += g * x2[i + 1]
                            vac[8, l] += g * x2[i + 2]
                    for i in range(nv, wo):
                        g = grow[i]
                        a00 += g * x0[i]; a01 += g * x0[i + 1]; a02 += g * x0[i + 2]
                        a10 += g * x1[i]; a11 += g * x1[i + 1]; a12 += g * x1[i + 2]
                        a20 += g * x2[i]; a21 += g * x2[i + 1]; a22 += g * x2[i + 2]
                for l in range(16):
                    a00 += vac[0, l]; a01 += vac[1, l]; a02 += vac[2, l]
                    a10 += vac[3, l]; a11 += vac[4, l]; a12 += vac[5, l]
                    a20 += vac[6, l]; a21 += vac[7, l]; a22 += vac[8, l]
                gwc = gw[co, ci]
                gwc[0, 0] += a00; gwc[0, 1] += a01; gwc[0, 2] += a02
                gwc[1, 0] += a10; gwc[1, 1] += a11; gwc[1, 2] += a12
                gwc[2, 0] += a20; gwc[2, 1] += a21; gwc[2, 2] += a22


@njit(cache=True, fastmath=True)
def _conv_gw(go, xp, stride, gw, gb):
    bn, cout, ho, wo = go.shape
    _, cin, k1, k2 = gw.shape
    zero = xp[0, 0, 0, 0] * 0
    for b in range(bn):
        for co in range(cout):
            for r in range(ho):
                grow = go[b, co, r]
                hi = r * stride
                s = zero
                for i in range(wo):
                    s += grow[i]
                gb[co] += s
                for ci in range(cin):
                    for a in range(k1):
                        xrow = xp[b, ci, hi + a]
                        for c in range(k2):
                            dot = zero
                            for i in range(wo):
                                dot += grow[i] * xrow[i * stride + c]
                            gw[co, ci, a, c] += dot


@njit(cache=True)
def _pool_fwd(x, k, stride, out, idx):
    bn, cn, h, w = x.shape
    ho, wo = out.shape[2], out.shape[3]
    for b in range(bn):
        for c in range(cn):
            for r in range(ho):
                for q in range(wo):
                    h0 = r * stride
                    w0 = q * stride
                    best = x[b, c, h0, w0]
                    bi = 0
                    for a in range(k):
                        for d in range(k):
                            v = x[b, c, h0 + a, w0 + d]
                            if v > best:
                                best = v
                                bi = a * k + d
                    out[b, c, r, q] = best
                    idx[b, c, r, q] = bi


@njit(cache=True)
def _pool_bwd(go, idx, k, stride, gx):
    bn, cn, ho, wo = go.shape
    for b in range(bn):
        for c in range(cn):
            for r in range(ho):
                for q in range(wo):
                    bi = idx[b, c, r, q]
                    gx[b, c, r * stride + bi // k, q * stride + bi % k] += go[b, c, r, q]


def conv2d_forward(x_pad, weight, bias, stride):
    """Correlate x_pad (B,Cin,Hp,Wp) with weight (Cout,Cin,K1,K2), add bias."""
    cout, _, k1, k2 = weight.shape
    ho = (x_pad.shape[2] - k1) // stride + 1
    wo = (x_pad.shape[3] - k2) // stride + 1
    out = np.empty((x_pad.shape[0], cout, ho, wo), dtype=x_pad.dtype)
    if k1 == 3 and k2 == 3 and stride == 1:
        _conv_fwd_3x3(x_pad, weight, bias, out)
    else:
        _conv_fwd_any(x_pad, weight, bias, stride, out)
    return out


def conv2d_input_grad(gout, weight, stride, x_pad_shape):
    """Gradient of conv2d_forward w.r.t. the padded input."""
    if stride == 1:
        # Gather form: correlating the zero-padded output gradient with the
        # spatially flipped, in/out-transposed weights reuses the fast
        # forward kernels instead of the scatter loop.
        k1, k2 = weight.shape[2], weight.shape[3]
        go_z = np.pad(gout, ((0, 0), (0, 0), (k1 - 1, k1 - 1), (k2 - 1, k2 - 1)))
        wt = np.ascontiguousarray(weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        zero_bias = np.zeros(wt.shape[0], dtype=gout.dtype)
        return conv2d_forward(go_z, wt, zero_bias, 1)
    gx = np.zeros(x_pad_shape, dtype=gout.dtype)
    _conv_gx(gout, weight, stride, gx)
    return gx


def conv2d_weight_grad(gout, x_pad, stride, weight_shape):
    """Gradients of conv2d_forward w.r.t. weight and bias."""
    gw = np.zeros(weight_shape, dtype=gout.dtype)
    gb = np.zeros(weight_shape[0], dtype=gout.dtype)
    if weight_shape[2] == 3 and weight_shape[3] == 3 and stride == 1:
        _conv_gw_3x3(gout, x_pad, gw, gb)
    else:
        _conv_gw(gout, x_pad, stride, gw, gb)
    return gw, gb


def maxpool_forward(x, k, stride):
    """Max-pool with k×k windows; returns (out, idx of first max per window)."""
    ho = (x.shape[2] - k) // stride + 1
    wo = (x.shape[3] - k) // stride + 1
    out = np.empty((x.shape[0], x.shape[1], ho, wo), dtype=x.dtype)
    idx = np.empty(out.shape, dtype=np.int64)
    _pool_fwd(x, k, stride, out, idx)
    return out, idx


def maxpool_backward(gout, idx, k, stride, x_shape):
    """Scatter gout back to the argmax positions recorded by maxpool_forward."""
    gx = np.zeros(x_shape, dtype=gout.dtype)
    _pool_bwd(gout, idx, k, stride, gx)
    return gx
