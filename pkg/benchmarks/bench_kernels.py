"""Timing comparison of the numba loop kernels against the numpy fallback.

Covers the three convolution stages of the default model (batch forward,
input gradient, weight gradient), max-pooling, and one full forward+backward
training step with each backend active. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--batch 64] [--repeats 5]
"""

import argparse
import time

import numpy as np

from dmevqa import autodiff as ad
from dmevqa import kernels, losses
from dmevqa import model as vm
from dmevqa.config import ModelConfig
from dmevqa.kernels import numpy_backend

try:
    from dmevqa.kernels import numba_backend
except ImportError:
    numba_backend = None

KERNEL_NAMES = ("conv2d_forward", "conv2d_input_grad", "conv2d_weight_grad",
                "maxpool_forward", "maxpool_backward")


def median_ms(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def conv_cases(batch):
    # the default model's three stages on 64x64 inputs, already padded by 1
    rng = np.random.default_rng(0)
    cases = []
    for cin, cout, hw in ((1, 16, 64), (16, 32, 32), (32, 64, 16)):
        x_pad = rng.normal(size=(batch, cin, hw + 2, hw + 2)).astype(np.float32)
        w = rng.normal(size=(cout, cin, 3, 3)).astype(np.float32)
        b = np.zeros(cout, dtype=np.float32)
        gout = rng.normal(size=(batch, cout, hw, hw)).astype(np.float32)
        cases.append((f"{cin}x{hw}²->{cout}", x_pad, w, b, gout))
    return cases


def bench_convs(backend, batch, repeats):
    rows = {}
    for label, x_pad, w, b, gout in conv_cases(batch):
        rows[("forward", label)] = median_ms(
            lambda: backend.conv2d_forward(x_pad, w, b, 1), repeats)
        rows[("input_grad", label)] = median_ms(
            lambda: backend.conv2d_input_grad(gout, w, 1, x_pad.shape), repeats)
        rows[("weight_grad", label)] = median_ms(
            lambda: backend.conv2d_weight_grad(gout, x_pad, 1, w.shape), repeats)
    rng = np.random.default_rng(1)
    x = np.ascontiguousarray(rng.normal(size=(batch, 16, 64, 64)).astype(np.float32))
    _, idx = backend.maxpool_forward(x, 2, 2)
    g = rng.normal(size=idx.shape).astype(np.float32)
    rows[("maxpool_fwd", "16x64²")] = median_ms(
        lambda: backend.maxpool_forward(x, 2, 2), repeats)
    rows[("maxpool_bwd", "16x64²")] = median_ms(
        lambda: backend.maxpool_backward(g, idx, 2, 2, x.shape), repeats)
    return rows


def bench_step(backend, batch, repeats):
    """One optimizer-free training step: forward, total loss, backward."""
    for name in KERNEL_NAMES:
        setattr(kernels, name, getattr(backend, name))
    cfg = ModelConfig()
    params = vm.init_params(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    images = rng.random((batch, 1, 64, 64)).astype(np.float32)
    tokens = rng.integers(0, cfg.token_vocab_size, size=(batch, cfg.max_q_len))
    answers = rng.integers(0, cfg.answer_count, size=batch)
    pairs = [(2 * i, 2 * i + 1) for i in range(batch // 4)]
    weights = np.ones(cfg.answer_count)

    def step():
        p, _ = vm.forward_from_params(images, tokens, params, cfg, train=False)
        loss, _, _ = losses.total_loss(p, answers, pairs, 0.5, 1.0, weights)
        for t in params.values():
            t.grad = None
        loss.backward()

    return median_ms(step, repeats)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    backends = [("numpy", numpy_backend)]
    if numba_backend is not None:
        # trigger JIT compilation outside the timed region
        bench_convs(numba_backend, 2, 1)
        backends.insert(0, ("numba", numba_backend))
    else:
        print("numba not importable; timing the numpy backend only")

    results = {name: bench_convs(be, args.batch, args.repeats)
               for name, be in backends}
    keys = list(results[backends[0][0]])
    print(f"\nper-kernel medians, batch={args.batch}, repeats={args.repeats}")
    header = f"{'kernel':<14}{'shape':<14}" + "".join(
        f"{name + ' ms':>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for key in keys:
        row = f"{key[0]:<14}{key[1]:<14}"
        vals = [results[name][key] for name, _ in backends]
        row += "".join(f"{v:>12.2f}" for v in vals)
        if len(vals) == 2:
            row += f"{vals[1] / vals[0]:>9.1f}x"
        print(row)

    print(f"\nfull forward+backward step, default model, batch={args.batch}")
    steps = []
    for name, be in backends:
        ms = bench_step(be, args.batch, args.repeats)
        steps.append(ms)
        print(f"  {name:<6} {ms:8.1f} ms/step")
    if len(steps) == 2:
        print(f"  numba is {steps[1] / steps[0]:.1f}x faster end to end")


if __name__ == "__main__":
    main()
