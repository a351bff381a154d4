"""Hot numeric kernels: 2-D convolution and max-pooling, forward and backward.

Two interchangeable backends:

* ``numba_backend`` -- @njit loop kernels, the default when numba imports.
* ``numpy_backend``  -- pure-numpy im2col/gemm fallback.

Set ``DMEVQA_DISABLE_NUMBA=1`` to force the numpy path. Both backends share
the same signatures and produce the same results up to float rounding; see
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

import os

from . import numpy_backend


def _numba_disabled(env: str | None) -> bool:
    return (env or "").strip().lower() in ("1", "true", "yes", "on")


if _numba_disabled(os.environ.get("DMEVQA_DISABLE_NUMBA")):
    _active = numpy_backend
else:
    try:
        from . import numba_backend

        _active = numba_backend
    except ImportError:  # pragma: no cover - exercised only without numba
        _active = numpy_backend

conv2d_forward = _active.conv2d_forward
conv2d_input_grad = _active.conv2d_input_grad
conv2d_weight_grad = _active.conv2d_weight_grad
maxpool_forward = _active.maxpool_forward
maxpool_backward = _active.maxpool_backward


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _active.NAME
