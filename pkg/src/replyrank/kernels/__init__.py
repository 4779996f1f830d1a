"""Numeric kernel dispatch: compiled core when available, numpy otherwise.

The hot inner loops of the forward/backward pass (small matmuls, masked
softmax, pooling, layer norm) live behind this module.  At import time
we pick the compiled Cython core if it was built, else the vectorised
numpy fallback.  ``REPLYRANK_KERNELS=compiled|numpy`` forces a choice
(useful for the benchmark in ``benchmarks/bench_kernels.py`` and for
cross-backend agreement tests).

All kernels operate on C-contiguous float64 arrays; masks are uint8.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import _core as _compiled
except ImportError:
    _compiled = None

_B = None


def available_backends():
    names = ["numpy"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def set_backend(name):
    """Switch the active backend. Returns the previous backend name."""
    global _B
    prev = _B.NAME
    if name == "numpy":
        _B = numpy_backend
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel extension is not built")
        _B = _compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return prev


def backend_name():
    return _B.NAME


def _select_initial():
    global _B
    forced = os.environ.get("REPLYRANK_KERNELS", "").strip().lower()
    if forced in ("", "auto"):
        _B = _compiled if _compiled is not None else numpy_backend
    elif forced == "numpy":
        _B = numpy_backend
    elif forced == "compiled":
        if _compiled is None:
            raise RuntimeError(
                "REPLYRANK_KERNELS=compiled but the extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )
        _B = _compiled
    else:
        raise RuntimeError(f"REPLYRANK_KERNELS={forced!r} not recognised")


_select_initial()


def matmul(a, b):
    return _B.matmul(a, b)


def matmul_ta(a, b):
    return _B.matmul_ta(a, b)


def matmul_tb(a, b):
    return _B.matmul_tb(a, b)


def softmax_rows(x, mask):
    return _B.softmax_rows(x, mask)


def softmax_rows_grad(y, gy, mask):
    return _B.softmax_rows_grad(y, gy, mask)


def tanh_fwd(x):
    return _B.tanh_fwd(x)


def tanh_grad(y, gy):
    return _B.tanh_grad(y, gy)


def sigmoid_fwd(x):
    return _B.sigmoid_fwd(x)


def sigmoid_grad(y, gy):
    return _B.sigmoid_grad(y, gy)


def relu_fwd(x):
    return _B.relu_fwd(x)


def relu_grad(y, gy):
    return _B.relu_grad(y, gy)


def maxpool_rows(x, row_mask):
    return _B.maxpool_rows(x, row_mask)


def maxpool_rows_grad(gy, arg, nrows):
    return _B.maxpool_rows_grad(gy, arg, nrows)


def layernorm_rows(x, gain, bias, eps):
    return _B.layernorm_rows(x, gain, bias, eps)


def layernorm_rows_grad(gy, xhat, inv_std, gain):
    return _B.layernorm_rows_grad(gy, xhat, inv_std, gain)


def scatter_add_rows(out, ids, g):
    return _B.scatter_add_rows(out, ids, g)
