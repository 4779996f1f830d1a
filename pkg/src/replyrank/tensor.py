"""Dense float64 tensors with reverse-mode differentiation on a tape.

The op set is exactly what the ranking model's forward pass needs:
matrix products, masked row softmax, elementwise activations, gated
arithmetic, column concatenation, row gather/pooling, layer norm, and
a handful of scalar reductions for the loss.

A :class:`Tape` records one forward pass.  Ops applied to tape-bound
tensors append a node with a backward closure; ops on unbound tensors
just compute values (useful for inference, where no gradients are
needed).  Mixing tensors from two different tapes is an error; mixing
a bound tensor with an unbound constant treats the constant as fixed.

Backward discipline: gradient arrays are never mutated in place, so a
closure may hand back views (e.g. reshapes) of the upstream gradient.
Tapes are per-forward-pass and discarded after ``backward``.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K
from .errors import MaskError, ShapeError

_LN_EPS = 1e-5


def _as_f64(values):
    # np.ascontiguousarray would promote 0-d to 1-D; scalars must stay 0-d
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


def _as_mask(mask):
    return np.ascontiguousarray(mask, dtype=np.uint8)


class Tensor:
    """A dense float64 array, optionally bound to a gradient tape."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, values, tape=None, node=None):
        self.data = values if isinstance(values, np.ndarray) and values.dtype == np.float64 \
            and values.flags["C_CONTIGUOUS"] else _as_f64(values)
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" node={self.node}" if self.tape is not None else ""
        return f"Tensor(shape={self.data.shape}{tag})"


class Tape:
    """Ordered record of one forward pass.

    Nodes are appended in execution order, so inputs always precede the
    ops that consume them and the backward walk is a single reverse
    sweep.  ``watch`` registers a parameter tensor as a leaf (memoised
    per tensor identity, so repeated uses share one node).
    """

    __slots__ = ("parents", "backs", "shapes", "_watched", "_views")

    def __init__(self):
        self.parents = []
        self.backs = []
        self.shapes = []
        self._watched = {}
        self._views = {}

    def __len__(self):
        return len(self.parents)

    def _emit(self, data, parents, back):
        self.parents.append(parents)
        self.backs.append(back)
        self.shapes.append(data.shape)
        return Tensor(data, self, len(self.parents) - 1)

    def watch(self, t):
        """Register ``t`` as a leaf and return a tape-bound view of it.

        Memoised per tensor identity; the watched tensor is kept alive
        by the tape so its id cannot be recycled mid-pass.
        """
        key = id(t)
        hit = self._views.get(key)
        if hit is not None:
            return hit[1]
        t_data = t.data if isinstance(t, Tensor) else _as_f64(t)
        view = self._emit(t_data, (), None)
        self._watched[key] = view.node
        self._views[key] = (t, view)
        return view

    def node_of(self, t):
        """Node id of a tensor on this tape (bound or watched), else None."""
        if isinstance(t, Tensor) and t.tape is self:
            return t.node
        return self._watched.get(id(t))

    @property
    def watched_nodes(self):
        return list(self._watched.values())


def _tape_of(*ts):
    tape = None
    for t in ts:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ShapeError("operands belong to different tapes")
            tape = t.tape
    return tape


def _pid(tape, t):
    """Parent id of t on tape; -1 marks a constant (no gradient flows)."""
    return t.node if t.tape is tape and t.node is not None else -1


def backward(loss):
    """Accumulate d(loss)/d(node) for every node reached from ``loss``.

    Returns a dict {node_id -> ndarray}.  Watched leaves that the loss
    does not depend on get explicit zero gradients.
    """
    if not isinstance(loss, Tensor) or loss.tape is None:
        raise ShapeError("backward requires a tape-bound tensor")
    if loss.data.shape != ():
        raise ShapeError(f"backward requires a scalar, got shape {loss.data.shape}")
    tape = loss.tape
    grads = [None] * len(tape)
    grads[loss.node] = np.ones(())
    for nid in range(loss.node, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        back = tape.backs[nid]
        if back is None:
            continue
        for pid, pg in zip(tape.parents[nid], back(g)):
            if pid < 0 or pg is None:
                continue
            grads[pid] = pg if grads[pid] is None else grads[pid] + pg
    out = {nid: g for nid, g in enumerate(grads) if g is not None}
    for nid in tape.watched_nodes:
        if nid not in out:
            out[nid] = np.zeros(tape.shapes[nid])
    return out


# ---------------------------------------------------------------------------
# binary / broadcast arithmetic


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a, b):
    _same_shape(a, b, "add")
    tape = _tape_of(a, b)
    data = a.data + b.data
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (_pid(tape, a), _pid(tape, b)), lambda g: (g, g))


def sub(a, b):
    _same_shape(a, b, "sub")
    tape = _tape_of(a, b)
    data = a.data - b.data
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (_pid(tape, a), _pid(tape, b)), lambda g: (g, -g))


def mul(a, b):
    _same_shape(a, b, "mul")
    tape = _tape_of(a, b)
    data = a.data * b.data
    if tape is None:
        return Tensor(data)
    ad, bd = a.data, b.data
    return tape._emit(data, (_pid(tape, a), _pid(tape, b)),
                      lambda g: (g * bd, g * ad))


def add_rowvec(a, v):
    """a[m x n] + v[n], v added to every row (bias add)."""
    if a.ndim != 2 or v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec: shapes {a.shape} and {v.shape} incompatible")
    tape = _tape_of(a, v)
    data = a.data + v.data
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (_pid(tape, a), _pid(tape, v)),
                      lambda g: (g, g.sum(axis=0)))


def add_colvec(a, u):
    """a[m x n] + u[m], u added to every column."""
    if a.ndim != 2 or u.ndim != 1 or a.shape[0] != u.shape[0]:
        raise ShapeError(f"add_colvec: shapes {a.shape} and {u.shape} incompatible")
    tape = _tape_of(a, u)
    data = a.data + u.data[:, None]
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (_pid(tape, a), _pid(tape, u)),
                      lambda g: (g, g.sum(axis=1)))


def mul_rowvec(a, v):
    """a[m x n] * v[n], every row scaled elementwise by v."""
    if a.ndim != 2 or v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise ShapeError(f"mul_rowvec: shapes {a.shape} and {v.shape} incompatible")
    tape = _tape_of(a, v)
    data = a.data * v.data
    if tape is None:
        return Tensor(data)
    ad, vd = a.data, v.data
    return tape._emit(data, (_pid(tape, a), _pid(tape, v)),
                      lambda g: (g * vd, (g * ad).sum(axis=0)))


def scale(a, c):
    """Multiply by a fixed Python float."""
    c = float(c)
    tape = a.tape
    data = a.data * c
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (a.node,), lambda g: (g * c,))


def mul_const(a, arr):
    """Elementwise multiply by a fixed array (dropout masks, row zeroing).

    ``arr`` may broadcast against ``a`` as long as the result keeps
    ``a``'s shape.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if np.broadcast_shapes(a.shape, arr.shape) != a.shape:
        raise ShapeError(f"mul_const: {arr.shape} does not broadcast into {a.shape}")
    tape = a.tape
    data = a.data * arr
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (a.node,), lambda g: (g * arr,))


# ---------------------------------------------------------------------------
# activations


def tanh(a):
    tape = a.tape
    y = K.tanh_fwd(a.data.reshape(-1)).reshape(a.shape)
    if tape is None:
        return Tensor(y)
    return tape._emit(y, (a.node,), lambda g: (
        K.tanh_grad(y.reshape(-1), np.ascontiguousarray(g).reshape(-1)).reshape(a.shape),))


def sigmoid(a):
    tape = a.tape
    y = K.sigmoid_fwd(a.data.reshape(-1)).reshape(a.shape)
    if tape is None:
        return Tensor(y)
    return tape._emit(y, (a.node,), lambda g: (
        K.sigmoid_grad(y.reshape(-1), np.ascontiguousarray(g).reshape(-1)).reshape(a.shape),))


def relu(a):
    tape = a.tape
    y = K.relu_fwd(a.data.reshape(-1)).reshape(a.shape)
    if tape is None:
        return Tensor(y)
    return tape._emit(y, (a.node,), lambda g: (
        K.relu_grad(y.reshape(-1), np.ascontiguousarray(g).reshape(-1)).reshape(a.shape),))


def elementwise(op, a, b=None):
    """Name-dispatched elementwise op: tanh|sigmoid|relu|mul|sub|add."""
    unary = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}
    binary = {"mul": mul, "sub": sub, "add": add}
    if op in unary:
        if b is not None:
            raise ShapeError(f"{op} is unary")
        return unary[op](a)
    if op in binary:
        if b is None:
            raise ShapeError(f"{op} is binary")
        return binary[op](a, b)
    raise ShapeError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# matrix products


def matmul(a, b):
    """a @ b for 2-D x 2-D, or 1-D x 2-D (row-vector convention)."""
    if b.ndim != 2:
        raise ShapeError(f"matmul: right operand must be 2-D, got {b.shape}")
    vec = a.ndim == 1
    if not vec and a.ndim != 2:
        raise ShapeError(f"matmul: left operand must be 1-D or 2-D, got {a.shape}")
    if (a.shape[0] if vec else a.shape[1]) != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    tape = _tape_of(a, b)
    a2 = a.data.reshape(1, -1) if vec else a.data
    out = K.matmul(a2, b.data)
    data = out.reshape(-1) if vec else out
    if tape is None:
        return Tensor(data)
    pa, pb = _pid(tape, a), _pid(tape, b)
    bd = b.data

    def back(g):
        g2 = np.ascontiguousarray(g.reshape(1, -1) if vec else g)
        ga = K.matmul_tb(g2, bd) if pa >= 0 else None
        if ga is not None and vec:
            ga = ga.reshape(-1)
        gb = K.matmul_ta(a2, g2) if pb >= 0 else None
        return ga, gb

    return tape._emit(data, (pa, pb), back)


def matmul_tb(a, b):
    """a @ b.T for 2-D operands (avoids materialising the transpose)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"matmul_tb: shapes {a.shape} and {b.shape} incompatible")
    tape = _tape_of(a, b)
    data = K.matmul_tb(a.data, b.data)
    if tape is None:
        return Tensor(data)
    pa, pb = _pid(tape, a), _pid(tape, b)
    ad, bd = a.data, b.data

    def back(g):
        g = np.ascontiguousarray(g)
        ga = K.matmul(g, bd) if pa >= 0 else None
        gb = K.matmul_ta(g, ad) if pb >= 0 else None
        return ga, gb

    return tape._emit(data, (pa, pb), back)


def dot(a, b):
    """Inner product of two 1-D tensors, returning a scalar."""
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} incompatible")
    tape = _tape_of(a, b)
    data = np.asarray(a.data @ b.data)
    if tape is None:
        return Tensor(data)
    ad, bd = a.data, b.data
    return tape._emit(data, (_pid(tape, a), _pid(tape, b)),
                      lambda g: (g * bd, g * ad))


# ---------------------------------------------------------------------------
# masked softmax / pooling


def masked_softmax_rows(x, mask):
    """Row-stochastic softmax over valid entries; invalid entries exactly 0.

    Args:
        x: [m x n] logits.
        mask: [m x n] validity (bool/uint8); every row needs >=1 valid entry.
    """
    if x.ndim != 2:
        raise ShapeError(f"masked_softmax_rows: need 2-D logits, got {x.shape}")
    m = _as_mask(mask)
    if m.shape != x.shape:
        raise ShapeError(f"masked_softmax_rows: mask {m.shape} vs logits {x.shape}")
    if not m.any(axis=1).all():
        raise MaskError("masked_softmax_rows: a row has no valid entries")
    tape = x.tape
    y = K.softmax_rows(x.data, m)
    if tape is None:
        return Tensor(y)
    return tape._emit(y, (x.node,), lambda g: (
        K.softmax_rows_grad(y, np.ascontiguousarray(g), m),))


def masked_row_max_pool(x, row_mask):
    """Column-wise max over valid rows, returning a [d] vector.

    The gradient flows only to the argmax row per column; ties go to
    the lowest row index.
    """
    if x.ndim != 2:
        raise ShapeError(f"masked_row_max_pool: need 2-D input, got {x.shape}")
    rm = _as_mask(row_mask)
    if rm.shape != (x.shape[0],):
        raise ShapeError(f"masked_row_max_pool: row mask {rm.shape} vs input {x.shape}")
    if not rm.any():
        raise MaskError("masked_row_max_pool: no valid rows")
    tape = x.tape
    out, arg = K.maxpool_rows(x.data, rm)
    if tape is None:
        return Tensor(out)
    nrows = x.shape[0]
    return tape._emit(out, (x.node,), lambda g: (
        K.maxpool_rows_grad(np.ascontiguousarray(g), arg, nrows),))


# ---------------------------------------------------------------------------
# shape plumbing


def concat_cols(parts):
    """Concatenate along the last axis: 2-D parts sharing rows, or 1-D parts."""
    if not parts:
        raise ShapeError("concat_cols: empty part list")
    nd = parts[0].ndim
    if any(p.ndim != nd for p in parts) or nd not in (1, 2):
        raise ShapeError("concat_cols: parts must be all 1-D or all 2-D")
    if nd == 2 and any(p.shape[0] != parts[0].shape[0] for p in parts):
        raise ShapeError(
            f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    tape = _tape_of(*parts)
    data = np.concatenate([p.data for p in parts], axis=-1)
    if tape is None:
        return Tensor(data)
    widths = [p.shape[-1] for p in parts]
    pids = tuple(_pid(tape, p) for p in parts)

    def back(g):
        out, at = [], 0
        for w in widths:
            out.append(g[..., at:at + w])
            at += w
        return tuple(out)

    return tape._emit(data, pids, back)


def slice_cols(x, start, stop):
    """Columns [start, stop) of a 2-D tensor."""
    if x.ndim != 2:
        raise ShapeError(f"slice_cols: need 2-D input, got {x.shape}")
    tape = x.tape
    data = np.ascontiguousarray(x.data[:, start:stop])
    if tape is None:
        return Tensor(data)
    shape = x.shape

    def back(g):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return tape._emit(data, (x.node,), back)


def slice_rows(x, start, stop):
    """Rows [start, stop) of a 2-D tensor."""
    if x.ndim != 2:
        raise ShapeError(f"slice_rows: need 2-D input, got {x.shape}")
    tape = x.tape
    data = np.ascontiguousarray(x.data[start:stop])
    if tape is None:
        return Tensor(data)
    shape = x.shape

    def back(g):
        gx = np.zeros(shape)
        gx[start:stop] = g
        return (gx,)

    return tape._emit(data, (x.node,), back)


def slice_vec(x, start, stop):
    """Entries [start, stop) of a 1-D tensor."""
    if x.ndim != 1:
        raise ShapeError(f"slice_vec: need 1-D input, got {x.shape}")
    tape = x.tape
    data = np.ascontiguousarray(x.data[start:stop])
    if tape is None:
        return Tensor(data)
    n = x.shape[0]

    def back(g):
        gx = np.zeros(n)
        gx[start:stop] = g
        return (gx,)

    return tape._emit(data, (x.node,), back)


def gather_rows(x, ids):
    """Rows ``x[ids]`` of a 2-D tensor; repeated ids accumulate gradient."""
    if x.ndim != 2:
        raise ShapeError(f"gather_rows: need 2-D input, got {x.shape}")
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError("gather_rows: ids must be 1-D")
    tape = x.tape
    data = np.ascontiguousarray(x.data[ids])
    if tape is None:
        return Tensor(data)
    shape = x.shape

    def back(g):
        gx = np.zeros(shape)
        K.scatter_add_rows(gx, ids, np.ascontiguousarray(g))
        return (gx,)

    return tape._emit(data, (x.node,), back)


def reshape(x, shape):
    tape = x.tape
    data = x.data.reshape(shape)
    if tape is None:
        return Tensor(data)
    old = x.shape
    return tape._emit(data, (x.node,), lambda g: (g.reshape(old),))


def stack_scalars(parts):
    """Stack scalar tensors into a 1-D vector."""
    if any(p.ndim != 0 for p in parts):
        raise ShapeError("stack_scalars: all parts must be scalars")
    tape = _tape_of(*parts)
    data = np.array([float(p.data) for p in parts])
    if tape is None:
        return Tensor(data)
    pids = tuple(_pid(tape, p) for p in parts)
    return tape._emit(data, pids,
                      lambda g: tuple(np.asarray(g[i]) for i in range(len(pids))))


def pick(x, index):
    """Scalar entry ``x[index]`` of a 1-D tensor."""
    if x.ndim != 1:
        raise ShapeError(f"pick: need 1-D input, got {x.shape}")
    index = int(index)
    tape = x.tape
    data = np.asarray(x.data[index])
    if tape is None:
        return Tensor(data)
    n = x.shape[0]

    def back(g):
        gx = np.zeros(n)
        gx[index] = float(g)
        return (gx,)

    return tape._emit(data, (x.node,), back)


# ---------------------------------------------------------------------------
# reductions and scalar math


def sum_all(x):
    tape = x.tape
    data = np.asarray(x.data.sum())
    if tape is None:
        return Tensor(data)
    shape = x.shape
    return tape._emit(data, (x.node,), lambda g: (np.full(shape, float(g)),))


def sum_squares(x):
    """Sum of squared entries (the building block of the L2 penalty)."""
    tape = x.tape
    data = np.asarray((x.data * x.data).sum())
    if tape is None:
        return Tensor(data)
    xd = x.data
    return tape._emit(data, (x.node,), lambda g: (2.0 * float(g) * xd,))


def log_clamped(x, floor=1e-12):
    """log(max(x, floor)) for a scalar; gradient is 0 when clamped."""
    if x.ndim != 0:
        raise ShapeError(f"log_clamped: need a scalar, got {x.shape}")
    v = float(x.data)
    clamped = v < floor
    data = np.asarray(np.log(floor if clamped else v))
    tape = x.tape
    if tape is None:
        return Tensor(data)
    return tape._emit(data, (x.node,),
                      lambda g: (np.asarray(0.0 if clamped else float(g) / v),))


def layer_norm(x, gain, bias, eps=_LN_EPS):
    """Per-row layer normalisation with learned gain and bias."""
    if x.ndim != 2 or gain.ndim != 1 or bias.ndim != 1 \
            or gain.shape[0] != x.shape[1] or bias.shape[0] != x.shape[1]:
        raise ShapeError(
            f"layer_norm: shapes {x.shape}, {gain.shape}, {bias.shape} incompatible")
    tape = _tape_of(x, gain, bias)
    y, xhat, inv_std = K.layernorm_rows(x.data, gain.data, bias.data, eps)
    if tape is None:
        return Tensor(y)
    pg, pb = _pid(tape, gain), _pid(tape, bias)
    gain_d = gain.data

    def back(g):
        gx, dgain, dbias = K.layernorm_rows_grad(
            np.ascontiguousarray(g), xhat, inv_std, gain_d)
        return gx, (dgain if pg >= 0 else None), (dbias if pb >= 0 else None)

    return tape._emit(y, (_pid(tape, x), pg, pb), back)
