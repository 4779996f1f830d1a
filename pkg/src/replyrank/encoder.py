"""Joint self-attention encoder over [summary slot; context; candidate].

Each candidate is encoded together with the full context so that
cross-attention between the two can shape both representations.  The
first position is a learned summary token whose final hidden state
serves as the pair's semantic vector.

Layers are standard post-norm transformer blocks: multi-head self
attention with key-side PAD masking, residual + layer norm, then a
two-layer relu feed-forward, residual + layer norm.  A zero-layer
configuration therefore degrades to embedding + position lookup, which
tests use as the cheapest encoder.

Parameters are passed as a dict of (possibly tape-bound) tensors with
canonical names; see ``model.init_params`` for shapes and
initialization.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .corpus import SUM_ID
from .errors import ShapeError


def _attend(pt, cfg, layer, x, key_mat, trace):
    """Multi-head self-attention sublayer (pre-residual output)."""
    p = f"enc{layer}."
    q = T.add_rowvec(T.matmul(x, pt[p + "wq"]), pt[p + "bq"])
    k = T.add_rowvec(T.matmul(x, pt[p + "wk"]), pt[p + "bk"])
    v = T.add_rowvec(T.matmul(x, pt[p + "wv"]), pt[p + "bv"])
    dh = cfg.d // cfg.n_heads
    inv_scale = 1.0 / math.sqrt(dh)
    mixed = []
    for h in range(cfg.n_heads):
        lo, hi = h * dh, (h + 1) * dh
        scores = T.scale(T.matmul_tb(T.slice_cols(q, lo, hi),
                                     T.slice_cols(k, lo, hi)), inv_scale)
        att = T.masked_softmax_rows(scores, key_mat)
        if trace is not None:
            trace.append({"kind": "attention",
                          "name": f"encoder.layer{layer}.head{h}",
                          "weights": att.data, "key_mask": key_mat})
        mixed.append(T.matmul(att, T.slice_cols(v, lo, hi)))
    return T.add_rowvec(T.matmul(T.concat_cols(mixed), pt[p + "wo"]),
                        pt[p + "bo"])


def _feed_forward(pt, layer, x):
    p = f"enc{layer}."
    hidden = T.relu(T.add_rowvec(T.matmul(x, pt[p + "ffn.w1"]), pt[p + "ffn.b1"]))
    return T.add_rowvec(T.matmul(hidden, pt[p + "ffn.w2"]), pt[p + "ffn.b2"])


def encode_pair(pt, cfg, ctx_ids, ctx_mask, cand_ids, cand_mask,
                drop_mask=None, trace=None):
    """Encode one (context, candidate) pair jointly.

    Args:
        pt: parameter dict (tape-bound for training).
        ctx_ids/ctx_mask: int64/uint8 rows of length L_ctx.
        cand_ids/cand_mask: int64/uint8 rows of length L_resp.
        drop_mask: optional precomputed inverted-dropout multiplier for
            the final hidden states, shape [joint_len x d].
        trace: optional list collecting attention records.

    Returns:
        (H_ctx [L_ctx x d], H_cand [L_resp x d], h_summary [d]).
    """
    n_ctx = ctx_ids.shape[0]
    ids = np.concatenate(([SUM_ID], ctx_ids, cand_ids)).astype(np.int64)
    valid = np.concatenate(([1], ctx_mask, cand_mask)).astype(np.uint8)
    length = ids.shape[0]
    n_pos = pt["embed.pos"].shape[0]
    if length > n_pos:
        raise ShapeError(
            f"input length {length} exceeds positional table size {n_pos}")
    x = T.add(T.gather_rows(pt["embed.tokens"], ids),
              T.slice_rows(pt["embed.pos"], 0, length))
    key_mat = np.ascontiguousarray(np.broadcast_to(valid[None, :],
                                                   (length, length)))
    for layer in range(cfg.n_layers):
        p = f"enc{layer}."
        x = T.layer_norm(T.add(x, _attend(pt, cfg, layer, x, key_mat, trace)),
                         pt[p + "ln1.g"], pt[p + "ln1.b"])
        x = T.layer_norm(T.add(x, _feed_forward(pt, layer, x)),
                         pt[p + "ln2.g"], pt[p + "ln2.b"])
    if drop_mask is not None:
        x = T.mul_const(x, drop_mask)
    h_ctx = T.slice_rows(x, 1, 1 + n_ctx)
    h_cand = T.slice_rows(x, 1 + n_ctx, length)
    h_summary = T.reshape(T.slice_rows(x, 0, 1), (cfg.d,))
    return h_ctx, h_cand, h_summary


def encode_all_candidates(pt, cfg, ctx_ids, ctx_mask, cand_ids, cand_mask,
                          drop_masks=None, trace=None):
    """Run encode_pair for each of the M candidates of one example.

    The context representation is recomputed per candidate because the
    candidate participates in the joint attention.
    """
    m = cand_ids.shape[0]
    out = []
    for i in range(m):
        dm = None if drop_masks is None else drop_masks[i]
        out.append(encode_pair(pt, cfg, ctx_ids, ctx_mask,
                               cand_ids[i], cand_mask[i],
                               drop_mask=dm, trace=trace))
    return out
