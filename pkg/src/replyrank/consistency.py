"""Bidirectional matching of a fused candidate against dialogue history.

Two instantiations share the machinery: matching against the whole
context, and matching against only the rows the responder spoke (the
speaker's own history).  Each direction applies a bilinear attention
(query side W, key side masked softmax), aligns the other side, and
projects through a relu.  The two directions are then max-pooled over
valid rows and combined by a sigmoid gate into a single [d] vector.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import MaskError


def _masked_bilinear_attention(h_q, w, h_k, mask_k, trace, name):
    logits = T.matmul_tb(T.matmul(h_q, w), h_k)
    key_mat = np.ascontiguousarray(
        np.broadcast_to(np.asarray(mask_k, dtype=np.uint8)[None, :], logits.shape))
    att = T.masked_softmax_rows(logits, key_mat)
    if trace is not None:
        trace.append({"kind": "attention", "name": name,
                      "weights": att.data, "key_mask": key_mat})
    return att


def bidirectional_match(h_a, mask_a, h_b, mask_b, w_ab, w_ba, proj_a, proj_b,
                        trace=None, name="match"):
    """Attend each side over the other and project with a relu.

    a-to-b: A = masked_softmax(h_a @ w_ab @ h_b^T) with key mask from
    b; output relu(A @ h_b @ proj_a), one row per position of a.  The
    b-to-a direction is symmetric with (w_ba, proj_b).

    Returns:
        (h_a_enriched [p x d], h_b_enriched [q x d]), both >= 0.
    """
    mask_a = np.asarray(mask_a, dtype=np.uint8)
    mask_b = np.asarray(mask_b, dtype=np.uint8)
    if not mask_a.any():
        raise MaskError(f"{name}: side a has no valid positions")
    if not mask_b.any():
        raise MaskError(f"{name}: side b has no valid positions")
    att_ab = _masked_bilinear_attention(h_a, w_ab, h_b, mask_b, trace,
                                        f"{name}.a_to_b")
    a_out = T.relu(T.matmul(T.matmul(att_ab, h_b), proj_a))
    att_ba = _masked_bilinear_attention(h_b, w_ba, h_a, mask_a, trace,
                                        f"{name}.b_to_a")
    b_out = T.relu(T.matmul(T.matmul(att_ba, h_a), proj_b))
    return a_out, b_out


def pooled_gate_fuse(h_x, mask_x, h_y, mask_y, w_x, w_y, b, trace=None,
                     name="pool_fuse"):
    """Max-pool both sides over valid rows and gate-combine the vectors.

    g = sigmoid(pool(h_x) @ w_x + pool(h_y) @ w_y + b);
    out = g * pool(h_x) + (1 - g) * pool(h_y).
    """
    e_x = T.masked_row_max_pool(h_x, mask_x)
    e_y = T.masked_row_max_pool(h_y, mask_y)
    g = T.sigmoid(T.add(T.add(T.matmul(e_x, w_x), T.matmul(e_y, w_y)), b))
    one_minus_g = T.sub(T.Tensor(np.ones(g.shape)), g)
    out = T.add(T.mul(g, e_x), T.mul(one_minus_g, e_y))
    if trace is not None:
        trace.append({"kind": "gate", "name": f"{name}.gate", "value": g.data})
        trace.append({"kind": "fusion", "name": f"{name}.fuse",
                      "a": e_x.data, "b": e_y.data, "out": out.data})
    return out


def history_consistency(h_ctx, ctx_mask, h_cand, cand_mask, pt, trace=None,
                        name="history"):
    """Consistency vector of one candidate against the whole context."""
    cand_side, ctx_side = bidirectional_match(
        h_cand, cand_mask, h_ctx, ctx_mask,
        pt["hist.w_ab"], pt["hist.w_ba"], pt["hist.proj_a"], pt["hist.proj_b"],
        trace, name=f"{name}.match")
    return pooled_gate_fuse(cand_side, cand_mask, ctx_side, ctx_mask,
                            pt["hist.gate_x"], pt["hist.gate_y"],
                            pt["hist.gate_b"], trace, name=f"{name}")


def speaker_consistency(h_ctx, speaker_rows, h_cand, cand_mask, pt,
                        trace=None, name="speaker"):
    """Same machinery restricted to the responder's own context rows.

    ``speaker_rows`` comes from corpus.speaker_history_rows, so the
    empty-history fallback has already been applied.
    """
    cand_side, spk_side = bidirectional_match(
        h_cand, cand_mask, h_ctx, speaker_rows,
        pt["spk.w_ab"], pt["spk.w_ba"], pt["spk.proj_a"], pt["spk.proj_b"],
        trace, name=f"{name}.match")
    return pooled_gate_fuse(cand_side, cand_mask, spk_side, speaker_rows,
                            pt["spk.gate_x"], pt["spk.gate_y"],
                            pt["spk.gate_b"], trace, name=f"{name}")
