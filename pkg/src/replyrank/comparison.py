"""Cross-candidate comparison: each candidate attends over every other
candidate, the aligned difference/product features are projected to a
response-level summary, and a sigmoid gate fuses that summary back
into the candidate representation.

Variants (config key ``comparison_variant``):

    full            word-level attention, correlation features, gated fusion
    coarse_grained  plain dot-product attention, aligned rows used directly
                    (no difference/product doubling, narrower projection)
    simple_add      fusion replaced by E + H
    no_source       gate computed from the comparison summary E only
    no_gate         fusion output is E itself

The concatenation over other candidates uses ascending candidate index
(skipping the candidate itself).  The projection is order-sensitive,
so model scores are not invariant to permuting the candidate list;
duplicate candidates still produce identical outputs by symmetry.

Padding rows are zeroed in E and in the fused output so PAD positions
never leak into downstream matching.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError

# variants whose fusion step uses the learned sigmoid gate; the coarse
# variant only swaps the attention/feature computation, not the fusion
GATED_VARIANTS = ("full", "coarse_grained", "no_source")


def paired_attention(h_ri, h_rj, mask_j, w1, trace=None, name=""):
    """Word-level attention of candidate i over candidate j.

    The logit for positions (m, n) is w1 . [h_m; h_n; h_m * h_n],
    computed as three rank-friendly pieces instead of materialising the
    3d concatenation per cell.  Rows are softmax-normalised over the
    valid positions of j.

    Args:
        h_ri: [m x d] rows of candidate i.
        h_rj: [n x d] rows of candidate j.
        mask_j: [n] validity of j's positions.
        w1: [3d] packed weights (query part, key part, product part).

    Returns:
        [m x n] row-stochastic attention, masked columns exactly 0.
    """
    d = h_ri.shape[1]
    if w1.shape != (3 * d,):
        raise ShapeError(f"paired_attention: w1 {w1.shape} vs 3d = {3 * d}")
    w_q = T.reshape(T.slice_vec(w1, 0, d), (d, 1))
    w_k = T.reshape(T.slice_vec(w1, d, 2 * d), (d, 1))
    w_p = T.slice_vec(w1, 2 * d, 3 * d)
    query_part = T.reshape(T.matmul(h_ri, w_q), (h_ri.shape[0],))
    key_part = T.reshape(T.matmul(h_rj, w_k), (h_rj.shape[0],))
    cross = T.matmul_tb(T.mul_rowvec(h_ri, w_p), h_rj)
    logits = T.add_colvec(T.add_rowvec(cross, key_part), query_part)
    key_mat = np.ascontiguousarray(
        np.broadcast_to(np.asarray(mask_j, dtype=np.uint8)[None, :], logits.shape))
    att = T.masked_softmax_rows(logits, key_mat)
    if trace is not None:
        trace.append({"kind": "attention", "name": name or "comparison.paired",
                      "weights": att.data, "key_mask": key_mat})
    return att


def coarse_attention(h_ri, h_rj, mask_j, trace=None, name=""):
    """Dot-product attention used by the coarse_grained variant."""
    logits = T.matmul_tb(h_ri, h_rj)
    key_mat = np.ascontiguousarray(
        np.broadcast_to(np.asarray(mask_j, dtype=np.uint8)[None, :], logits.shape))
    att = T.masked_softmax_rows(logits, key_mat)
    if trace is not None:
        trace.append({"kind": "attention", "name": name or "comparison.coarse",
                      "weights": att.data, "key_mask": key_mat})
    return att


def paired_correlation(h_ri, att, h_rj):
    """Difference/product features against the aligned other candidate.

    Returns [m x 2d]: first d columns h_ri - att@h_rj, last d columns
    h_ri * (att@h_rj), exactly in that order.
    """
    if h_ri.shape[1] != h_rj.shape[1]:
        raise ShapeError(
            f"paired_correlation: widths {h_ri.shape} vs {h_rj.shape}")
    if att.shape != (h_ri.shape[0], h_rj.shape[0]):
        raise ShapeError(
            f"paired_correlation: attention {att.shape} vs "
            f"{(h_ri.shape[0], h_rj.shape[0])}")
    aligned = T.matmul(att, h_rj)
    return T.concat_cols([T.sub(h_ri, aligned), T.mul(h_ri, aligned)])


def response_level_compare(parts, w2, b2):
    """Project the concatenated per-other-candidate features to [m x d].

    Args:
        parts: M-1 tensors in ascending other-candidate order, equal
            widths.
        w2: [width*(M-1) x d] projection.
        b2: [d] bias.
    """
    if not parts:
        raise ShapeError("response_level_compare: no comparison parts")
    width = parts[0].shape[1]
    if w2.shape[0] % width != 0:
        raise ShapeError(
            f"response_level_compare: w2 rows {w2.shape[0]} not a multiple "
            f"of part width {width}")
    expected = w2.shape[0] // width
    if len(parts) != expected:
        raise ShapeError(
            f"response_level_compare: expected {expected} parts, got {len(parts)}")
    return T.tanh(T.add_rowvec(T.matmul(T.concat_cols(parts), w2), b2))


def gate_fuse(e, h, w3, b3, variant, trace=None, name=""):
    """Fuse comparison summary E with the original representation H.

    full:       g = sigmoid([E; H] @ w3 + b3), out = g*E + (1-g)*H
    no_source:  g = sigmoid(E @ w3 + b3) with w3 restricted to [d x d]
    simple_add: out = E + H
    no_gate:    out = E

    coarse_grained fuses exactly like full; it differs upstream only.
    """
    if e.shape != h.shape:
        raise ShapeError(f"gate_fuse: shapes {e.shape} vs {h.shape}")
    if variant == "no_gate":
        return e
    if variant == "simple_add":
        return T.add(e, h)
    if variant in ("full", "coarse_grained"):
        gate_in = T.concat_cols([e, h])
    elif variant == "no_source":
        gate_in = e
    else:
        raise ShapeError(f"gate_fuse: unknown variant {variant!r}")
    g = T.sigmoid(T.add_rowvec(T.matmul(gate_in, w3), b3))
    one_minus_g = T.sub(T.Tensor(np.ones(g.shape)), g)
    out = T.add(T.mul(g, e), T.mul(one_minus_g, h))
    if trace is not None:
        trace.append({"kind": "gate", "name": name or "comparison.gate",
                      "value": g.data})
        trace.append({"kind": "fusion", "name": name or "comparison.fuse",
                      "a": e.data, "b": h.data, "out": out.data})
    return out


def compare_all(h_cands, cand_masks, pt, cfg, trace=None):
    """Compare every candidate against all others and fuse.

    Args:
        h_cands: M tensors [L_resp x d], one per candidate.
        cand_masks: uint8 [M x L_resp].
        pt: parameter dict with cmp.* entries per the active variant.
        cfg: TrainConfig (reads comparison_variant).

    Returns:
        M tensors [L_resp x d] with PAD rows zeroed.
    """
    variant = cfg.comparison_variant
    m = len(h_cands)
    if m < 2:
        raise ShapeError(f"compare_all: need >= 2 candidates, got {m}")
    out = []
    for i in range(m):
        parts = []
        for j in range(m):
            if j == i:
                continue
            if variant == "coarse_grained":
                att = coarse_attention(
                    h_cands[i], h_cands[j], cand_masks[j], trace,
                    name=f"comparison.pair[{i},{j}]")
                parts.append(T.matmul(att, h_cands[j]))
            else:
                att = paired_attention(
                    h_cands[i], h_cands[j], cand_masks[j], pt["cmp.w1"],
                    trace, name=f"comparison.pair[{i},{j}]")
                parts.append(paired_correlation(h_cands[i], att, h_cands[j]))
        e = response_level_compare(parts, pt["cmp.w2"], pt["cmp.b2"])
        row_keep = np.asarray(cand_masks[i], dtype=np.float64)[:, None]
        e = T.mul_const(e, row_keep)
        fused = gate_fuse(e, h_cands[i],
                          pt.get("cmp.w3"), pt.get("cmp.b3"), variant,
                          trace, name=f"comparison.gate[{i}]")
        if variant != "no_gate":    # no_gate output is e, already zeroed
            fused = T.mul_const(fused, row_keep)
        if trace is not None:
            trace.append({"kind": "compare_E", "name": f"comparison.E[{i}]",
                          "value": e.data, "fused": fused.data})
        out.append(fused)
    return out
