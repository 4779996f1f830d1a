"""Parameter construction and the end-to-end forward pass.

Parameters live in a flat dict keyed by canonical dotted names, which
is also the checkpoint order (sorted by name).  Weight matrices use
uniform Glorot init (+-sqrt(6/(fan_in+fan_out))), embeddings are
N(0, emb_init_std^2), biases start at 0 and layer-norm gains at 1.
The feed-forward hidden width is fixed at 2d.

Ablation flags never change which parameters exist; they skip the
block's computation and zero its segment of the reasoning vector, so
ablated blocks receive exactly zero gradient.  Because of that, the L2
penalty sums over the ACTIVE blocks only: penalising parameters that
cannot affect the data term would re-introduce nonzero gradients into
a removed component.  Variant choice does change shapes (it is an
architectural substitution): coarse_grained drops cmp.w1 and narrows
cmp.w2; simple_add and no_gate have no gate weights; no_source's gate
weight is [d x d].
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .comparison import GATED_VARIANTS, compare_all
from .consistency import history_consistency, speaker_consistency
from .corpus import speaker_history_rows
from .encoder import encode_all_candidates
from .head import candidate_scores, mean_nll, reasoning_concat


def _glorot(rng, shape):
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg, vocab_size, rng):
    """Create all trainable parameters for a config as {name: Tensor}."""
    d = cfg.d
    p = {}
    p["embed.tokens"] = rng.normal(0.0, cfg.emb_init_std, size=(vocab_size, d))
    p["embed.pos"] = rng.normal(0.0, cfg.emb_init_std, size=(cfg.joint_len, d))
    hidden = 2 * d
    for i in range(cfg.n_layers):
        pre = f"enc{i}."
        for w in ("wq", "wk", "wv", "wo"):
            p[pre + w] = _glorot(rng, (d, d))
        for b in ("bq", "bk", "bv", "bo"):
            p[pre + b] = np.zeros(d)
        p[pre + "ln1.g"] = np.ones(d)
        p[pre + "ln1.b"] = np.zeros(d)
        p[pre + "ffn.w1"] = _glorot(rng, (d, hidden))
        p[pre + "ffn.b1"] = np.zeros(hidden)
        p[pre + "ffn.w2"] = _glorot(rng, (hidden, d))
        p[pre + "ffn.b2"] = np.zeros(d)
        p[pre + "ln2.g"] = np.ones(d)
        p[pre + "ln2.b"] = np.zeros(d)

    variant = cfg.comparison_variant
    if variant != "coarse_grained":
        p["cmp.w1"] = _glorot(rng, (3 * d,))
    part_width = d if variant == "coarse_grained" else 2 * d
    p["cmp.w2"] = _glorot(rng, (part_width * (cfg.m - 1), d))
    p["cmp.b2"] = np.zeros(d)
    if variant in GATED_VARIANTS:
        p["cmp.w3"] = _glorot(rng, (d if variant == "no_source" else 2 * d, d))
        p["cmp.b3"] = np.zeros(d)

    for block in ("hist", "spk"):
        for w in ("w_ab", "w_ba", "proj_a", "proj_b", "gate_x", "gate_y"):
            p[f"{block}.{w}"] = _glorot(rng, (d, d))
        p[f"{block}.gate_b"] = np.zeros(d)

    p["head.w"] = _glorot(rng, (3 * d,))
    p["head.b"] = np.zeros(())
    return {name: T.Tensor(arr) for name, arr in p.items()}


def active_param_names(cfg, params):
    """Names of parameters the configured forward pass actually uses."""
    active = set(params)
    if not cfg.use_comparison:
        active -= {n for n in active if n.startswith("cmp.")}
    if not cfg.use_history:
        active -= {n for n in active if n.startswith("hist.")}
    if not cfg.use_speaker:
        active -= {n for n in active if n.startswith("spk.")}
    return active


def count_params(params):
    return sum(int(np.prod(t.data.shape)) if t.data.shape else 1
               for t in params.values())


def bind(params, tape):
    """Watch every parameter on a tape; returns bound views."""
    return {name: tape.watch(t) for name, t in params.items()}


def make_dropout_masks(cfg, rng, n_candidates):
    """Inverted-dropout multipliers for one example's encoder outputs."""
    if cfg.dropout <= 0.0:
        return None
    keep = 1.0 - cfg.dropout
    shape = (cfg.joint_len, cfg.d)
    return [(rng.random(shape) < keep).astype(np.float64) / keep
            for _ in range(n_candidates)]


def score_from_encodings(pt, cfg, encs, ctx_mask, cand_mask, spk_rows,
                         trace=None):
    """Comparison + consistency + scoring, given per-pair encodings.

    Args:
        encs: M triples (H_ctx, H_cand, h_summary) as the encoder
            produces them.
        spk_rows: responder row mask over context positions, fallback
            already applied.

    Returns:
        probability tensor [M].
    """
    h_cands = [e[1] for e in encs]
    if cfg.use_comparison:
        fused = compare_all(h_cands, cand_mask, pt, cfg, trace=trace)
    else:
        fused = h_cands
    zero_d = T.Tensor(np.zeros(cfg.d))
    reasoning = []
    for i, (h_ctx, _, h_sum) in enumerate(encs):
        if cfg.use_history:
            h_hist = history_consistency(h_ctx, ctx_mask, fused[i],
                                         cand_mask[i], pt, trace=trace,
                                         name=f"history[{i}]")
        else:
            h_hist = zero_d
        if cfg.use_speaker:
            h_spk = speaker_consistency(h_ctx, spk_rows, fused[i],
                                        cand_mask[i], pt, trace=trace,
                                        name=f"speaker[{i}]")
        else:
            h_spk = zero_d
        reasoning.append(reasoning_concat(h_sum, h_hist, h_spk))
    return candidate_scores(reasoning, pt["head.w"], pt["head.b"],
                            trace=trace)


def forward_example(pt, cfg, batch, idx, drop_masks=None, trace=None):
    """Probability tensor [M] for one example of a batch."""
    encs = encode_all_candidates(pt, cfg,
                                 batch.context_ids[idx],
                                 batch.context_mask[idx],
                                 batch.candidate_ids[idx],
                                 batch.candidate_mask[idx],
                                 drop_masks=drop_masks, trace=trace)
    spk_rows, _ = speaker_history_rows(batch, idx)
    return score_from_encodings(pt, cfg, encs, batch.context_mask[idx],
                                batch.candidate_mask[idx], spk_rows,
                                trace=trace)


def l2_penalty(pt, cfg, params):
    """lambda * sum of squares over the active parameters (sorted order)."""
    names = sorted(active_param_names(cfg, params))
    total = T.stack_scalars([T.sum_squares(pt[n]) for n in names])
    return T.scale(T.sum_all(total), cfg.l2_lambda)


def batch_loss(params, cfg, batch, dropout_rng=None, trace=None):
    """One training forward pass over a batch.

    Dropout masks are drawn from ``dropout_rng`` in ascending example
    and candidate order (pass None for evaluation).

    Returns:
        (loss Tensor, tape, info) where info carries the detached
        probability matrix [B x M], the NLL value, and the clamp count.
    """
    tape = T.Tape()
    pt = bind(params, tape)
    prob_tensors = []
    for idx in range(batch.size):
        dm = None
        if dropout_rng is not None:
            dm = make_dropout_masks(cfg, dropout_rng, batch.n_candidates)
        prob_tensors.append(forward_example(pt, cfg, batch, idx,
                                            drop_masks=dm, trace=trace))
    nll, clamped = mean_nll(prob_tensors, batch.gold)
    loss = T.add(nll, l2_penalty(pt, cfg, params)) if cfg.l2_lambda > 0 else nll
    info = {"probs": np.stack([p.data for p in prob_tensors]),
            "nll": float(nll.data), "n_clamped": clamped}
    return loss, tape, info


def infer_probs(params, cfg, batch):
    """Probability matrix [B x M] with no tape and dropout disabled."""
    rows = []
    for idx in range(batch.size):
        rows.append(forward_example(params, cfg, batch, idx).data)
    return np.stack(rows)
