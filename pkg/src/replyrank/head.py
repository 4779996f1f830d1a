"""Per-candidate scoring, cross-candidate normalization, loss, metrics.

The reasoning vector of candidate i concatenates the pair summary, the
history-consistency vector, and the speaker-consistency vector, in
that order.  A shared weight vector maps each to a logit; a softmax
over the M candidates yields the ranking distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError

PROB_FLOOR = 1e-12


def reasoning_concat(h_summary, h_hist, h_spk):
    """[summary; history; speaker] -> [3d], exactly in that order."""
    if not (h_summary.ndim == h_hist.ndim == h_spk.ndim == 1):
        raise ShapeError("reasoning_concat: inputs must be 1-D")
    if not (h_summary.shape == h_hist.shape == h_spk.shape):
        raise ShapeError(
            f"reasoning_concat: lengths {h_summary.shape}, {h_hist.shape}, "
            f"{h_spk.shape} differ")
    return T.concat_cols([h_summary, h_hist, h_spk])


def candidate_scores(reasoning, w, b, trace=None):
    """Softmax-normalised scores over the M candidates.

    Args:
        reasoning: list of M [3d] vectors.
        w: [3d] scoring weights.
        b: scalar bias.

    Returns:
        [M] probability tensor (max-subtracted softmax).
    """
    m = len(reasoning)
    if m < 2:
        raise ShapeError(f"candidate_scores: need >= 2 candidates, got {m}")
    logits = T.stack_scalars([T.add(T.dot(w, h), b) for h in reasoning])
    ones = np.ones((1, m), dtype=np.uint8)
    probs = T.reshape(T.masked_softmax_rows(T.reshape(logits, (1, m)), ones),
                      (m,))
    if trace is not None:
        trace.append({"kind": "probabilities", "name": "head.scores",
                      "value": probs.data})
    return probs


def nll_terms(prob_tensors, golds):
    """Negative log gold-probability per example.

    Returns (list of scalar tensors, clamp_count).  A gold probability
    below the floor contributes -log(floor) and bumps the counter
    instead of producing -inf.
    """
    terms = []
    clamped = 0
    for probs, gold in zip(prob_tensors, golds):
        gold = int(gold)
        if not 0 <= gold < probs.shape[0]:
            raise ShapeError(f"gold index {gold} out of range {probs.shape[0]}")
        p_gold = T.pick(probs, gold)
        if float(p_gold.data) < PROB_FLOOR:
            clamped += 1
        terms.append(T.scale(T.log_clamped(p_gold, PROB_FLOOR), -1.0))
    return terms, clamped


def mean_nll(prob_tensors, golds):
    """Mean negative log-likelihood over a batch; see nll_terms."""
    terms, clamped = nll_terms(prob_tensors, golds)
    total = T.sum_all(T.stack_scalars(terms))
    return T.scale(total, 1.0 / len(terms)), clamped


@dataclass
class RankingReport:
    r_at_1: float
    r_at_2: float
    mrr: float
    n: int
    per_example: list

    def to_dict(self):
        return {"r_at_1": self.r_at_1, "r_at_2": self.r_at_2,
                "mrr": self.mrr, "n": self.n,
                "per_example": self.per_example}


def rank_of_gold(probs, gold):
    """1-based rank of the gold candidate, ties to the lowest index.

    A candidate outranks gold if its probability is strictly higher,
    or equal with a lower original index.
    """
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return order.index(gold) + 1, order[0]


def rank_and_report(prob_rows, golds):
    """Aggregate ranking metrics over examples.

    Args:
        prob_rows: sequence of length-M probability vectors.
        golds: gold indices, one per example.

    Returns:
        RankingReport with R@1, R@2, MRR and per-example detail.
    """
    n = len(prob_rows)
    if n == 0:
        raise ShapeError("rank_and_report: no examples")
    hits1 = hits2 = 0
    rr_sum = 0.0
    per_example = []
    for probs, gold in zip(prob_rows, golds):
        gold = int(gold)
        if gold < 0:
            raise ShapeError("rank_and_report: example without gold index")
        rank, pred = rank_of_gold(list(map(float, probs)), gold)
        hits1 += rank == 1
        hits2 += rank <= 2
        rr_sum += 1.0 / rank
        per_example.append({"probs": [float(p) for p in probs],
                            "pred": int(pred), "gold": gold, "rank": rank})
    return RankingReport(r_at_1=hits1 / n, r_at_2=hits2 / n,
                         mrr=rr_sum / n, n=n, per_example=per_example)
