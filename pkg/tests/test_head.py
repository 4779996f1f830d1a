"""Scoring head, NLL hand cases, and ranking metrics."""

import math

import numpy as np
import pytest
from conftest import make_pipeline_params, tensorize

from replyrank import model
from replyrank import tensor as T
from replyrank.config import TrainConfig
from replyrank.errors import ShapeError
from replyrank.head import (PROB_FLOOR, candidate_scores, mean_nll, nll_terms,
                            rank_and_report, rank_of_gold, reasoning_concat)


def vec(*vals):
    return T.Tensor(np.asarray(vals, dtype=np.float64))


class TestReasoningConcat:
    def test_order(self):
        out = reasoning_concat(vec(1.0, 2.0), vec(3.0, 4.0), vec(5.0, 6.0))
        np.testing.assert_array_equal(out.data, [1, 2, 3, 4, 5, 6])

    def test_rejects_matrix(self):
        with pytest.raises(ShapeError, match="1-D"):
            reasoning_concat(T.Tensor(np.zeros((2, 2))), vec(0.0, 0.0),
                             vec(0.0, 0.0))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ShapeError, match="lengths"):
            reasoning_concat(vec(0.0, 0.0), vec(0.0), vec(0.0, 0.0))


class TestCandidateScores:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        reasoning = [T.Tensor(rng.standard_normal(6)) for _ in range(4)]
        probs = candidate_scores(reasoning, T.Tensor(rng.standard_normal(6)),
                                 T.Tensor(np.zeros(())))
        assert probs.shape == (4,)
        assert abs(probs.data.sum() - 1.0) < 1e-12
        assert np.all(probs.data > 0.0)

    def test_bias_shift_invariance(self):
        rng = np.random.default_rng(1)
        reasoning = [T.Tensor(rng.standard_normal(6)) for _ in range(3)]
        w = T.Tensor(rng.standard_normal(6))
        a = candidate_scores(reasoning, w, T.Tensor(np.zeros(())))
        b = candidate_scores(reasoning, w, T.Tensor(np.asarray(7.5)))
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_huge_logits_stay_finite(self):
        reasoning = [vec(1000.0), vec(-1000.0), vec(999.0)]
        probs = candidate_scores(reasoning, vec(1.0), T.Tensor(np.zeros(())))
        assert np.all(np.isfinite(probs.data))
        assert abs(probs.data.sum() - 1.0) < 1e-12

    def test_monotone_in_logit(self):
        reasoning = [vec(0.0), vec(1.0), vec(2.0)]
        probs = candidate_scores(reasoning, vec(1.0), T.Tensor(np.zeros(())))
        assert probs.data[0] < probs.data[1] < probs.data[2]

    def test_single_candidate_rejected(self):
        with pytest.raises(ShapeError, match=">= 2"):
            candidate_scores([vec(1.0)], vec(1.0), T.Tensor(np.zeros(())))

    def test_trace_records_probabilities(self):
        trace = []
        candidate_scores([vec(0.0), vec(1.0)], vec(1.0),
                         T.Tensor(np.zeros(())), trace=trace)
        rec = [r for r in trace if r["kind"] == "probabilities"][0]
        assert abs(rec["value"].sum() - 1.0) < 1e-12


class TestLossHandCases:
    def test_perfect_prediction_zero_loss(self):
        probs = [vec(1.0, 0.0, 0.0, 0.0)]
        loss, clamped = mean_nll(probs, [0])
        assert float(loss.data) == 0.0
        assert clamped == 0

    def test_uniform_prediction_log_m(self):
        probs = [vec(0.25, 0.25, 0.25, 0.25)]
        loss, _ = mean_nll(probs, [2])
        assert abs(float(loss.data) - math.log(4.0)) < 1e-12

    def test_mean_over_examples(self):
        probs = [vec(0.5, 0.5), vec(0.25, 0.75)]
        loss, _ = mean_nll(probs, [0, 1])
        want = (math.log(2.0) + math.log(4.0 / 3.0)) / 2.0
        assert abs(float(loss.data) - want) < 1e-12

    def test_tiny_gold_probability_clamped(self):
        probs = [vec(1e-15, 1.0 - 1e-15)]
        terms, clamped = nll_terms(probs, [0])
        assert clamped == 1
        assert abs(float(terms[0].data) - (-math.log(PROB_FLOOR))) < 1e-9

    def test_gold_out_of_range(self):
        with pytest.raises(ShapeError, match="out of range"):
            nll_terms([vec(0.5, 0.5)], [2])

    def test_l2_penalty_hand_value(self):
        # lambda = 0.01, single weight of value 2.0 -> 0.01 * 4 = 0.04
        cfg = TrainConfig(l2_lambda=0.01)
        params = {"head.w": T.Tensor(np.asarray([2.0]))}
        tape = T.Tape()
        pt = model.bind(params, tape)
        pen = model.l2_penalty(pt, cfg, params)
        assert abs(float(pen.data) - 0.04) < 1e-15

    def test_l2_skips_inactive_blocks(self):
        cfg = TrainConfig(l2_lambda=1.0, use_speaker=False)
        params = {"head.w": T.Tensor(np.asarray([1.0])),
                  "spk.w_ab": T.Tensor(np.asarray([[5.0]]))}
        tape = T.Tape()
        pt = model.bind(params, tape)
        pen = model.l2_penalty(pt, cfg, params)
        assert float(pen.data) == 1.0


class TestRanking:
    def test_rank_unique_probs(self):
        assert rank_of_gold([0.1, 0.7, 0.2], 1) == (1, 1)
        assert rank_of_gold([0.1, 0.7, 0.2], 2) == (2, 1)
        assert rank_of_gold([0.1, 0.7, 0.2], 0) == (3, 1)

    def test_tie_goes_to_lower_index(self):
        # ties: an equal-probability candidate with a lower index wins
        assert rank_of_gold([0.3, 0.3, 0.4], 0) == (2, 2)
        assert rank_of_gold([0.3, 0.3, 0.4], 1) == (3, 2)
        assert rank_of_gold([0.5, 0.5], 0) == (1, 0)

    def test_mrr_hand_case(self):
        # ranks 1, 2, 4 -> (1 + 1/2 + 1/4) / 3 = 7/12
        rows = [[0.7, 0.1, 0.1, 0.1],
                [0.3, 0.4, 0.2, 0.1],
                [0.1, 0.2, 0.3, 0.4]]
        report = rank_and_report(rows, [0, 0, 0])
        assert abs(report.mrr - 7.0 / 12.0) < 1e-12
        assert report.r_at_1 == pytest.approx(1.0 / 3.0)
        assert report.r_at_2 == pytest.approx(2.0 / 3.0)
        assert report.n == 3

    def test_per_example_schema(self):
        report = rank_and_report([[0.2, 0.8]], [1])
        ex = report.per_example[0]
        assert set(ex) == {"probs", "pred", "gold", "rank"}
        assert ex["pred"] == 1 and ex["rank"] == 1 and ex["gold"] == 1
        d = report.to_dict()
        assert set(d) == {"r_at_1", "r_at_2", "mrr", "n", "per_example"}

    def test_missing_gold_rejected(self):
        with pytest.raises(ShapeError, match="without gold"):
            rank_and_report([[0.5, 0.5]], [-1])

    def test_no_examples_rejected(self):
        with pytest.raises(ShapeError, match="no examples"):
            rank_and_report([], [])

    def test_against_counting_rank(self):
        # independent definition: rank = 1 + #{j : p_j > p_g or
        # (p_j == p_g and j < g)}
        rng = np.random.default_rng(2)
        for _ in range(300):
            m = int(rng.integers(2, 6))
            probs = np.round(rng.random(m), 1)
            gold = int(rng.integers(m))
            want = 1 + sum(1 for j in range(m)
                           if probs[j] > probs[gold]
                           or (probs[j] == probs[gold] and j < gold))
            got, _ = rank_of_gold(probs.tolist(), gold)
            assert got == want


class TestDescent:
    def test_one_gradient_step_reduces_loss(self):
        rng = np.random.default_rng(3)
        d = 4
        raw = make_pipeline_params(rng, d, 3)
        params = tensorize({"head.w": raw["head.w"],
                            "head.b": raw["head.b"]})
        reasoning_data = [rng.standard_normal(3 * d) for _ in range(3)]

        def run():
            tape = T.Tape()
            pt = model.bind(params, tape)
            reasoning = [T.Tensor(r) for r in reasoning_data]
            probs = candidate_scores(reasoning, pt["head.w"], pt["head.b"])
            loss, _ = mean_nll([probs], [1])
            return loss, tape

        loss0, tape = run()
        grads = T.backward(loss0)
        for name, p in params.items():
            p.data -= 0.1 * grads[tape.node_of(p)]
        loss1, _ = run()
        assert float(loss1.data) < float(loss0.data)
