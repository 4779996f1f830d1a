"""End-to-end model forward/backward behaviour on small configs."""

import numpy as np
import pytest
from conftest import (encs_to_lists, make_pipeline_params, random_mask,
                      random_encodings, tensorize, to_lists)

import tests.scalar_reference as ref
from replyrank import model
from replyrank import tensor as T
from replyrank.config import TrainConfig
from replyrank.corpus import build_vocab, load_jsonl, make_batch
from replyrank.datagen import make_random_corpus, write_jsonl
from replyrank.tensor import backward


def small_cfg(**kw):
    base = dict(d=8, n_layers=1, n_heads=2, m=3, l_ctx=12, l_resp=5,
                dropout=0.0, l2_lambda=0.01, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def batch_and_vocab(tmp_path_factory):
    rng = np.random.default_rng(0)
    path = tmp_path_factory.mktemp("data") / "train.jsonl"
    write_jsonl(path, make_random_corpus(4, 3, rng, n_words=20))
    examples = load_jsonl(path)
    vocab = build_vocab(examples)
    batch = make_batch(examples, vocab, l_ctx=12, l_resp=5)
    return batch, vocab


class TestBatchLoss:
    def test_probs_and_loss_shape(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        cfg = small_cfg()
        params = model.init_params(cfg, len(vocab), np.random.default_rng(1))
        loss, tape, info = model.batch_loss(params, cfg, batch)
        assert loss.shape == ()
        assert np.isfinite(float(loss.data))
        assert info["probs"].shape == (4, 3)
        np.testing.assert_allclose(info["probs"].sum(axis=1), 1.0, atol=1e-12)
        assert info["n_clamped"] == 0

    def test_loss_includes_l2(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        rng_seed = 2
        cfg = small_cfg(l2_lambda=0.05)
        params = model.init_params(cfg, len(vocab),
                                   np.random.default_rng(rng_seed))
        loss, _, info = model.batch_loss(params, cfg, batch)
        cfg0 = small_cfg(l2_lambda=0.0)
        params0 = model.init_params(cfg0, len(vocab),
                                    np.random.default_rng(rng_seed))
        loss0, _, info0 = model.batch_loss(params0, cfg0, batch)
        assert float(loss0.data) == pytest.approx(info0["nll"])
        assert float(loss.data) > info["nll"]
        np.testing.assert_array_equal(info["probs"], info0["probs"])

    def test_infer_matches_train_forward_without_dropout(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        cfg = small_cfg()
        params = model.init_params(cfg, len(vocab), np.random.default_rng(3))
        _, _, info = model.batch_loss(params, cfg, batch)
        probs = model.infer_probs(params, cfg, batch)
        np.testing.assert_array_equal(probs, info["probs"])

    def test_dropout_changes_loss_but_stays_deterministic(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        cfg = small_cfg(dropout=0.3)
        params = model.init_params(cfg, len(vocab), np.random.default_rng(4))
        plain, _, _ = model.batch_loss(params, cfg, batch)
        a, _, _ = model.batch_loss(params, cfg, batch,
                                   dropout_rng=np.random.default_rng(9))
        b, _, _ = model.batch_loss(params, cfg, batch,
                                   dropout_rng=np.random.default_rng(9))
        c, _, _ = model.batch_loss(params, cfg, batch,
                                   dropout_rng=np.random.default_rng(10))
        assert float(a.data) == float(b.data)
        assert float(a.data) != float(plain.data)
        assert float(a.data) != float(c.data)

    def test_all_params_reached_in_full_config(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        cfg = small_cfg()
        params = model.init_params(cfg, len(vocab), np.random.default_rng(5))
        loss, tape, _ = model.batch_loss(params, cfg, batch)
        grads = backward(loss)
        for name, p in params.items():
            g = grads[tape.node_of(p)]
            assert g.shape == p.data.shape
            if name == "head.b":
                # a bias shared by every logit cancels in the softmax,
                # so its gradient is zero up to rounding
                assert np.abs(g).max() < 1e-12
            else:
                assert np.any(g != 0.0), f"no gradient reached {name}"

    def test_ablated_speaker_gets_zero_grads(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        cfg = small_cfg(use_speaker=False)
        params = model.init_params(cfg, len(vocab), np.random.default_rng(6))
        loss, tape, _ = model.batch_loss(params, cfg, batch)
        grads = backward(loss)
        for name, p in params.items():
            g = grads[tape.node_of(p)]
            if name.startswith("spk."):
                assert np.all(g == 0.0), f"{name} should be inactive"
            elif name.startswith("hist.") or name == "head.w":
                assert np.any(g != 0.0)

    def test_reasoning_segment_zeroed_when_ablated(self, batch_and_vocab):
        # the [3d] reasoning keeps its layout under ablation: the
        # disabled block contributes an exactly zero segment
        batch, vocab = batch_and_vocab
        cfg = small_cfg(use_history=False)
        params = model.init_params(cfg, len(vocab), np.random.default_rng(7))
        probs = model.infer_probs(params, cfg, batch)
        assert probs.shape == (4, 3)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


class TestScoreFromEncodings:
    @pytest.mark.parametrize("flags", [
        {},
        {"use_comparison": False},
        {"use_history": False},
        {"use_speaker": False},
        {"comparison_variant": "coarse_grained"},
    ])
    def test_matches_scalar_pipeline(self, flags):
        rng = np.random.default_rng(8)
        d, m, l_ctx, l_resp = 4, 3, 5, 4
        cfg_kw = dict(d=d, m=m, n_layers=0, n_heads=2,
                      l_ctx=l_ctx, l_resp=l_resp)
        cfg_kw.update(flags)
        cfg = TrainConfig(**cfg_kw)
        raw = make_pipeline_params(rng, d, m, cfg.comparison_variant)
        encs = random_encodings(rng, d, m, l_ctx, l_resp)
        ctx_mask = random_mask(rng, l_ctx)
        cand_mask = np.stack([random_mask(rng, l_resp) for _ in range(m)])
        spk_rows = ctx_mask.copy()
        probs = model.score_from_encodings(
            tensorize(raw), cfg,
            [tuple(T.Tensor(part) for part in e) for e in encs],
            ctx_mask, cand_mask, spk_rows)
        want = ref.ref_pipeline(encs_to_lists(encs), ctx_mask.tolist(),
                                cand_mask.tolist(), spk_rows.tolist(),
                                to_lists(raw), cfg.comparison_variant,
                                cfg.use_comparison, cfg.use_history,
                                cfg.use_speaker)
        np.testing.assert_allclose(probs.data, want, atol=1e-12)


class TestTrace:
    def test_trace_covers_all_stages(self, batch_and_vocab):
        batch, vocab = batch_and_vocab
        cfg = small_cfg()
        params = model.init_params(cfg, len(vocab), np.random.default_rng(9))
        trace = []
        model.batch_loss(params, cfg, batch, trace=trace)
        kinds = {r["kind"] for r in trace}
        assert kinds == {"attention", "gate", "fusion", "compare_E",
                         "probabilities"}
        names = {r["name"] for r in trace if r["kind"] == "attention"}
        assert any(n.startswith("encoder.") for n in names)
        assert any(n.startswith("comparison.") for n in names)
        assert any(n.startswith("history[") for n in names)
        assert any(n.startswith("speaker[") for n in names)
