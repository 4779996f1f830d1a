"""Training loop: shuffled minibatches, Adam, per-epoch dev ranking.

Everything is driven by one np.random PCG64 generator seeded from the
config: parameter init, epoch shuffles, and dropout masks, consumed in
a fixed single-threaded order, so a (seed, config, data) triple fully
determines the run.  Evaluation never touches the generator.

The optimizer applies no weight decay of its own; regularization lives
in the loss as an explicit L2 term.  Model selection keeps the epoch
with the best dev R@1 (earliest epoch on ties).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model
from .checkpoint import Checkpoint, snapshot
from .corpus import build_vocab, load_jsonl, make_batch
from .errors import ConfigError, DataError, NumericError
from .head import rank_and_report
from .tensor import backward


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def init_adam(params):
    return AdamState(m={n: np.zeros(t.data.shape) for n, t in params.items()},
                     v={n: np.zeros(t.data.shape) for n, t in params.items()},
                     t=0)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place, in sorted name order."""
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        params[name].data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def _load_split(path, cfg, need_gold):
    examples = load_jsonl(path)
    m_data = len(examples[0].candidates)
    if m_data != cfg.m:
        raise ConfigError(
            f"config expects m={cfg.m} candidates but {path} has {m_data}")
    if need_gold and any(ex.gold_index is None for ex in examples):
        raise DataError(f"{path}: every example needs an answer for this mode")
    return examples


def _grads_by_name(params, tape, grad_map):
    return {n: grad_map[tape.node_of(t)] for n, t in params.items()}


def _l2_value(params, cfg):
    names = sorted(model.active_param_names(cfg, params))
    return cfg.l2_lambda * float(sum((params[n].data ** 2).sum() for n in names))


def evaluate_examples(params, cfg, vocab, examples):
    """RankingReport over examples, dropout off, file order preserved."""
    probs, golds = [], []
    for lo in range(0, len(examples), cfg.batch_size):
        batch = make_batch(examples[lo:lo + cfg.batch_size], vocab,
                           cfg.l_ctx, cfg.l_resp)
        p = model.infer_probs(params, cfg, batch)
        probs.extend(p)
        golds.extend(batch.gold)
    return rank_and_report(probs, golds)


def evaluate(ckpt, data_path):
    """Evaluate a checkpoint on a dataset file (answers required)."""
    cfg = ckpt.config
    examples = _load_split(data_path, cfg, need_gold=True)
    return evaluate_examples(ckpt.params, cfg, ckpt.vocab, examples)


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    history: list = field(default_factory=list)
    vocab_size: int = 0
    n_params: int = 0


def train(cfg, train_path, dev_path, log=None):
    """Train from scratch; returns best/final checkpoints and epoch log.

    ``log`` is an optional callable taking one line of progress text.
    """
    train_examples = _load_split(train_path, cfg, need_gold=True)
    dev_examples = _load_split(dev_path, cfg, need_gold=True)
    vocab = build_vocab(train_examples, cfg.min_count)
    rng = np.random.default_rng(cfg.seed)
    params = model.init_params(cfg, len(vocab), rng)
    state = init_adam(params)
    n_examples = len(train_examples)

    def say(text):
        if log is not None:
            log(text)

    say(f"vocab {len(vocab)} tokens, {model.count_params(params)} parameters, "
        f"{n_examples} train / {len(dev_examples)} dev examples")

    history = []
    best = None
    best_r1 = -1.0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_examples)
        nll_sum = 0.0
        clamped = 0
        for lo in range(0, n_examples, cfg.batch_size):
            chunk = [train_examples[i] for i in perm[lo:lo + cfg.batch_size]]
            batch = make_batch(chunk, vocab, cfg.l_ctx, cfg.l_resp)
            drop_rng = rng if cfg.dropout > 0.0 else None
            loss, tape, info = model.batch_loss(params, cfg, batch,
                                                dropout_rng=drop_rng)
            grads = _grads_by_name(params, tape, backward(loss))
            adam_step(params, grads, state, cfg.learning_rate)
            nll_sum += info["nll"] * batch.size
            clamped += info["n_clamped"]
        train_nll = nll_sum / n_examples
        l2 = _l2_value(params, cfg)
        report = evaluate_examples(params, cfg, vocab, dev_examples)
        entry = {"epoch": epoch, "train_nll": train_nll, "l2": l2,
                 "train_loss": train_nll + l2, "n_clamped": clamped,
                 "dev_r_at_1": report.r_at_1, "dev_r_at_2": report.r_at_2,
                 "dev_mrr": report.mrr}
        history.append(entry)
        say(f"epoch {epoch}: train nll {train_nll:.6f} l2 {l2:.6f} "
            f"dev R@1 {report.r_at_1:.4f} R@2 {report.r_at_2:.4f} "
            f"MRR {report.mrr:.4f}")
        if report.r_at_1 > best_r1:
            best_r1 = report.r_at_1
            best = snapshot(cfg, vocab, params, state.m, state.v, state.t,
                            epoch, rng.bit_generator.state)
    final = snapshot(cfg, vocab, params, state.m, state.v, state.t,
                     cfg.epochs - 1, rng.bit_generator.state)
    return TrainResult(best=best, final=final, history=history,
                       vocab_size=len(vocab),
                       n_params=model.count_params(params))
