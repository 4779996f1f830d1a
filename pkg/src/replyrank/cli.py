"""Command-line interface.

Subcommands: train, eval, score, gradcheck, ablate.  stdout carries
data only (JSONL/JSON); progress and diagnostics go to stderr, so
output can be piped.  Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric failure.

Config precedence: built-in defaults < --config file < repeated
--set key=value flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import model
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .corpus import DialogueExample, build_vocab, load_jsonl, make_batch, tokenize
from .datagen import make_random_corpus
from .errors import ConfigError, DataError, NumericError
from .gradcheck import finite_diff_check
from .trainer import evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# ablation table rows: label -> config field overrides
ABLATION_ROWS = (
    ("full", {}),
    ("w/o comparison", {"use_comparison": False}),
    ("w/o history", {"use_history": False}),
    ("w/o speaker", {"use_speaker": False}),
    ("coarse-grained", {"comparison_variant": "coarse_grained"}),
    ("simple-add", {"comparison_variant": "simple_add"}),
    ("no-source", {"comparison_variant": "no_source"}),
    ("no-gate", {"comparison_variant": "no_gate"}),
)


def _say(text):
    print(text, file=sys.stderr)


def _git_blob_sha1(path):
    data = Path(path).read_bytes()
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _parse_sets(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value
    return out


def _config_from_args(args):
    return load_config(args.config, _parse_sets(getattr(args, "set", None)))


def write_manifest(out_dir, cfg, dataset_paths):
    """Record everything needed to reproduce the run, before step one."""
    manifest = {
        "config": cfg.to_dict(),
        "datasets": {name: {"path": str(path),
                            "sha1": _git_blob_sha1(path)}
                     for name, path in dataset_paths.items()},
        "out_dir": str(out_dir),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")
    return path


def cmd_train(args):
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in (args.train, args.dev):
        if not Path(path).is_file():
            raise DataError(f"dataset file not found: {path}")
    write_manifest(out_dir, cfg, {"train": args.train, "dev": args.dev})
    result = train(cfg, args.train, args.dev, log=_say)
    save_checkpoint(out_dir / "best.ckpt", result.best)
    save_checkpoint(out_dir / "final.ckpt", result.final)
    with open(out_dir / "epochs.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.history:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    _say(f"wrote {out_dir}/best.ckpt (epoch {result.best.epoch}) and final.ckpt")
    return EXIT_OK


def cmd_eval(args):
    ckpt = load_checkpoint(args.ckpt)
    report = evaluate(ckpt, args.data)
    payload = json.dumps(report.to_dict(), sort_keys=True)
    if args.report:
        Path(args.report).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    _say(f"n={report.n} R@1={report.r_at_1:.4f} R@2={report.r_at_2:.4f} "
         f"MRR={report.mrr:.4f}")
    return EXIT_OK


def cmd_score(args):
    ckpt = load_checkpoint(args.ckpt)
    cfg = ckpt.config
    examples = load_jsonl(args.data)
    if len(examples[0].candidates) != cfg.m:
        raise ConfigError(
            f"checkpoint expects m={cfg.m} candidates but {args.data} has "
            f"{len(examples[0].candidates)}")
    for lo in range(0, len(examples), cfg.batch_size):
        batch = make_batch(examples[lo:lo + cfg.batch_size], ckpt.vocab,
                           cfg.l_ctx, cfg.l_resp)
        probs = model.infer_probs(ckpt.params, cfg, batch)
        for row in range(batch.size):
            p = [float(x) for x in probs[row]]
            ranking = sorted(range(len(p)), key=lambda i: (-p[i], i))
            print(json.dumps({"probs": p, "ranking": ranking,
                              "pred": ranking[0]}, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _config_from_args(args)
    if cfg.dropout > 0.0:
        _say("gradcheck: dropout disabled for the check")
        cfg = replace(cfg, dropout=0.0)
    rng = np.random.default_rng(cfg.seed)
    rows = make_random_corpus(1, cfg.m, rng, n_words=12)
    examples = [
        DialogueExample([(s, tokenize(u)) for s, u in r["context"]],
                        [tokenize(o) for o in r["options"]],
                        r["responder"], r["answer"])
        for r in rows
    ]
    vocab = build_vocab(examples, min_count=1)
    batch = make_batch(examples, vocab, cfg.l_ctx, cfg.l_resp)
    params = model.init_params(cfg, len(vocab), rng)

    def f():
        loss, _, _ = model.batch_loss(params, cfg, batch)
        return loss

    report = finite_diff_check(f, params, h=args.h, tol=args.tol)
    for line in report.lines():
        _say(line)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_ablate(args):
    base = _config_from_args(args)
    for label, overrides in ABLATION_ROWS:
        cfg = replace(base, **overrides).validate()
        result = train(cfg, args.train, args.dev,
                       log=(lambda s, lab=label: _say(f"[{lab}] {s}")))
        best = max(result.history, key=lambda e: e["dev_r_at_1"])
        print(json.dumps({"variant": label,
                          "r_at_1": best["dev_r_at_1"],
                          "r_at_2": best["dev_r_at_2"],
                          "mrr": best["dev_mrr"],
                          "epoch": best["epoch"]}, sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="replyrank",
        description="Train and evaluate a comparison-based reply ranker.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", default=None, help="flat key=value file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("train", help="train a model")
    add_config(p)
    p.add_argument("--train", required=True, help="training JSONL")
    p.add_argument("--dev", required=True, help="dev JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", default=None, help="write JSON here "
                   "(default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="rank candidates, JSONL to stdout")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    add_config(p)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train every ablation/variant row")
    add_config(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        _say(f"config error: {err}")
        return EXIT_CONFIG
    except DataError as err:
        _say(f"data error: {err}")
        return EXIT_DATA
    except NumericError as err:
        _say(f"numeric error: {err}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
