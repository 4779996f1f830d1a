#!/usr/bin/env python3
"""Timing comparison between the compiled and numpy kernel backends.

Times every kernel in the backend contract on shapes representative of
one joint-encoded pair (rows ~ summary + context + candidate tokens,
d ~ model width), checks that both backends agree on identical inputs,
then times a full scoring forward and forward+backward pass per
backend.  Wall times are best-of-N over auto-calibrated inner loops.

Usage:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --rows 96 --d 128 --repeats 7
    python3 benchmarks/bench_kernels.py --skip-model

The compiled extension is optional; without it only numpy is timed.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
import timeit

import numpy as np

from replyrank import kernels, model
from replyrank.config import TrainConfig
from replyrank.corpus import build_vocab, load_jsonl, make_batch
from replyrank.datagen import make_random_corpus, write_jsonl
from replyrank.kernels import numpy_backend
from replyrank.tensor import backward

try:
    from replyrank.kernels import _core as compiled_backend
except ImportError:
    compiled_backend = None


def best_time(fn, repeats, target=0.05):
    """Best per-call seconds over `repeats` samples of ~`target` seconds."""
    fn()
    fn()
    t0 = timeit.default_timer()
    fn()
    est = timeit.default_timer() - t0
    inner = max(1, int(target / max(est, 1e-9)))
    best = min(timeit.timeit(fn, number=inner) for _ in range(repeats))
    return best / inner


def max_abs_diff(a, b):
    if a is None and b is None:
        return 0.0
    if isinstance(a, tuple):
        return max(max_abs_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64)
                               - np.asarray(b, dtype=np.float64))))


def kernel_cases(rng, rows, d):
    """(label, shape note, kernel name, args, mutates-first-arg) tuples.

    Saved forward outputs feeding the backward kernels come from the
    numpy backend so both backends see bit-identical inputs.
    """
    x = rng.standard_normal((rows, d))
    w = rng.standard_normal((d, d))
    gy = rng.standard_normal((rows, d))
    logits = rng.standard_normal((rows, rows))
    key_mask = (rng.random((rows, rows)) < 0.9).astype(np.uint8)
    key_mask[:, 0] = 1
    att = numpy_backend.softmax_rows(logits, key_mask)
    g_att = rng.standard_normal((rows, rows))
    vec = rng.standard_normal(rows * d)
    g_vec = rng.standard_normal(rows * d)
    row_mask = (rng.random(rows) < 0.9).astype(np.uint8)
    row_mask[0] = 1
    _, pool_arg = numpy_backend.maxpool_rows(x, row_mask)
    g_d = rng.standard_normal(d)
    gain = rng.standard_normal(d)
    bias = rng.standard_normal(d)
    _, xhat, inv_std = numpy_backend.layernorm_rows(x, gain, bias, 1e-5)
    ids = rng.integers(0, 4 * rows, size=rows).astype(np.int64)
    table = np.zeros((4 * rows, d))

    n = rows * d
    sq = f"{rows}x{rows}"
    rd = f"{rows}x{d}"
    return [
        ("matmul", f"{rd} @ {d}x{d}", "matmul", (x, w), False),
        ("matmul_ta", f"{rd}.T @ {rd}", "matmul_ta", (x, gy), False),
        ("matmul_tb", f"{rd} @ {d}x{d}.T", "matmul_tb", (x, w), False),
        ("softmax_rows", sq, "softmax_rows", (logits, key_mask), False),
        ("softmax_rows_grad", sq, "softmax_rows_grad",
         (att, g_att, key_mask), False),
        ("tanh_fwd", f"{n}", "tanh_fwd", (vec,), False),
        ("tanh_grad", f"{n}", "tanh_grad",
         (numpy_backend.tanh_fwd(vec), g_vec), False),
        ("sigmoid_fwd", f"{n}", "sigmoid_fwd", (vec,), False),
        ("sigmoid_grad", f"{n}", "sigmoid_grad",
         (numpy_backend.sigmoid_fwd(vec), g_vec), False),
        ("relu_fwd", f"{n}", "relu_fwd", (vec,), False),
        ("relu_grad", f"{n}", "relu_grad",
         (numpy_backend.relu_fwd(vec), g_vec), False),
        ("maxpool_rows", rd, "maxpool_rows", (x, row_mask), False),
        ("maxpool_rows_grad", rd, "maxpool_rows_grad",
         (g_d, pool_arg, rows), False),
        ("layernorm_rows", rd, "layernorm_rows", (x, gain, bias, 1e-5), False),
        ("layernorm_rows_grad", rd, "layernorm_rows_grad",
         (gy, xhat, inv_std, gain), False),
        ("scatter_add_rows", f"{rows} rows into {4 * rows}x{d}",
         "scatter_add_rows", (table, ids, gy), True),
    ]


def fmt_time(seconds):
    if seconds < 1e-3:
        return f"{seconds * 1e6:9.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:9.2f} ms"
    return f"{seconds:9.3f} s "


def agree(fn_name, args, mutates):
    """Max abs difference between backends on one call with fresh inputs."""
    fn_n = getattr(numpy_backend, fn_name)
    fn_c = getattr(compiled_backend, fn_name)
    if mutates:
        out_n = np.zeros_like(args[0])
        out_c = np.zeros_like(args[0])
        fn_n(out_n, *args[1:])
        fn_c(out_c, *args[1:])
        return max_abs_diff(out_n, out_c)
    return max_abs_diff(fn_n(*args), fn_c(*args))


def bench_kernels(args):
    rng = np.random.default_rng(args.seed)
    cases = kernel_cases(rng, args.rows, args.d)
    have_compiled = compiled_backend is not None

    header = f"{'kernel':<20} {'shape':<22} {'numpy':>12}"
    if have_compiled:
        header += f" {'compiled':>12} {'speedup':>8} {'max|diff|':>10}"
    print(header)
    print("-" * len(header))
    for label, shape, fn_name, call_args, mutates in cases:
        fn_n = getattr(numpy_backend, fn_name)
        t_n = best_time(lambda: fn_n(*call_args), args.repeats)
        line = f"{label:<20} {shape:<22} {fmt_time(t_n)}"
        if have_compiled:
            fn_c = getattr(compiled_backend, fn_name)
            t_c = best_time(lambda: fn_c(*call_args), args.repeats)
            diff = agree(fn_name, call_args, mutates)
            line += f" {fmt_time(t_c)} {t_n / t_c:7.2f}x {diff:10.1e}"
        print(line)


def bench_model(args):
    cfg = TrainConfig(d=args.d, n_layers=1, n_heads=4, m=4,
                      l_ctx=max(8, args.rows - args.d // 8), l_resp=12,
                      dropout=0.0, batch_size=8, seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/bench.jsonl"
        rows = make_random_corpus(cfg.batch_size, cfg.m,
                                  np.random.default_rng(args.seed), n_words=60)
        write_jsonl(path, rows)
        examples = load_jsonl(path)
    vocab = build_vocab(examples)
    params = model.init_params(cfg, len(vocab), np.random.default_rng(cfg.seed))
    batch = make_batch(examples, vocab, cfg.l_ctx, cfg.l_resp)

    def fwd():
        loss, _, _ = model.batch_loss(params, cfg, batch)
        return float(loss.data)

    def fwd_bwd():
        loss, _, _ = model.batch_loss(params, cfg, batch)
        backward(loss)
        return float(loss.data)

    print(f"\nfull model, batch {batch.size} x {cfg.m} candidates, "
          f"d={cfg.d}, {cfg.n_layers} encoder layer(s), "
          f"{model.count_params(params)} parameters")
    header = f"{'pass':<20} {'numpy':>12}"
    if "compiled" in kernels.available_backends():
        header += f" {'compiled':>12} {'speedup':>8} {'loss|diff|':>10}"
    print(header)
    print("-" * len(header))
    for label, fn in (("forward", fwd), ("forward+backward", fwd_bwd)):
        prev = kernels.set_backend("numpy")
        try:
            t_n = best_time(fn, args.repeats, target=0.3)
            loss_n = fn()
        finally:
            kernels.set_backend(prev)
        line = f"{label:<20} {fmt_time(t_n)}"
        if "compiled" in kernels.available_backends():
            prev = kernels.set_backend("compiled")
            try:
                t_c = best_time(fn, args.repeats, target=0.3)
                loss_c = fn()
            finally:
                kernels.set_backend(prev)
            line += (f" {fmt_time(t_c)} {t_n / t_c:7.2f}x "
                     f"{abs(loss_n - loss_c):10.1e}")
        print(line)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=64,
                        help="token rows per joint pair (default 64)")
    parser.add_argument("--d", type=int, default=64,
                        help="model width (default 64)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing samples per measurement (default 5)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--skip-model", action="store_true",
                        help="only run the per-kernel microbenchmarks")
    args = parser.parse_args(argv)

    print(f"backends available: {', '.join(kernels.available_backends())}"
          f" (active: {kernels.backend_name()})")
    if compiled_backend is None:
        print("compiled extension not built; showing numpy times only")
    print()
    bench_kernels(args)
    if not args.skip_model:
        bench_model(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
