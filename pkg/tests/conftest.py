"""Shared helpers: random pipeline inputs in both numpy and list form."""

import numpy as np

from replyrank import tensor as T

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_pipeline_params(rng, d, m, variant="full", scale=0.6):
    """Random post-encoder parameters with the model's canonical names."""
    p = {}
    if variant != "coarse_grained":
        p["cmp.w1"] = scale * rng.standard_normal(3 * d)
    width = d if variant == "coarse_grained" else 2 * d
    p["cmp.w2"] = scale * rng.standard_normal((width * (m - 1), d))
    p["cmp.b2"] = scale * rng.standard_normal(d)
    if variant in ("full", "coarse_grained", "no_source"):
        rows = d if variant == "no_source" else 2 * d
        p["cmp.w3"] = scale * rng.standard_normal((rows, d))
        p["cmp.b3"] = scale * rng.standard_normal(d)
    for block in ("hist", "spk"):
        for w in ("w_ab", "w_ba", "proj_a", "proj_b", "gate_x", "gate_y"):
            p[f"{block}.{w}"] = scale * rng.standard_normal((d, d))
        p[f"{block}.gate_b"] = scale * rng.standard_normal(d)
    p["head.w"] = scale * rng.standard_normal(3 * d)
    p["head.b"] = np.asarray(scale * rng.standard_normal(()))
    return p


def random_mask(rng, n, p_valid=0.8):
    mask = (rng.random(n) < p_valid).astype(np.uint8)
    mask[int(rng.integers(n))] = 1
    return mask


def random_encodings(rng, d, m, l_ctx, l_resp, scale=0.8):
    """M triples (h_ctx, h_cand, h_summary) of random values."""
    return [(scale * rng.standard_normal((l_ctx, d)),
             scale * rng.standard_normal((l_resp, d)),
             scale * rng.standard_normal(d)) for _ in range(m)]


def tensorize(arrays):
    return {name: T.Tensor(np.asarray(arr)) for name, arr in arrays.items()}


def to_lists(p):
    """Params/arrays as nested Python lists for the scalar reference."""
    out = {}
    for name, arr in p.items():
        a = np.asarray(arr)
        out[name] = float(a) if a.ndim == 0 else a.tolist()
    return out


def encs_to_lists(encs):
    return [tuple(np.asarray(part).tolist() for part in e) for e in encs]
