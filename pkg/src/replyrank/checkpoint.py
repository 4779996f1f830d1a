"""Deterministic binary checkpoints.

Layout: 8-byte magic, little-endian u64 header length, a UTF-8 JSON
header with sorted keys, then raw little-endian float64 blobs in the
exact order listed by the header's ``arrays`` table.  No timestamps,
no compression, no dict-iteration order anywhere, so save -> load ->
save reproduces the file byte for byte (the determinism anchor for
reproducible runs).

The RNG state is the PCG64 state dict (plain ints; JSON handles the
128-bit values natively).
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import config_from_dict
from .corpus import Vocabulary
from .errors import DataError
from .tensor import Tensor

MAGIC = b"RRCKPT01"


@dataclass
class Checkpoint:
    config: object                   # TrainConfig
    vocab: Vocabulary
    params: dict                     # name -> Tensor
    adam_m: dict                     # name -> ndarray
    adam_v: dict                     # name -> ndarray
    adam_t: int
    epoch: int
    rng_state: dict | None


def snapshot(config, vocab, params, adam_m, adam_v, adam_t, epoch, rng_state):
    """Deep-copied checkpoint of live training state."""
    return Checkpoint(
        config=config,
        vocab=vocab,
        params={n: Tensor(t.data.copy()) for n, t in params.items()},
        adam_m={n: a.copy() for n, a in adam_m.items()},
        adam_v={n: a.copy() for n, a in adam_v.items()},
        adam_t=adam_t,
        epoch=epoch,
        rng_state=copy.deepcopy(rng_state),
    )


def _array_table(ckpt):
    """(label, ndarray) pairs in canonical order."""
    out = []
    for name in sorted(ckpt.params):
        out.append((f"param.{name}", ckpt.params[name].data))
    for name in sorted(ckpt.adam_m):
        out.append((f"adam.m.{name}", ckpt.adam_m[name]))
    for name in sorted(ckpt.adam_v):
        out.append((f"adam.v.{name}", ckpt.adam_v[name]))
    return out


def save_checkpoint(path, ckpt):
    table = _array_table(ckpt)
    header = {
        "adam_t": ckpt.adam_t,
        "arrays": [[label, list(arr.shape)] for label, arr in table],
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "rng": ckpt.rng_state,
        "vocab": ckpt.vocab.regular_tokens(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in table:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    try:
        fh = open(path, "rb")
    except OSError as err:
        raise DataError(f"cannot read checkpoint {path}: {err}") from err
    with fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path} is not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        arrays = {}
        for label, shape in header["arrays"]:
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise DataError(f"{path}: truncated array {label}")
            arrays[label] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after arrays")
    params, adam_m, adam_v = {}, {}, {}
    for label, arr in arrays.items():
        if label.startswith("param."):
            params[label[len("param."):]] = Tensor(arr)
        elif label.startswith("adam.m."):
            adam_m[label[len("adam.m."):]] = arr
        elif label.startswith("adam.v."):
            adam_v[label[len("adam.v."):]] = arr
        else:
            raise DataError(f"{path}: unknown array label {label}")
    return Checkpoint(
        config=config_from_dict(header["config"]),
        vocab=Vocabulary(header["vocab"]),
        params=params,
        adam_m=adam_m,
        adam_v=adam_v,
        adam_t=header["adam_t"],
        epoch=header["epoch"],
        rng_state=header["rng"],
    )
