"""Dataset loading, vocabulary, and padded batch construction.

Input is UTF-8 JSONL, one example per line:

    {"context": [[speaker, utterance], ...],
     "responder": "B",
     "options": [text0, text1, ..., text(M-1)],
     "answer": 1}            # optional; absent means inference mode

The candidate count M is fixed per dataset.  Context utterances are
joined with SEP tokens, truncated from the front (oldest tokens drop
first) so the latest turns survive; candidates are truncated from the
back.  The speaker mask marks tokens of utterances spoken by the
responder, excluding SEP delimiters.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass

import numpy as np

from .errors import DataError

PAD_ID = 0
UNK_ID = 1
SEP_ID = 2
SUM_ID = 3

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
SEP_TOKEN = "<sep>"
SUM_TOKEN = "<sum>"

_RESERVED = (PAD_TOKEN, UNK_TOKEN, SEP_TOKEN, SUM_TOKEN)

_PUNCT_TABLE = str.maketrans({c: f" {c} " for c in string.punctuation})


def tokenize(text):
    """Lowercase, pad punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass
class DialogueExample:
    """One multiple-choice dialogue: a context, M candidate next turns
    by ``responder_tag``, and optionally the gold candidate index."""

    context: list          # [(speaker_tag, [token, ...]), ...]
    candidates: list       # M token lists
    responder_tag: str
    gold_index: int | None = None


class Vocabulary:
    """Token/id bijection with four reserved entries.

    PAD=0, UNK=1, SEP=2, SUM=3 are fixed; regular tokens follow in
    descending frequency then lexicographic order, so the mapping is a
    pure function of the training corpus.
    """

    def __init__(self, tokens):
        self.id_to_token = list(_RESERVED) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, token):
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, idx):
        return self.id_to_token[idx]

    def regular_tokens(self):
        return self.id_to_token[len(_RESERVED):]


def build_vocab(examples, min_count=1):
    """Count tokens in contexts and candidates, keep those with
    frequency >= min_count, order by descending count then token."""
    if not examples:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts = {}
    for ex in examples:
        for _, toks in ex.context:
            for t in toks:
                counts[t] = counts.get(t, 0) + 1
        for cand in ex.candidates:
            for t in cand:
                counts[t] = counts.get(t, 0) + 1
    kept = [t for t, c in counts.items() if c >= min_count and t not in _RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def _parse_line(obj, lineno, expected_m):
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: expected a JSON object")
    for key in ("context", "responder", "options"):
        if key not in obj:
            raise DataError(f"line {lineno}: missing field {key!r}")
    raw_ctx = obj["context"]
    if not isinstance(raw_ctx, list) or not raw_ctx:
        raise DataError(f"line {lineno}: context must be a non-empty list")
    context = []
    for turn in raw_ctx:
        if not isinstance(turn, (list, tuple)) or len(turn) != 2 \
                or not all(isinstance(x, str) for x in turn):
            raise DataError(
                f"line {lineno}: each context turn must be [speaker, utterance]")
        context.append((turn[0], tokenize(turn[1])))
    if not any(toks for _, toks in context):
        raise DataError(f"line {lineno}: context has no tokens")
    responder = obj["responder"]
    if not isinstance(responder, str):
        raise DataError(f"line {lineno}: responder must be a string")
    options = obj["options"]
    if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
        raise DataError(f"line {lineno}: options must be a list of strings")
    if expected_m is not None and len(options) != expected_m:
        raise DataError(
            f"line {lineno}: expected {expected_m} options, found {len(options)}")
    candidates = [tokenize(o) for o in options]
    for i, cand in enumerate(candidates):
        if not cand:
            raise DataError(f"line {lineno}: option {i} is empty")
    gold = None
    if "answer" in obj and obj["answer"] is not None:
        ans = obj["answer"]
        if isinstance(ans, bool) or not isinstance(ans, int) \
                or not 0 <= ans < len(options):
            raise DataError(f"line {lineno}: unknown answer label {ans!r}")
        gold = ans
    return DialogueExample(context, candidates, responder, gold)


def load_jsonl(path, expected_m=None):
    """Parse a JSONL dataset file into validated examples.

    The option count is taken from the first example when
    ``expected_m`` is None, and enforced on every line either way.
    """
    examples = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read dataset {path}: {err}") from err
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"line {lineno}: invalid JSON ({err.msg})") from err
            ex = _parse_line(obj, lineno, expected_m)
            if expected_m is None:
                expected_m = len(ex.candidates)
            examples.append(ex)
    if not examples:
        raise DataError(f"dataset {path} contains no examples")
    return examples


@dataclass
class Batch:
    """Padded id/mask arrays for B examples sharing one candidate count.

    ``gold`` uses -1 for examples without an answer.  Masks are uint8
    with nonzero meaning a real token; PAD positions carry PAD_ID and a
    zero mask, SEP delimiters carry context_mask=1 but speaker_mask=0.
    """

    context_ids: np.ndarray     # int64 [B x L_ctx]
    context_mask: np.ndarray    # uint8 [B x L_ctx]
    speaker_mask: np.ndarray    # uint8 [B x L_ctx]
    candidate_ids: np.ndarray   # int64 [B x M x L_resp]
    candidate_mask: np.ndarray  # uint8 [B x M x L_resp]
    gold: np.ndarray            # int64 [B]

    @property
    def size(self):
        return self.context_ids.shape[0]

    @property
    def n_candidates(self):
        return self.candidate_ids.shape[1]


def _flatten_context(example, vocab):
    """Joint context stream: utterances joined by single SEP tokens.

    Returns parallel lists (ids, speaker_flags); SEP positions carry a
    False speaker flag.
    """
    ids, spk = [], []
    first = True
    for speaker, toks in example.context:
        if not toks:
            continue
        if not first:
            ids.append(SEP_ID)
            spk.append(False)
        is_responder = speaker == example.responder_tag
        for t in toks:
            ids.append(vocab.encode(t))
            spk.append(is_responder)
        first = False
    return ids, spk


def make_batch(examples, vocab, l_ctx, l_resp):
    """Encode, truncate, and pad a list of examples into one Batch."""
    if l_ctx < 1 or l_resp < 1:
        raise DataError(f"length limits must be >= 1, got ({l_ctx}, {l_resp})")
    if not examples:
        raise DataError("cannot batch zero examples")
    m = len(examples[0].candidates)
    if any(len(ex.candidates) != m for ex in examples):
        raise DataError("examples in one batch must share the candidate count")
    b = len(examples)
    ctx_ids = np.zeros((b, l_ctx), dtype=np.int64)
    ctx_mask = np.zeros((b, l_ctx), dtype=np.uint8)
    spk_mask = np.zeros((b, l_ctx), dtype=np.uint8)
    cand_ids = np.zeros((b, m, l_resp), dtype=np.int64)
    cand_mask = np.zeros((b, m, l_resp), dtype=np.uint8)
    gold = np.full(b, -1, dtype=np.int64)

    for r, ex in enumerate(examples):
        ids, spk = _flatten_context(ex, vocab)
        if len(ids) > l_ctx:        # keep the latest tokens
            ids, spk = ids[-l_ctx:], spk[-l_ctx:]
        ctx_ids[r, :len(ids)] = ids
        ctx_mask[r, :len(ids)] = 1
        spk_mask[r, :len(ids)] = [1 if s else 0 for s in spk]
        for c, cand in enumerate(ex.candidates):
            enc = [vocab.encode(t) for t in cand[:l_resp]]
            if not enc:
                raise DataError(
                    f"example {r} option {c} is empty after truncation")
            cand_ids[r, c, :len(enc)] = enc
            cand_mask[r, c, :len(enc)] = 1
        if ex.gold_index is not None:
            gold[r] = ex.gold_index
    return Batch(ctx_ids, ctx_mask, spk_mask, cand_ids, cand_mask, gold)


def speaker_history_rows(batch, example_index):
    """Row mask over context positions for the responder's own turns.

    Returns (mask, fallback).  When the responder never spoke in the
    (possibly truncated) context, the full context mask is returned
    instead and fallback is True, so downstream matching always has at
    least one valid row.
    """
    if not 0 <= example_index < batch.size:
        raise DataError(f"example index {example_index} out of range")
    row = batch.speaker_mask[example_index]
    if row.any():
        return row, False
    return batch.context_mask[example_index], True
