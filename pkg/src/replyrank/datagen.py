"""Synthetic corpora: random dialogues and the speaker-fact probe.

The probe corpus is built so that only speaker identity separates the
gold candidate from the strongest distractor.  Each of two speakers
consistently states one value ("i love red"); the gold reply repeats
the responder's value, one distractor repeats the other speaker's
value (so it is supported by the history but not by the speaker's own
history), and two distractors use values nobody said.  Speaker order
per turn is random, so no positional rule identifies the responder;
speaker tags never appear inside utterance text, which makes the
speaker mask the only channel carrying identity.
"""

from __future__ import annotations

import json

PROBE_VALUES = ("red", "blue", "green", "gold", "black", "white",
                "pink", "gray")


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def make_random_corpus(n, m, rng, n_words=40):
    """Random-token dialogues with uniformly random gold labels."""
    words = [f"w{i:02d}" for i in range(n_words)]

    def phrase(lo, hi):
        return " ".join(words[rng.integers(n_words)]
                        for _ in range(int(rng.integers(lo, hi + 1))))

    rows = []
    for _ in range(n):
        n_turns = int(rng.integers(2, 5))
        speakers = ["a" if int(rng.integers(2)) else "b" for _ in range(n_turns)]
        context = [[s, phrase(3, 6)] for s in speakers]
        responder = "a" if int(rng.integers(2)) else "b"
        options = [phrase(2, 5) for _ in range(m)]
        rows.append({"context": context, "responder": responder,
                     "options": options, "answer": int(rng.integers(m))})
    return rows


def make_probe_corpus(n, rng, filler_turns=True):
    """Speaker-fact probe examples (always 4 options)."""
    rows = []
    n_values = len(PROBE_VALUES)
    for _ in range(n):
        ia, ib = rng.choice(n_values, size=2, replace=False)
        value = {"a": PROBE_VALUES[ia], "b": PROBE_VALUES[ib]}
        n_turns = int(rng.integers(2, 5)) if filler_turns else 2
        speakers = ["a" if int(rng.integers(2)) else "b" for _ in range(n_turns)]
        if "a" not in speakers or "b" not in speakers:
            i, j = rng.choice(n_turns, size=2, replace=False)
            speakers[int(i)], speakers[int(j)] = "a", "b"
        context = [[s, f"i love {value[s]}"] for s in speakers]
        responder = "a" if int(rng.integers(2)) else "b"
        other = "b" if responder == "a" else "a"
        unused = [v for v in PROBE_VALUES if v not in value.values()]
        picks = rng.choice(len(unused), size=2, replace=False)
        candidates = [value[responder], value[other],
                      unused[picks[0]], unused[picks[1]]]
        order = rng.permutation(4)
        options = [f"i love {candidates[k]}" for k in order]
        answer = int(list(order).index(0))
        rows.append({"context": context, "responder": responder,
                     "options": options, "answer": answer})
    return rows
