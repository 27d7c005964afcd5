"""Sentence similarity for exemplar selection: TF-weighted cosine over
lowercased unigrams and bigrams.  Deterministic and dependency-free; a remote
sentence encoder can be dropped in behind the same callable signature."""

from __future__ import annotations

import math
import re

_WORD = re.compile(r"[a-z0-9']+")


def _features(text: str) -> dict[str, int]:
    words = _WORD.findall(text.lower())
    counts: dict[str, int] = {}
    for token in words:
        counts[token] = counts.get(token, 0) + 1
    for first, second in zip(words, words[1:]):
        bigram = f"{first} {second}"
        counts[bigram] = counts.get(bigram, 0) + 1
    return counts


def ngram_cosine(a: str, b: str) -> float:
    """Cosine similarity of the two texts' n-gram count vectors, in [0, 1]."""
    fa, fb = _features(a), _features(b)
    if not fa or not fb:
        return 0.0
    dot = sum(fa[key] * fb[key] for key in sorted(fa.keys() & fb.keys()))
    if dot == 0:
        return 0.0
    norm_a = math.sqrt(sum(v * v for v in fa.values()))
    norm_b = math.sqrt(sum(v * v for v in fb.values()))
    return dot / (norm_a * norm_b)
