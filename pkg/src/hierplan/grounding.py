"""Vocabulary grounding: snap free-text arguments onto environment names by
cosine similarity, with a character-trigram embedder as the offline default."""

from __future__ import annotations

import math
from dataclasses import dataclass

import requests

from .plan import Action, Plan, normalize_arg
from .skills import LOCATION, OBJECT, UNSPECIFIED, SkillRegistry, default_registry

DEFAULT_THRESHOLD = 0.35


class EmptyTerm(ValueError):
    pass


class EmptyVocabulary(ValueError):
    pass


@dataclass(frozen=True)
class TermVector:
    """A unit-length feature vector for one normalized term.

    ``features`` names the dimensions for sparse vectors; dense embeddings
    (e.g. from a remote encoder) leave it None and align by position.
    """

    term: str
    vector: tuple[float, ...]
    features: tuple[str, ...] | None = None


def cosine(u: TermVector, v: TermVector) -> float:
    if u.features is not None and v.features is not None:
        other = dict(zip(v.features, v.vector))
        common = [f for f in u.features if f in other]
        by_feature = dict(zip(u.features, u.vector))
        return sum(by_feature[f] * other[f] for f in sorted(common))
    if u.features is not None or v.features is not None:
        raise ValueError("cannot mix sparse and dense term vectors")
    if len(u.vector) != len(v.vector):
        raise ValueError("dense vectors must have equal dimension")
    return sum(a * b for a, b in zip(u.vector, v.vector))


class TrigramEmbedder:
    """Character-trigram term frequencies over the space-padded lowercase term.

    Vectors are memoized per instance; TermVector is immutable, so sharing is
    safe across threads.
    """

    def __init__(self) -> None:
        self._cache: dict[str, TermVector] = {}

    def __call__(self, term: str) -> TermVector:
        norm = normalize_arg(term)
        if not norm:
            raise EmptyTerm("cannot embed an empty term")
        cached = self._cache.get(norm)
        if cached is not None:
            return cached
        padded = f" {norm} "
        counts: dict[str, int] = {}
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3]
            counts[gram] = counts.get(gram, 0) + 1
        features = tuple(sorted(counts))
        norm2 = math.sqrt(sum(counts[f] ** 2 for f in features))
        vector = TermVector(norm, tuple(counts[f] / norm2 for f in features), features)
        self._cache[norm] = vector
        return vector


class RemoteEmbedder:
    """HTTP embedder: POST {"input": [terms...]} to a configurable endpoint."""

    def __init__(self, url: str, timeout: float = 30.0, session: requests.Session | None = None):
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()

    def __call__(self, term: str) -> TermVector:
        norm = normalize_arg(term)
        if not norm:
            raise EmptyTerm("cannot embed an empty term")
        raw = self.session.post(self.url, json={"input": [norm]}, timeout=self.timeout)
        raw.raise_for_status()
        data = raw.json()
        if "data" in data:  # OpenAI-style embeddings payload
            values = data["data"][0]["embedding"]
        else:
            values = data["vectors"][0]
        length = math.sqrt(sum(v * v for v in values))
        if length == 0:
            raise ValueError(f"remote embedder returned a zero vector for {norm!r}")
        return TermVector(norm, tuple(v / length for v in values))


def embed(term: str, embedder=None) -> TermVector:
    return (embedder or TrigramEmbedder())(term)


@dataclass(frozen=True)
class GroundingDecision:
    original: str
    chosen: str
    score: float
    accepted: bool


def ground_term(
    term: str,
    vocabulary: list[str] | tuple[str, ...],
    embedder=None,
    threshold: float = DEFAULT_THRESHOLD,
) -> GroundingDecision:
    """Snap one term to its closest vocabulary entry, or pass it through.

    An exact normalized match short-circuits with score 1.0; the reserved
    placeholder 'unspecified' is never grounded.  Ties break toward the
    lowest vocabulary index.
    """
    embedder = embedder or TrigramEmbedder()
    vocab = _VocabIndex(vocabulary, embedder)
    return _ground_against(term, vocab, threshold)


class _VocabIndex:
    """Vocabulary entries with their vectors, computed once and shared."""

    def __init__(self, vocabulary, embedder):
        if not vocabulary:
            raise EmptyVocabulary("vocabulary must not be empty")
        self.embedder = embedder
        self.entries = [normalize_arg(entry) for entry in vocabulary]
        self.by_entry = set(self.entries)
        self._vectors: list[TermVector] | None = None

    def vectors(self) -> list[TermVector]:
        if self._vectors is None:
            self._vectors = [self.embedder(entry) for entry in self.entries]
        return self._vectors


def _ground_against(term: str, vocab: _VocabIndex, threshold: float) -> GroundingDecision:
    norm = normalize_arg(term)
    if norm == UNSPECIFIED:
        return GroundingDecision(norm, norm, 0.0, False)
    if norm in vocab.by_entry:
        return GroundingDecision(norm, norm, 1.0, True)

    term_vec = vocab.embedder(norm)
    best_index, best_score = 0, -math.inf
    for i, entry_vec in enumerate(vocab.vectors()):
        score = cosine(term_vec, entry_vec)
        if score > best_score:
            best_index, best_score = i, score
    if best_score >= threshold:
        return GroundingDecision(norm, vocab.entries[best_index], best_score, True)
    return GroundingDecision(norm, norm, best_score, False)


def ground_plan(
    plan: Plan,
    object_vocab: list[str] | tuple[str, ...],
    location_vocab: list[str] | tuple[str, ...],
    embedder=None,
    threshold: float = DEFAULT_THRESHOLD,
    registry: SkillRegistry | None = None,
) -> tuple[Plan, list[GroundingDecision]]:
    """Ground every argument against the vocabulary for its parameter role.

    Skill names are never altered.  Role separation keeps object terms from
    being absorbed by similarly spelled location names and vice versa.
    """
    registry = registry or default_registry()
    embedder = embedder or TrigramEmbedder()
    vocab_by_role = {
        OBJECT: _VocabIndex(object_vocab, embedder),
        LOCATION: _VocabIndex(location_vocab, embedder),
    }
    decisions: list[GroundingDecision] = []
    actions = []
    for act in plan.actions:
        schema = registry.get(act.skill)
        if schema is None or len(act.args) != schema.arity:
            raise ValueError(f"action {act.skill}/{len(act.args)} does not validate against the registry")
        new_args = []
        for role, arg in zip(schema.params, act.args):
            decision = _ground_against(arg, vocab_by_role[role], threshold)
            decisions.append(decision)
            new_args.append(decision.chosen)
        actions.append(Action(act.skill, tuple(new_args)))
    return Plan(tuple(actions), plan.terminated), decisions
