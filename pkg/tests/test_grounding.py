from __future__ import annotations

import math
import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierplan.grounding import (
    EmptyTerm,
    EmptyVocabulary,
    GroundingDecision,
    RemoteEmbedder,
    TermVector,
    TrigramEmbedder,
    cosine,
    embed,
    ground_plan,
    ground_term,
)
from hierplan.plan import Action, Plan

from .oracles import bf_ground, trigram_cosine

VOCAB = ["pillow", "couch", "drawer"]

WORDS = [
    "pillow", "pillows", "couch", "drawer", "green apple", "apple", "apples",
    "toy cube", "cube", "shelf", "shelves", "bottle", "bottles", "floor",
    "table", "tables", "mug", "mugs", "socks", "sock", "jacket", "towel",
]


def word_like(rng: random.Random) -> str:
    if rng.random() < 0.5:
        return rng.choice(WORDS)
    length = rng.randint(2, 9)
    word = "".join(rng.choice(string.ascii_lowercase) for _ in range(length))
    return word if rng.random() < 0.8 else f"{word} {rng.choice(WORDS)}"


class TestEmbed:
    def test_deterministic(self):
        assert embed("apple") == embed("apple")

    def test_unit_norm(self):
        vec = embed("green apple")
        assert math.isqrt(1) == 1  # noqa: keep mypy quiet about math import
        assert abs(math.sqrt(sum(v * v for v in vec.vector)) - 1.0) < 1e-9

    def test_self_similarity(self):
        assert cosine(embed("apple"), embed("apple")) == pytest.approx(1.0)

    def test_shared_substring_beats_disjoint(self):
        green = embed("green apple")
        assert cosine(green, embed("apple")) > cosine(green, embed("drawer"))

    def test_matches_oracle_cosine(self):
        rng = random.Random(3)
        for _ in range(300):
            a, b = word_like(rng), word_like(rng)
            assert cosine(embed(a), embed(b)) == pytest.approx(trigram_cosine(a, b), abs=1e-12)

    def test_empty_term(self):
        with pytest.raises(EmptyTerm):
            embed("   ")

    def test_mixing_sparse_and_dense_raises(self):
        dense = TermVector("x", (1.0,))
        with pytest.raises(ValueError):
            cosine(dense, embed("x"))


class TestGroundTerm:
    def test_exact_match_short_circuits(self):
        decision = ground_term("pillow", VOCAB)
        assert decision == GroundingDecision("pillow", "pillow", 1.0, True)

    def test_exact_match_survives_degenerate_threshold(self):
        decision = ground_term("pillow", VOCAB, threshold=1.01)
        assert decision.accepted and decision.chosen == "pillow"

    def test_unspecified_is_reserved(self):
        decision = ground_term("unspecified", VOCAB)
        assert decision.chosen == "unspecified"
        assert not decision.accepted

    def test_empty_vocabulary(self):
        with pytest.raises(EmptyVocabulary):
            ground_term("pillow", [])

    def test_close_misspelling_is_repaired(self):
        decision = ground_term("pillows", VOCAB)
        assert decision.chosen == "pillow"
        assert decision.accepted
        assert decision.score >= 0.35

    def test_cushion_decision_equals_oracle(self):
        decision = ground_term("cushion", VOCAB)
        chosen, accepted = bf_ground("cushion", VOCAB, 0.35)
        assert (decision.chosen, decision.accepted) == (chosen, accepted)

    def test_below_threshold_passes_through(self):
        decision = ground_term("xyzzy", VOCAB, threshold=0.9)
        assert decision.chosen == "xyzzy"
        assert not decision.accepted

    def test_tie_breaks_to_lower_index(self):
        # identical entries guarantee an exact score tie
        decision = ground_term("pillows", ["pillow", "pillow"], threshold=0.0)
        assert decision.chosen == "pillow"

    def test_randomized_decisions_match_oracle(self):
        rng = random.Random(99)
        for _ in range(300):
            vocab = [word_like(rng) for _ in range(rng.randint(1, 6))]
            term = word_like(rng)
            threshold = rng.choice([0.0, 0.2, 0.35, 0.6])
            decision = ground_term(term, vocab, threshold=threshold)
            chosen, accepted = bf_ground(term, vocab, threshold)
            assert (decision.chosen, decision.accepted) == (chosen, accepted)


PLAN = Plan(
    (
        Action("move_to", ("pillow", "floor")),
        Action("pick_up", ("pillow", "floor")),
        Action("move_to", ("couch", "unspecified")),
        Action("put", ("pillow", "couch")),
    ),
    terminated=True,
)

OBJECTS = ("pillow", "bowl", "toy cube")
LOCATIONS = ("floor", "couch", "drawer", "table")


class TestGroundPlan:
    def test_exact_plan_unchanged_with_full_scores(self):
        plan = Plan(
            (
                Action("move_to", ("pillow", "floor")),
                Action("pick_up", ("pillow", "floor")),
                Action("put", ("pillow", "couch")),
            ),
            terminated=True,
        )
        grounded, decisions = ground_plan(plan, OBJECTS, LOCATIONS)
        assert grounded == plan
        assert all(d.score == 1.0 for d in decisions)

    def test_navigation_target_in_object_slot_passes_through(self):
        # move_to('couch', ...) carries a location in the object slot; role
        # separation means it is left alone, never rewritten to an object.
        grounded, decisions = ground_plan(PLAN, OBJECTS, LOCATIONS)
        assert grounded == PLAN
        couch = next(d for d in decisions if d.original == "couch" and not d.accepted)
        assert couch.chosen == "couch"

    def test_hallucinated_argument_repaired_per_oracle(self):
        plan = Plan((Action("put", ("pillow", "tables")),), terminated=True)
        grounded, decisions = ground_plan(plan, OBJECTS, LOCATIONS)
        expected, accepted = bf_ground("tables", list(LOCATIONS), 0.35)
        assert accepted
        assert grounded.actions[0].args == ("pillow", expected)

    def test_degenerate_threshold_never_replaces(self):
        plan = Plan((Action("put", ("pillowy", "tables")),), terminated=True)
        grounded, _ = ground_plan(plan, OBJECTS, LOCATIONS, threshold=1.01)
        assert grounded == plan

    def test_skill_names_never_altered(self):
        grounded, _ = ground_plan(PLAN, OBJECTS, LOCATIONS)
        assert [a.skill for a in grounded.actions] == [a.skill for a in PLAN.actions]

    def test_roles_are_separated(self):
        # 'floor' must only be considered for the location slot, so an object
        # slot spelled 'floor' stays unmatched rather than crossing roles.
        plan = Plan((Action("move_to", ("floorr", "floorr")),), terminated=True)
        grounded, decisions = ground_plan(plan, ("pillow",), ("floor",), threshold=0.3)
        obj_decision, loc_decision = decisions
        assert loc_decision.chosen == "floor"
        assert obj_decision.chosen == "floorr"  # nothing close among objects

    def test_idempotent(self):
        rng = random.Random(17)
        for _ in range(100):
            actions = tuple(
                Action("put", (word_like(rng), word_like(rng))) for _ in range(rng.randint(1, 4))
            )
            plan = Plan(actions, terminated=True)
            once, _ = ground_plan(plan, OBJECTS, LOCATIONS)
            twice, _ = ground_plan(once, OBJECTS, LOCATIONS)
            assert once == twice

    def test_vocabulary_closure(self):
        rng = random.Random(23)
        for _ in range(100):
            plan = Plan((Action("move_to", (word_like(rng), word_like(rng))),), terminated=True)
            _, decisions = ground_plan(plan, OBJECTS, LOCATIONS)
            for decision in decisions:
                if decision.accepted:
                    assert decision.chosen in OBJECTS + LOCATIONS

    def test_invalid_plan_rejected(self):
        with pytest.raises(ValueError):
            ground_plan(Plan((Action("warp", ("a", "b")),)), OBJECTS, LOCATIONS)


class TestScaleInvariance:
    def test_prenormalization_scale_is_irrelevant(self):
        base = TrigramEmbedder()

        class Scaled:
            def __call__(self, term):
                vec = base(term)
                return TermVector(vec.term, vec.vector, vec.features)  # unit norm already

        rng = random.Random(31)
        for _ in range(50):
            term = word_like(rng)
            a = ground_term(term, VOCAB, embedder=base)
            b = ground_term(term, VOCAB, embedder=Scaled())
            assert (a.chosen, a.accepted) == (b.chosen, b.accepted)


@st.composite
def term_strings(draw):
    return draw(st.text(alphabet="abcdefghijklmnopqrstuvwxyz ", min_size=1, max_size=12)).strip() or "a"


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(term=term_strings(), vocab=st.lists(term_strings(), min_size=1, max_size=5))
    def test_exact_match_supremacy(self, term, vocab):
        vocab = vocab + [term]
        decision = ground_term(term, vocab)
        from hierplan.plan import normalize_arg

        if normalize_arg(term) == "unspecified":
            assert not decision.accepted
        else:
            assert decision.accepted
            assert decision.chosen == normalize_arg(term)
            assert decision.score == 1.0


class TestRemoteEmbedder:
    def test_openai_style_payload(self, stub_server):
        server = stub_server(lambda path, body: (200, {"data": [{"embedding": [3.0, 4.0]}]}))
        embedder = RemoteEmbedder(f"{server.url}/embed")
        vec = embedder("apple")
        assert vec.vector == (0.6, 0.8)
        assert server.requests[0]["body"] == {"input": ["apple"]}

    def test_plain_vectors_payload(self, stub_server):
        server = stub_server(lambda path, body: (200, {"vectors": [[0.0, 2.0]]}))
        vec = RemoteEmbedder(f"{server.url}/embed")("apple")
        assert vec.vector == (0.0, 1.0)

    def test_zero_vector_rejected(self, stub_server):
        server = stub_server(lambda path, body: (200, {"vectors": [[0.0, 0.0]]}))
        with pytest.raises(ValueError):
            RemoteEmbedder(f"{server.url}/embed")("apple")

    def test_transport_errors_pass_through(self):
        import requests

        embedder = RemoteEmbedder("http://127.0.0.1:9/embed", timeout=0.2)
        with pytest.raises(requests.RequestException):
            embedder("apple")
