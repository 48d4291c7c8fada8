"""Shared fixtures: the two canonical nested sentences and corpus builders."""

from __future__ import annotations

import warnings

import pytest

from mulco import Corpus, CrossingOverlapWarning, Mention, Sentence

from oracles import Span


def build_sentence(text_len: int, spans: list[Span]) -> Sentence:
    """Sentence over a digit-cycle text; crossing warnings silenced since
    randomized span sets cross routinely and deliberately."""
    text = "".join(str(i % 10) for i in range(text_len))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CrossingOverlapWarning)
        return Sentence(text, tuple(Mention(s, e, c) for s, e, c in spans))


GOV_SPANS: list[Span] = [
    (0, 3, "Loc"),  # city
    (3, 6, "Loc"),  # district
    (0, 6, "Loc"),  # district, city
    (3, 10, "Org"),  # district government
    (0, 10, "Org"),  # city district government
]

ADVERSARIAL_SPANS: list[Span] = [
    (2, 8, "X"),
    (2, 5, "X"),
    (2, 10, "X"),
    (5, 8, "X"),
    (0, 8, "X"),
]


@pytest.fixture
def gov_sentence() -> Sentence:
    """Ten tokens, five mentions, nesting depth 3; mentions share both
    start and end tokens, so no single scope covers everything."""
    return build_sentence(10, GOV_SPANS)


@pytest.fixture
def adversarial_sentence() -> Sentence:
    """[2,8) is neither shortest nor longest at its start token (2) nor at
    its last token (7), so all four canonical scopes miss it."""
    return build_sentence(10, ADVERSARIAL_SPANS)


@pytest.fixture
def tiny_corpus() -> Corpus:
    sents = (
        Sentence("abcde", (Mention(0, 2, "Loc"), Mention(0, 5, "Org"))),
        Sentence("xy", ()),
        Sentence("hello", (Mention(1, 4, "Loc"),)),
    )
    return Corpus(sents, ("Loc", "Org"))
