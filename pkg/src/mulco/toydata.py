"""Deterministic synthetic nested-entity corpus for training and testing.

Sentences are bracket expressions over a tiny alphabet.  An open bracket
carries its entity's category ("(" = Alpha, "[" = Beta); the matching close
bracket is the category-free ")".  An entity spans its open bracket through
its close bracket inclusive.  Two extra forms create shared boundaries:
double-open characters push two entities starting at one position (closed by
the next two closes, categories encoded in the character), and the
double-close "}" ends the two innermost open entities at one position.

The design forces context use.  At an open bracket the category is visible
but the length depends on where the matching close sits; at a close bracket
neither category nor length is locally visible.  A tagger reading one
character at a time therefore cannot label this corpus, while a recurrent
one only needs bracket matching within distance seven at depth three.
Nesting also caps flat baselines: an outermost-only view drops every inner
entity by construction.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Mention, Sentence
from .seeding import named_rng

CATEGORIES = ("Alpha", "Beta")
MAX_ENTITY_LEN = 8

OPEN = {"Alpha": "(", "Beta": "["}
# char -> (outer category, inner category); both entities start here
DOUBLE_OPEN = {
    ("Alpha", "Alpha"): "{",
    ("Alpha", "Beta"): "<",
    ("Beta", "Alpha"): "%",
    ("Beta", "Beta"): "&",
}
CLOSE = ")"
DOUBLE_CLOSE = "}"  # ends the two innermost open entities
FILLERS = "wxyz."

_KINDS = ("flat", "nested", "chain3", "shared_end", "shared_start", "empty")
_WEIGHTS = (0.27, 0.22, 0.12, 0.17, 0.17, 0.05)


def _cat(rng: np.random.Generator) -> str:
    return CATEGORIES[int(rng.integers(len(CATEGORIES)))]


def _fill(rng: np.random.Generator, n: int) -> list[str]:
    return [FILLERS[int(i)] for i in rng.integers(len(FILLERS), size=n)]


def _segment(rng: np.random.Generator) -> tuple[list[str], list[Mention]]:
    kind = _KINDS[int(rng.choice(len(_KINDS), p=_WEIGHTS))]
    if kind == "empty":
        return _fill(rng, int(rng.integers(3, 7))), []
    if kind == "flat":
        k = int(rng.integers(0, MAX_ENTITY_LEN - 1))
        cat = _cat(rng)
        chars = [OPEN[cat], *_fill(rng, k), CLOSE]
        return chars, [Mention(0, k + 2, cat)]
    if kind == "nested":
        # ( f^a ( f^b ) f^c )  with outer length a+b+c+4 <= 8
        a, b, c = _budget_split(rng, 3, MAX_ENTITY_LEN - 4)
        outer, inner = _cat(rng), _cat(rng)
        chars = [
            OPEN[outer],
            *_fill(rng, a),
            OPEN[inner],
            *_fill(rng, b),
            CLOSE,
            *_fill(rng, c),
            CLOSE,
        ]
        return chars, [
            Mention(0, a + b + c + 4, outer),
            Mention(a + 1, a + b + 3, inner),
        ]
    if kind == "chain3":
        # ( f^a ( f^b ( f^c ) f^d ) f^e )  with outer length <= 8
        a, b, c, d, e = _budget_split(rng, 5, MAX_ENTITY_LEN - 6)
        cats = [_cat(rng) for _ in range(3)]
        chars = [
            OPEN[cats[0]],
            *_fill(rng, a),
            OPEN[cats[1]],
            *_fill(rng, b),
            OPEN[cats[2]],
            *_fill(rng, c),
            CLOSE,
            *_fill(rng, d),
            CLOSE,
            *_fill(rng, e),
            CLOSE,
        ]
        return chars, [
            Mention(0, a + b + c + d + e + 6, cats[0]),
            Mention(a + 1, a + b + c + d + 5, cats[1]),
            Mention(a + b + 2, a + b + c + 4, cats[2]),
        ]
    if kind == "shared_end":
        # ( f^a ( f^b }  both entities end on the double close
        a, b = _budget_split(rng, 2, MAX_ENTITY_LEN - 3)
        outer, inner = _cat(rng), _cat(rng)
        chars = [OPEN[outer], *_fill(rng, a), OPEN[inner], *_fill(rng, b), DOUBLE_CLOSE]
        return chars, [
            Mention(0, a + b + 3, outer),
            Mention(a + 1, a + b + 3, inner),
        ]
    # shared_start: D f^a ) f^b )  both entities start on the double open
    a, b = _budget_split(rng, 2, MAX_ENTITY_LEN - 3)
    outer, inner = _cat(rng), _cat(rng)
    chars = [DOUBLE_OPEN[(outer, inner)], *_fill(rng, a), CLOSE, *_fill(rng, b), CLOSE]
    return chars, [
        Mention(0, a + b + 3, outer),
        Mention(0, a + 2, inner),
    ]


def _budget_split(rng: np.random.Generator, parts: int, budget: int) -> tuple[int, ...]:
    """Split a filler budget into ``parts`` nonnegative counts, total <= budget."""
    total = int(rng.integers(0, budget + 1))
    cuts = sorted(int(rng.integers(0, total + 1)) for _ in range(parts - 1))
    edges = [0, *cuts, total]
    return tuple(edges[i + 1] - edges[i] for i in range(parts))


def generate_toy_corpus(size: int, seed: int) -> Corpus:
    """Generate ``size`` sentences; deterministic for a given seed."""
    rng = named_rng(seed, "toygen")
    sentences = []
    for _ in range(size):
        chars: list[str] = _fill(rng, int(rng.integers(0, 3)))
        mentions: list[Mention] = []
        for i in range(int(rng.integers(1, 4))):
            if i > 0:
                chars.extend(_fill(rng, int(rng.integers(1, 4))))
            seg_chars, seg_mentions = _segment(rng)
            base = len(chars)
            chars.extend(seg_chars)
            mentions.extend(
                Mention(base + m.start, base + m.end, m.category) for m in seg_mentions
            )
        chars.extend(_fill(rng, int(rng.integers(0, 3))))
        sentences.append(Sentence("".join(chars), tuple(mentions)))
    return Corpus(tuple(sentences), CATEGORIES)
