"""Flat BIOES tagging for the innermost / outermost baselines.

A flat tagger can keep only one mention per token, so a nested mention set is
first reduced to a non-overlapping selection: ``innermost`` keeps mentions
containing no other mention, ``outermost`` keeps mentions contained in no
other.  Crossing survivors are resolved by (earlier start, then shorter span)
priority; losers are reported back to the caller.
"""

from __future__ import annotations

import re
from typing import Sequence

from .corpus import Mention, Sentence

VARIANTS = ("innermost", "outermost")

_TAG_RE = re.compile(r"^(O|[BIES]-.+)$")


def select_flat(sentence: Sentence, variant: str) -> tuple[list[Mention], list[Mention]]:
    """Reduce to a non-overlapping mention list.

    Returns (kept, dropped) where dropped holds every mention absent from the
    flat view: those filtered by the innermost/outermost rule plus crossing
    conflict losers.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    ms = list(sentence.mentions)
    if variant == "innermost":
        selected = [m for m in ms if not any(m.contains(o) for o in ms)]
    else:
        selected = [m for m in ms if not any(o.contains(m) for o in ms)]
    dropped = [m for m in ms if m not in selected]
    kept: list[Mention] = []
    for m in sorted(selected, key=lambda m: (m.start, m.length)):
        if any(m.overlaps(k) for k in kept):
            dropped.append(m)
        else:
            kept.append(m)
    return kept, dropped


def bioes_encode(sentence: Sentence, variant: str) -> list[str]:
    """Per-token B-/I-/E-/S-cat tags for the flat selection, O elsewhere."""
    kept, _ = select_flat(sentence, variant)
    tags = ["O"] * len(sentence)
    for m in kept:
        if m.length == 1:
            tags[m.start] = f"S-{m.category}"
        else:
            tags[m.start] = f"B-{m.category}"
            for i in range(m.start + 1, m.end - 1):
                tags[i] = f"I-{m.category}"
            tags[m.end - 1] = f"E-{m.category}"
    return tags


def bioes_decode(tags: Sequence[str]) -> tuple[set[Mention], int]:
    """Extract mentions from well-formed B..E / S segments.

    Ill-formed segments (I/E with no opening B, B without a matching E, or a
    category switch mid-segment) are dropped; the second return value counts
    them.
    """
    for t in tags:
        if not _TAG_RE.match(t):
            raise ValueError(f"invalid BIOES tag {t!r}")
    mentions: set[Mention] = set()
    dropped = 0
    i = 0
    n = len(tags)
    while i < n:
        tag = tags[i]
        if tag == "O":
            i += 1
        elif tag.startswith("S-"):
            mentions.add(Mention(i, i + 1, tag[2:]))
            i += 1
        elif tag.startswith("B-"):
            cat = tag[2:]
            j = i + 1
            while j < n and tags[j] == f"I-{cat}":
                j += 1
            if j < n and tags[j] == f"E-{cat}":
                mentions.add(Mention(i, j + 1, cat))
                i = j + 1
            else:
                dropped += 1
                i = j
        else:
            # stray I-/E- with no opening B
            dropped += 1
            i += 1
    return mentions, dropped


def tag_alphabet(categories: Sequence[str]) -> list[str]:
    """Fixed tag order: O first, then B/I/E/S per category in order."""
    tags = ["O"]
    for cat in categories:
        tags.extend([f"B-{cat}", f"I-{cat}", f"E-{cat}", f"S-{cat}"])
    return tags
