"""Scope-based labeling: encode nested mentions as (anchor, length) sequences.

A scope identifies at most one mention per anchor position.  The anchor of a
mention under a scope is its x-th token counted from the start or from the
end; when several mentions share that anchor position the scope keeps the
shortest or the longest.  A sentence is then labeled with two aligned
sequences: anchor labels (a category, or NA) and length labels (the anchored
mention's token length, or 0).  Decoding inverts the arithmetic.

The four canonical scopes are B-min, B-max (first token as anchor, keeping
the shortest / longest mention) and E-min, E-max (last token as anchor).
Generalized scopes anchored on the x-th token from either side are written
``B3-min``, ``E2-max`` and so on.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Mention, Sentence

DEFAULT_MAX_LEN = 512

NA = None  # anchor label for "not an anchor"


class OverlengthWarning(UserWarning):
    """A mention exceeds the length cap and is excluded from the encoding."""


@dataclass(frozen=True)
class Scope:
    """Anchor rule: ``side`` ('B' = from start, 'E' = from end), 1-based
    ``offset`` of the anchor token within the mention, and ``select``
    ('min' | 'max') picking among mentions sharing the anchor position."""

    side: str
    offset: int
    select: str

    def __post_init__(self):
        if self.side not in ("B", "E"):
            raise ValueError(f"scope side must be 'B' or 'E', got {self.side!r}")
        if self.offset < 1:
            raise ValueError(f"scope offset must be >= 1, got {self.offset}")
        if self.select not in ("min", "max"):
            raise ValueError(f"scope select must be 'min' or 'max', got {self.select!r}")

    @property
    def name(self) -> str:
        x = "" if self.offset == 1 else str(self.offset)
        return f"{self.side}{x}-{self.select}"

    @classmethod
    def parse(cls, text: str) -> "Scope":
        try:
            head, select = text.split("-")
            side, digits = head[0], head[1:]
            offset = int(digits) if digits else 1
            return cls(side, offset, select)
        except (ValueError, IndexError) as e:
            raise ValueError(f"cannot parse scope {text!r} (expected e.g. 'B-min', 'E2-max')") from e

    def anchor_of(self, mention: Mention) -> int | None:
        """Anchor token position of ``mention``, or None if it is too short
        to have an x-th token."""
        if mention.length < self.offset:
            return None
        if self.side == "B":
            return mention.start + self.offset - 1
        return mention.end - self.offset

    def span_at(self, anchor: int, length: int) -> tuple[int, int]:
        """Span implied by an anchor position and a mention length."""
        if self.side == "B":
            start = anchor - (self.offset - 1)
        else:
            start = anchor + self.offset - length
        return start, start + length


B_MIN = Scope("B", 1, "min")
B_MAX = Scope("B", 1, "max")
E_MIN = Scope("E", 1, "min")
E_MAX = Scope("E", 1, "max")
CANONICAL_SCOPES = (B_MIN, B_MAX, E_MIN, E_MAX)


@dataclass(frozen=True)
class Labeling:
    """One scope's gold encoding of a sentence.

    ``anchors[i]`` is a category name or NA (None); ``lengths[i]`` is the
    anchored mention's length, 0 exactly where the anchor is NA.
    """

    scope: Scope
    anchors: tuple[str | None, ...]
    lengths: tuple[int, ...]

    def __post_init__(self):
        if len(self.anchors) != len(self.lengths):
            raise ValueError("anchor and length sequences differ in length")
        for a, z in zip(self.anchors, self.lengths):
            if (a is NA) != (z == 0):
                raise ValueError(f"anchor/length mismatch: anchor={a!r} length={z}")
            if z < 0:
                raise ValueError(f"negative length label {z}")


@dataclass
class DecodeDiagnostics:
    """Counts decoded spans that had to be dropped as inconsistent."""

    out_of_bounds: int = 0
    dropped: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class ScopePrediction:
    """Per-token class distributions for one scope.

    ``anchor_probs`` has one column per anchor class (NA first, then the
    categories in order); ``length_probs`` one column per length 0..N_l.
    """

    categories: tuple[str, ...]
    anchor_probs: np.ndarray  # (N, n_categories + 1)
    length_probs: np.ndarray  # (N, max_len + 1)

    def __post_init__(self):
        a, l = self.anchor_probs, self.length_probs
        if a.ndim != 2 or l.ndim != 2 or a.shape[0] != l.shape[0]:
            raise ValueError("probability arrays must be (N, classes) with equal N")
        if a.shape[1] != len(self.categories) + 1:
            raise ValueError("anchor columns must be n_categories + 1")
        for arr, what in ((a, "anchor"), (l, "length")):
            if np.any(arr < 0):
                raise ValueError(f"negative {what} probability")
            if np.max(np.abs(arr.sum(axis=1) - 1.0)) > 1e-6:
                raise ValueError(f"{what} rows must sum to 1")


@dataclass(frozen=True)
class DecodedMention:
    mention: Mention
    confidence: float
    source: Scope


def encode(sentence: Sentence, scope: Scope, max_len: int = DEFAULT_MAX_LEN) -> Labeling:
    """Encode a sentence's mentions under one scope.

    Each anchor position keeps the min/max-length mention anchored there;
    mentions longer than ``max_len`` are excluded (with a warning) since the
    length-label alphabet cannot express them.
    """
    n = len(sentence)
    anchors: list[str | None] = [NA] * n
    lengths = [0] * n
    best: dict[int, Mention] = {}
    excluded = []
    for m in sentence.mentions:
        if m.length > max_len:
            excluded.append(m)
            continue
        pos = scope.anchor_of(m)
        if pos is None:
            continue
        cur = best.get(pos)
        if cur is None:
            best[pos] = m
        elif scope.select == "min" and m.length < cur.length:
            best[pos] = m
        elif scope.select == "max" and m.length > cur.length:
            best[pos] = m
    for pos, m in best.items():
        anchors[pos] = m.category
        lengths[pos] = m.length
    if excluded:
        warnings.warn(
            f"{len(excluded)} mention(s) longer than {max_len} excluded from {scope.name} encoding",
            OverlengthWarning,
            stacklevel=2,
        )
    return Labeling(scope, tuple(anchors), tuple(lengths))


def decode_hard(
    labeling: Labeling,
    scope: Scope,
    sentence_len: int,
    diagnostics: DecodeDiagnostics | None = None,
) -> set[Mention]:
    """Invert an encoding: every labeled anchor yields one mention.

    Spans that fall outside ``[0, sentence_len]`` are dropped (and counted in
    ``diagnostics``); they can only arise from inconsistent model output.
    """
    out: set[Mention] = set()
    for pos, (cat, z) in enumerate(zip(labeling.anchors, labeling.lengths)):
        if cat is NA:
            continue
        start, end = scope.span_at(pos, z)
        if start < 0 or end > sentence_len:
            if diagnostics is not None:
                diagnostics.out_of_bounds += 1
                diagnostics.dropped.append((start, end))
            continue
        out.add(Mention(start, end, cat))
    return out


def decode_scored(
    pred: ScopePrediction,
    scope: Scope,
    sentence_len: int,
    diagnostics: DecodeDiagnostics | None = None,
) -> list[DecodedMention]:
    """Decode per-token argmax predictions into scored mentions.

    A position emits iff its anchor argmax is a category and its length
    argmax is >= 1; the confidence is the product of the two winning
    probabilities (both classifiers must be right for the span to be right).
    """
    out: list[DecodedMention] = []
    anchor_idx = np.argmax(pred.anchor_probs, axis=1)
    length_idx = np.argmax(pred.length_probs, axis=1)
    for pos in range(pred.anchor_probs.shape[0]):
        a, z = int(anchor_idx[pos]), int(length_idx[pos])
        if a == 0 or z == 0:
            continue
        start, end = scope.span_at(pos, z)
        if start < 0 or end > sentence_len:
            if diagnostics is not None:
                diagnostics.out_of_bounds += 1
                diagnostics.dropped.append((start, end))
            continue
        conf = float(pred.anchor_probs[pos, a] * pred.length_probs[pos, z])
        out.append(DecodedMention(Mention(start, end, pred.categories[a - 1]), conf, scope))
    return out


def aggregate(decoded: Iterable[Iterable[DecodedMention]]) -> set[Mention]:
    """Merge per-scope decodings into one mention set.

    Mentions are unioned by span; a span predicted with several categories
    keeps the single highest-confidence one, ties broken by lexicographically
    smallest category name so the result is order-independent.
    """
    best_conf: dict[tuple[int, int, str], float] = {}
    for scope_mentions in decoded:
        for dm in scope_mentions:
            key = (dm.mention.start, dm.mention.end, dm.mention.category)
            if dm.confidence > best_conf.get(key, 0.0):
                best_conf[key] = dm.confidence
    winners: dict[tuple[int, int], tuple[float, str]] = {}
    for (start, end, cat), conf in best_conf.items():
        cur = winners.get((start, end))
        if cur is None or conf > cur[0] or (conf == cur[0] and cat < cur[1]):
            winners[(start, end)] = (conf, cat)
    return {Mention(start, end, cat) for (start, end), (_, cat) in winners.items()}


@dataclass(frozen=True)
class CoverageResult:
    covered: frozenset[Mention]
    uncovered: frozenset[Mention]
    per_scope: dict[str, frozenset[Mention]]


def coverage(
    sentence: Sentence,
    scopes: Sequence[Scope] = CANONICAL_SCOPES,
    max_len: int = DEFAULT_MAX_LEN,
) -> CoverageResult:
    """Which gold mentions survive an encode/decode round trip of each scope."""
    per_scope: dict[str, frozenset[Mention]] = {}
    covered: set[Mention] = set()
    for scope in scopes:
        got = decode_hard(encode(sentence, scope, max_len), scope, len(sentence))
        per_scope[scope.name] = frozenset(got)
        covered |= got
    uncovered = set(sentence.mentions) - covered
    return CoverageResult(frozenset(covered), frozenset(uncovered), per_scope)


def four_scope_uncovered(sentence: Sentence) -> set[Mention]:
    """Closed-form predicate for the canonical four scopes (no length cap).

    A mention is unreachable iff it is neither the shortest nor the longest
    among mentions sharing its start token, and neither the shortest nor the
    longest among mentions sharing its last token.
    """
    by_start: dict[int, list[Mention]] = {}
    by_last: dict[int, list[Mention]] = {}
    for m in sentence.mentions:
        by_start.setdefault(m.start, []).append(m)
        by_last.setdefault(m.end - 1, []).append(m)
    out = set()
    for m in sentence.mentions:
        group_s = [x.length for x in by_start[m.start]]
        group_e = [x.length for x in by_last[m.end - 1]]
        extreme_at_start = m.length in (min(group_s), max(group_s))
        extreme_at_end = m.length in (min(group_e), max(group_e))
        if not extreme_at_start and not extreme_at_end:
            out.add(m)
    return out


def labeling_to_json(labeling: Labeling) -> str:
    obj = {
        "scope": labeling.scope.name,
        "anchors": ["NA" if a is NA else a for a in labeling.anchors],
        "lengths": list(labeling.lengths),
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def labeling_from_json(text: str) -> Labeling:
    obj = json.loads(text)
    scope = Scope.parse(obj["scope"])
    anchors = tuple(NA if a == "NA" else a for a in obj["anchors"])
    return Labeling(scope, anchors, tuple(int(z) for z in obj["lengths"]))


def write_labelings(path: str | Path, groups: Iterable[Sequence[Labeling]]) -> None:
    """One JSONL line per (sentence, scope), sentence-major order."""
    with open(path, "w", encoding="utf-8") as f:
        for group in groups:
            for labeling in group:
                f.write(labeling_to_json(labeling) + "\n")


def read_labelings(path: str | Path, scopes: Sequence[Scope]) -> list[list[Labeling]]:
    """Read back groups of ``len(scopes)`` consecutive lines per sentence."""
    names = [s.name for s in scopes]
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) % len(scopes) != 0:
        raise ValueError(
            f"{path}: {len(lines)} labeling lines is not a multiple of {len(scopes)} scopes"
        )
    groups = []
    for i in range(0, len(lines), len(scopes)):
        group = [labeling_from_json(ln) for ln in lines[i : i + len(scopes)]]
        got = [g.scope.name for g in group]
        if got != names:
            raise ValueError(f"{path}: scope order {got} does not match expected {names}")
        groups.append(group)
    return groups
