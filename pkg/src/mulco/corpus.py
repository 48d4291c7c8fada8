"""Nested-NER corpus loading, validation and statistics.

Corpus files are UTF-8 JSONL, one sentence per line:

    {"text": "...", "entities": [{"start": 0, "end": 2, "category": "Location"}, ...]}

Offsets are Unicode code-point offsets into ``text``; a code point is a token.
Spans are half-open ``[start, end)``.  An optional sidecar manifest
``{"categories": [...]}`` pins the allowed category set and its order.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class CorpusError(ValueError):
    """Malformed or invalid corpus content, with the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CrossingOverlapWarning(UserWarning):
    """Two mentions overlap without either containing the other.

    Legal in the file format, but unusual for nested-NER data, so it is
    surfaced rather than silently accepted.
    """


@dataclass(frozen=True, order=True)
class Mention:
    """A labeled span ``[start, end)`` over a sentence's code points."""

    start: int
    end: int
    category: str

    @property
    def length(self) -> int:
        return self.end - self.start

    def contains(self, other: "Mention") -> bool:
        """Strict containment: covers ``other`` and is not the same span."""
        return (
            self.start <= other.start
            and other.end <= self.end
            and (self.start, self.end) != (other.start, other.end)
        )

    def overlaps(self, other: "Mention") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class Sentence:
    text: str
    mentions: tuple[Mention, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mentions", tuple(sorted(self.mentions)))
        validate_sentence(self.text, self.mentions)

    def __len__(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    categories: tuple[str, ...]

    def __post_init__(self):
        known = set(self.categories)
        for i, sent in enumerate(self.sentences):
            for m in sent.mentions:
                if m.category not in known:
                    raise CorpusError(
                        f"unknown category {m.category!r} (known: {sorted(known)})",
                        line=i + 1,
                    )

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    nested_sentence_count: int
    mention_count: int
    nested_mention_count: int
    avg_tokens: float
    max_depth: int
    category_counts: dict[str, int] = field(default_factory=dict)
    share_first: int = 0
    share_last: int = 0

    def as_dict(self) -> dict:
        return {
            "sentences": self.sentence_count,
            "nested_sentences": self.nested_sentence_count,
            "mentions": self.mention_count,
            "nested_mentions": self.nested_mention_count,
            "avg_tokens": self.avg_tokens,
            "max_depth": self.max_depth,
            "category_counts": dict(self.category_counts),
            "share_first": self.share_first,
            "share_last": self.share_last,
        }


def validate_sentence(text: str, mentions: Iterable[Mention], line: int | None = None) -> None:
    """Raise CorpusError on any span invariant violation; warn on crossings."""
    n = len(text)
    if n < 1:
        raise CorpusError("empty text", line)
    seen_spans: set[tuple[int, int]] = set()
    ms = list(mentions)
    for m in ms:
        if m.start >= m.end:
            raise CorpusError(f"empty span [{m.start},{m.end})", line)
        if m.start < 0 or m.end > n:
            raise CorpusError(f"span [{m.start},{m.end}) out of bounds for {n} tokens", line)
        if (m.start, m.end) in seen_spans:
            raise CorpusError(f"duplicate span [{m.start},{m.end})", line)
        seen_spans.add((m.start, m.end))
    for i, a in enumerate(ms):
        for b in ms[i + 1 :]:
            if a.overlaps(b) and not a.contains(b) and not b.contains(a):
                where = f"line {line}: " if line is not None else ""
                warnings.warn(
                    f"{where}crossing overlap between [{a.start},{a.end}) and "
                    f"[{b.start},{b.end})",
                    CrossingOverlapWarning,
                    stacklevel=2,
                )


def load_manifest(path: str | Path) -> tuple[str, ...]:
    """Read a ``{"categories": [...]}`` sidecar manifest."""
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    cats = obj.get("categories")
    if not isinstance(cats, list) or not all(isinstance(c, str) for c in cats):
        raise CorpusError(f"manifest {path} must map 'categories' to a list of strings")
    return tuple(cats)


def load_corpus(path: str | Path, categories: Iterable[str] | None = None) -> Corpus:
    """Load and validate a JSONL corpus.

    When ``categories`` is given (e.g. from a manifest) it fixes the category
    set and order; mentions with categories outside it are rejected.
    Otherwise categories are collected from the data in sorted order.
    """
    sentences: list[Sentence] = []
    seen_cats: set[str] = set()
    fixed = tuple(categories) if categories is not None else None
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise CorpusError(f"malformed JSON ({e.msg})", lineno) from e
            if not isinstance(obj, dict) or "text" not in obj:
                raise CorpusError("missing 'text' field", lineno)
            text = obj["text"]
            if not isinstance(text, str):
                raise CorpusError("'text' must be a string", lineno)
            mentions = []
            for ent in obj.get("entities", []):
                try:
                    m = Mention(int(ent["start"]), int(ent["end"]), str(ent["category"]))
                except (KeyError, TypeError, ValueError) as e:
                    raise CorpusError(f"malformed entity {ent!r}", lineno) from e
                if fixed is not None and m.category not in fixed:
                    raise CorpusError(f"unknown category {m.category!r}", lineno)
                mentions.append(m)
                seen_cats.add(m.category)
            try:
                sentences.append(Sentence(text, tuple(mentions)))
            except CorpusError as e:
                raise CorpusError(str(e), lineno) from e
    cats = fixed if fixed is not None else tuple(sorted(seen_cats))
    return Corpus(tuple(sentences), cats)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSONL form (fixed key order, compact, sorted spans)."""
    with open(path, "w", encoding="utf-8") as f:
        for sent in corpus:
            f.write(sentence_to_json(sent) + "\n")


def sentence_to_json(sent: Sentence) -> str:
    obj = {
        "text": sent.text,
        "entities": [
            {"start": m.start, "end": m.end, "category": m.category} for m in sent.mentions
        ],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def nested_flags(mentions: Iterable[Mention]) -> dict[Mention, bool]:
    """A mention is nested iff it strictly contains or is contained in another."""
    ms = list(mentions)
    flags = {m: False for m in ms}
    for i, a in enumerate(ms):
        for b in ms[i + 1 :]:
            if a.contains(b) or b.contains(a):
                flags[a] = True
                flags[b] = True
    return flags


def mention_depths(mentions: Iterable[Mention]) -> dict[Mention, int]:
    """Depth of each mention: longest strict-containment chain ending at it.

    Containers are strictly longer, so computing in descending length order
    guarantees every container's depth is already known.
    """
    ms = sorted(mentions, key=lambda m: -m.length)
    depths: dict[Mention, int] = {}
    for m in ms:
        containers = [c for c in ms if c.contains(m)]
        depths[m] = 1 + max((depths[c] for c in containers), default=0)
    return depths


def _share_counts(sent: Sentence) -> tuple[int, int]:
    """Count nested mentions sharing their first / last token with another mention."""
    flags = nested_flags(sent.mentions)
    starts = Counter(m.start for m in sent.mentions)
    lasts = Counter(m.end - 1 for m in sent.mentions)
    share_first = sum(1 for m in sent.mentions if flags[m] and starts[m.start] > 1)
    share_last = sum(1 for m in sent.mentions if flags[m] and lasts[m.end - 1] > 1)
    return share_first, share_last


def compute_stats(corpus: Corpus) -> CorpusStats:
    sentence_count = len(corpus)
    nested_sentences = 0
    mention_count = 0
    nested_mentions = 0
    total_tokens = 0
    max_depth = 0
    cat_counts: Counter[str] = Counter({c: 0 for c in corpus.categories})
    share_first = 0
    share_last = 0
    for sent in corpus:
        total_tokens += len(sent)
        mention_count += len(sent.mentions)
        flags = nested_flags(sent.mentions)
        n_nested = sum(flags.values())
        nested_mentions += n_nested
        if n_nested:
            nested_sentences += 1
        depths = mention_depths(sent.mentions)
        for m in sent.mentions:
            cat_counts[m.category] += 1
            max_depth = max(max_depth, depths[m])
        sf, sl = _share_counts(sent)
        share_first += sf
        share_last += sl
    return CorpusStats(
        sentence_count=sentence_count,
        nested_sentence_count=nested_sentences,
        mention_count=mention_count,
        nested_mention_count=nested_mentions,
        avg_tokens=total_tokens / sentence_count if sentence_count else 0.0,
        max_depth=max_depth,
        category_counts=dict(cat_counts),
        share_first=share_first,
        share_last=share_last,
    )


def diversity_ratio(corpus: Corpus) -> tuple[int, int]:
    """(share-first, share-last) counts over nested mentions of the corpus.

    Measures how often nested mentions share a boundary token with another
    mention; a heavily skewed ratio means anchoring at one end is far more
    ambiguous than anchoring at the other.
    """
    share_first = 0
    share_last = 0
    for sent in corpus:
        sf, sl = _share_counts(sent)
        share_first += sf
        share_last += sl
    return share_first, share_last
