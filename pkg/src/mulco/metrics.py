"""Micro precision / recall / F1 for exact (span, category) matching."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Mention


@dataclass(frozen=True)
class CategoryCounts:
    tp: int = 0
    pred: int = 0
    gold: int = 0

    @property
    def precision(self) -> float:
        return self.tp / self.pred if self.pred else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class EvalReport:
    tp: int
    pred: int
    gold: int
    per_category: dict[str, CategoryCounts] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.tp / self.pred if self.pred else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "pred": self.pred,
            "gold": self.gold,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_category": {
                cat: {
                    "tp": c.tp,
                    "pred": c.pred,
                    "gold": c.gold,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                }
                for cat, c in sorted(self.per_category.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def score(
    gold: Sequence[Iterable[Mention]],
    pred: Sequence[Iterable[Mention]],
) -> EvalReport:
    """Micro-averaged exact-match scoring over index-aligned sentences.

    A prediction is a true positive iff the same (start, end, category)
    triple appears in the same sentence's gold set.  Predictions are
    deduplicated per sentence so emitting a mention twice earns nothing.
    """
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sentences but pred has {len(pred)}")
    tp = n_pred = n_gold = 0
    cats: dict[str, dict[str, int]] = {}

    def cat_counts(cat: str) -> dict[str, int]:
        return cats.setdefault(cat, {"tp": 0, "pred": 0, "gold": 0})

    for gold_set, pred_set in zip(gold, pred):
        g = set(gold_set)
        p = set(pred_set)
        hits = g & p
        tp += len(hits)
        n_pred += len(p)
        n_gold += len(g)
        for m in hits:
            cat_counts(m.category)["tp"] += 1
        for m in p:
            cat_counts(m.category)["pred"] += 1
        for m in g:
            cat_counts(m.category)["gold"] += 1
    per_category = {
        cat: CategoryCounts(c["tp"], c["pred"], c["gold"]) for cat, c in cats.items()
    }
    return EvalReport(tp, n_pred, n_gold, per_category)


def compare(reports: Sequence[tuple[str, EvalReport]]) -> str:
    """Aligned comparison table, one row per named report, percentages to 2dp.

    Rows keep the given order (tables compare systems, they don't rank them).
    """
    if not reports:
        raise ValueError("need at least one report")
    for name, _ in reports:
        if not name:
            raise ValueError("report names must be non-empty")
    headers = ["name", "P", "R", "F1", "tp", "pred", "gold"]
    rows = [
        [
            name,
            f"{100 * r.precision:.2f}",
            f"{100 * r.recall:.2f}",
            f"{100 * r.f1:.2f}",
            str(r.tp),
            str(r.pred),
            str(r.gold),
        ]
        for name, r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)
