"""Training loop, optimizer, and prediction for the scope and flat taggers.

Both model kinds share the encoder and this loop; only the target
construction and the decoding step differ.  A scope model learns one anchor
and one length labeling per scope; a flat model learns one BIOES tag
sequence built from its innermost or outermost selection.

Everything is deterministic for a fixed seed: initialization, epoch
shuffling, and dropout each draw from their own named stream, and sentences
are processed one at a time so batch composition cannot perturb arithmetic.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .bioes import bioes_decode, bioes_encode, tag_alphabet
from .corpus import Corpus, Mention, Sentence
from .metrics import EvalReport, score
from .model import (
    Batch,
    ModelParams,
    Vocab,
    batch_loss_grads,
    forward_sentence,
    init_params,
    named_params,
    softmax,
)
from .scopes import (
    CANONICAL_SCOPES,
    Scope,
    ScopePrediction,
    aggregate,
    decode_scored,
    encode,
)
from .seeding import named_rng


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; training state is unusable."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr_encoder: float = 3e-3
    lr_heads: float = 6e-3
    dropout: float = 0.1
    weight_decay: float = 0.05
    clip_norm: float = 5.0
    embedding_dim: int = 32
    hidden: int = 48
    num_layers: int = 1
    max_len: int = 64
    seed: int = 42
    use_recurrent_encoder: bool = True
    early_stop_f1: float | None = None

    def __post_init__(self) -> None:
        for name in ("epochs", "batch_size", "embedding_dim", "hidden", "num_layers", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("dropout",):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        for name in ("lr_encoder", "lr_heads", "weight_decay", "clip_norm"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def override(self, **kwargs) -> "TrainConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass
class TrainReport:
    epochs_run: int
    train_losses: list[float]  # mean per-sentence loss, one entry per epoch run
    val_f1: list[float]  # empty when no validation corpus was given
    wall_time_seconds: float
    stopped_early: bool = False

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), ensure_ascii=False, sort_keys=True)


class AdamW:
    """Adam with decoupled weight decay.

    Decay touches weight matrices only (2-D tensors); biases are exempt.
    Head parameters use their own learning rate, everything else the
    encoder rate.
    """

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, lr_encoder: float, lr_heads: float, weight_decay: float):
        self.lr_encoder = lr_encoder
        self.lr_heads = lr_heads
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(
        self, tensors: Sequence[tuple[str, np.ndarray]], grads: dict[str, np.ndarray]
    ) -> None:
        self.t += 1
        bc1 = 1.0 - self.BETA1**self.t
        bc2 = 1.0 - self.BETA2**self.t
        for name, param in tensors:
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(param))
            v = self._v.setdefault(name, np.zeros_like(param))
            m *= self.BETA1
            m += (1.0 - self.BETA1) * g
            v *= self.BETA2
            v += (1.0 - self.BETA2) * g * g
            lr = self.lr_heads if name.startswith("heads.") else self.lr_encoder
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.EPS)
            if param.ndim == 2 and self.weight_decay:
                param -= lr * self.weight_decay * param


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def scope_targets(
    sentence: Sentence,
    scope_names: Sequence[str],
    categories: Sequence[str],
    max_len: int,
) -> dict[str, np.ndarray]:
    """Anchor and length class arrays per scope head.  Anchor class 0 is
    the no-entity class, category k maps to class k+1."""
    cat_class = {c: i + 1 for i, c in enumerate(categories)}
    out: dict[str, np.ndarray] = {}
    for name in scope_names:
        lab = encode(sentence, Scope.parse(name), max_len=max_len)
        out[f"{name}.anchor"] = np.array(
            [0 if a is None else cat_class[a] for a in lab.anchors], dtype=np.int64
        )
        out[f"{name}.length"] = np.array(lab.lengths, dtype=np.int64)
    return out


def bioes_targets(
    sentence: Sentence, variant: str, categories: Sequence[str]
) -> dict[str, np.ndarray]:
    tag_class = {t: i for i, t in enumerate(tag_alphabet(categories))}
    tags = bioes_encode(sentence, variant)
    return {"tags": np.array([tag_class[t] for t in tags], dtype=np.int64)}


def _make_examples(
    corpus: Corpus,
    params: ModelParams,
    external: Sequence[np.ndarray] | None,
) -> list[tuple]:
    examples = []
    for i, sent in enumerate(corpus.sentences):
        tokens = params.vocab.encode(sent.text)
        if params.kind == "mulco":
            targets = scope_targets(
                sent, params.scope_names, params.categories, params.max_len
            )
        else:
            targets = bioes_targets(sent, params.variant, params.categories)
        if external is not None:
            examples.append((tokens, targets, external[i]))
        else:
            examples.append((tokens, targets))
    return examples


def _batches(n: int, size: int, order: np.ndarray) -> Iterator[np.ndarray]:
    for lo in range(0, n, size):
        yield order[lo : lo + size]


def train(
    corpus: Corpus,
    config: TrainConfig,
    val_corpus: Corpus | None = None,
    *,
    kind: str = "mulco",
    variant: str | None = None,
    scope_names: Sequence[str] = tuple(s.name for s in CANONICAL_SCOPES),
    external: Sequence[np.ndarray] | None = None,
    val_external: Sequence[np.ndarray] | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Train a model of the given kind; deterministic for a fixed seed.

    When a validation corpus is given, each epoch decodes it and records
    micro-F1; with ``config.early_stop_f1`` set, training stops at the end
    of the first epoch whose validation F1 reaches the threshold.
    """
    if not corpus.sentences:
        raise ValueError("training corpus is empty")
    if not corpus.categories:
        raise ValueError("category set is empty")
    start = time.perf_counter()
    vocab = Vocab.build(s.text for s in corpus.sentences)
    params = init_params(
        kind,
        corpus.categories,
        vocab,
        embedding_dim=config.embedding_dim,
        hidden=config.hidden,
        num_layers=config.num_layers,
        max_len=config.max_len,
        use_recurrent_encoder=config.use_recurrent_encoder,
        scope_names=scope_names,
        variant=variant,
        rng=named_rng(config.seed, "init"),
    )
    examples = _make_examples(corpus, params, external)
    opt = AdamW(config.lr_encoder, config.lr_heads, config.weight_decay)
    shuffle_rng = named_rng(config.seed, "shuffle")
    dropout_rng = named_rng(config.seed, "dropout")
    train_losses: list[float] = []
    val_f1: list[float] = []
    stopped_early = False
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(examples))
        epoch_loss = 0.0
        for batch_idx in _batches(len(examples), config.batch_size, order):
            batch: Batch = [examples[i] for i in batch_idx]
            loss, grads = batch_loss_grads(
                params, batch, dropout=config.dropout, rng=dropout_rng
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}; "
                    "lower the learning rates or raise clip_norm"
                )
            epoch_loss += loss
            clip_gradients(grads, config.clip_norm)
            opt.step(named_params(params), grads)
        train_losses.append(epoch_loss / len(examples))
        if val_corpus is not None:
            report = evaluate(params, val_corpus, external=val_external)
            val_f1.append(report.f1)
            if config.early_stop_f1 is not None and report.f1 >= config.early_stop_f1:
                stopped_early = True
                break
    report = TrainReport(
        epochs_run=len(train_losses),
        train_losses=train_losses,
        val_f1=val_f1,
        wall_time_seconds=time.perf_counter() - start,
        stopped_early=stopped_early,
    )
    return params, report


def predict(
    params: ModelParams, sentence: Sentence | str, *, external: np.ndarray | None = None
) -> dict[str, ScopePrediction]:
    """Per-scope softmax distributions for one sentence (scope models)."""
    if params.kind != "mulco":
        raise ValueError("scope predictions require a scope model")
    text = sentence if isinstance(sentence, str) else sentence.text
    tokens = params.vocab.encode(text)
    logits, _ = forward_sentence(params, tokens, x_override=external)
    return {
        name: ScopePrediction(
            categories=params.categories,
            anchor_probs=softmax(logits[f"{name}.anchor"]),
            length_probs=softmax(logits[f"{name}.length"]),
        )
        for name in params.scope_names
    }


def predict_mentions(
    params: ModelParams, text: str, *, external: np.ndarray | None = None
) -> tuple[Mention, ...]:
    """Decoded, aggregated mention set for one sentence, any model kind."""
    if params.kind == "mulco":
        preds = predict(params, text, external=external)
        decoded = [
            decode_scored(pred, Scope.parse(name), len(text))
            for name, pred in preds.items()
        ]
        return tuple(sorted(aggregate(decoded)))
    tokens = params.vocab.encode(text)
    logits, _ = forward_sentence(params, tokens, x_override=external)
    alphabet = tag_alphabet(params.categories)
    tags = [alphabet[i] for i in logits["tags"].argmax(axis=1)]
    mentions, _ = bioes_decode(tags)
    return tuple(sorted(mentions))


def evaluate(
    params: ModelParams,
    corpus: Corpus,
    *,
    external: Sequence[np.ndarray] | None = None,
) -> EvalReport:
    gold = [s.mentions for s in corpus.sentences]
    pred = [
        predict_mentions(
            params, s.text, external=None if external is None else external[i]
        )
        for i, s in enumerate(corpus.sentences)
    ]
    return score(gold, pred)


def load_external_embeddings(
    path: str | Path, dim: int, texts: Sequence[str] | None = None
) -> list[np.ndarray]:
    """Read per-sentence embedding vectors: one JSON object per line with a
    "vectors" key holding one row of ``dim`` floats per code point."""
    out: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                vectors = np.asarray(json.loads(line)["vectors"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad embedding record: {exc}") from exc
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected shape (N, {dim}), got {vectors.shape}"
                )
            out.append(vectors)
    if texts is not None:
        if len(out) != len(texts):
            raise ValueError(
                f"{path}: {len(out)} embedding lines for {len(texts)} sentences"
            )
        for i, (vec, text) in enumerate(zip(out, texts)):
            if len(vec) != len(text):
                raise ValueError(
                    f"{path}: line {i + 1} has {len(vec)} rows for a "
                    f"{len(text)}-character sentence"
                )
    return out
