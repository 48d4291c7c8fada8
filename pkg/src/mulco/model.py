"""Character-level BiLSTM encoder with per-task linear heads, in numpy.

The model embeds characters, runs them through stacked bidirectional LSTM
layers, and applies an independent linear head per labeling task.  A scope
tagger uses eight heads (an anchor head and a length head per scope); a flat
tagger uses a single tag head.  Everything is plain float64 numpy with
hand-written backpropagation, so gradients can be checked against finite
differences exactly.

Sentences are processed one at a time at their true length.  Padded input is
supported through an explicit ``length`` argument: positions at or beyond it
never enter the recurrence or the loss, so trailing padding cannot change any
real position's output or gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

PAD = 0
UNK = 1


@dataclass(frozen=True)
class Vocab:
    """Character inventory; index 0 is padding, 1 is unknown."""

    chars: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.chars[:2] != ("<pad>", "<unk>"):
            raise ValueError("vocab must start with <pad>, <unk>")
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("vocab has duplicate entries")

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocab":
        seen: set[str] = set()
        for text in texts:
            seen.update(text)
        return cls(("<pad>", "<unk>", *sorted(seen)))

    @cached_property
    def index(self) -> dict[str, int]:
        return {ch: i for i, ch in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(self.chars)

    def encode(self, text: str) -> np.ndarray:
        idx = self.index
        return np.array([idx.get(ch, UNK) for ch in text], dtype=np.int64)


@dataclass
class LinearHead:
    w: np.ndarray  # (m, classes)
    b: np.ndarray  # (classes,)


@dataclass
class LSTMDir:
    """One direction of one stacked layer; gate order is [i, f, g, o]."""

    w: np.ndarray  # (input_dim, 4H)
    u: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.u.shape[0]


@dataclass
class ModelParams:
    kind: str  # "mulco" or "bioes"
    categories: tuple[str, ...]
    max_len: int
    use_recurrent_encoder: bool
    variant: str | None  # flat selection rule, bioes models only
    scope_names: tuple[str, ...]  # empty for bioes models
    vocab: Vocab
    embeddings: np.ndarray  # (V, E)
    layers: list[tuple[LSTMDir, LSTMDir]] = field(default_factory=list)
    heads: dict[str, LinearHead] = field(default_factory=dict)

    @property
    def feature_dim(self) -> int:
        if not self.use_recurrent_encoder:
            return self.embeddings.shape[1]
        return 2 * self.layers[-1][0].hidden


def head_specs(
    kind: str, categories: Sequence[str], max_len: int, scope_names: Sequence[str]
) -> dict[str, int]:
    """Head name to class count.  Anchor class 0 means no entity; length
    class 0 likewise, so both heads carry one extra class."""
    if kind == "mulco":
        specs: dict[str, int] = {}
        for name in scope_names:
            specs[f"{name}.anchor"] = len(categories) + 1
            specs[f"{name}.length"] = max_len + 1
        return specs
    if kind == "bioes":
        return {"tags": 1 + 4 * len(categories)}
    raise ValueError(f"unknown model kind: {kind!r}")


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_params(
    kind: str,
    categories: Sequence[str],
    vocab: Vocab,
    *,
    embedding_dim: int,
    hidden: int,
    num_layers: int,
    max_len: int,
    use_recurrent_encoder: bool = True,
    scope_names: Sequence[str] = ("B-min", "B-max", "E-min", "E-max"),
    variant: str | None = None,
    rng: np.random.Generator,
    pretrained_embeddings: np.ndarray | None = None,
) -> ModelParams:
    """Fresh parameters.  Embeddings are uniform in [-0.1, 0.1] unless given;
    weight matrices are scaled-uniform; biases are zero except the forget
    gate, which starts at one so early training does not wipe the cell."""
    if pretrained_embeddings is not None:
        emb = np.asarray(pretrained_embeddings, dtype=np.float64)
        if emb.shape != (len(vocab), embedding_dim):
            raise ValueError(
                f"embeddings shape {emb.shape} != ({len(vocab)}, {embedding_dim})"
            )
        emb = emb.copy()
    else:
        emb = rng.uniform(-0.1, 0.1, size=(len(vocab), embedding_dim))
    layers: list[tuple[LSTMDir, LSTMDir]] = []
    in_dim = embedding_dim
    if use_recurrent_encoder:
        for _ in range(num_layers):
            dirs = []
            for _ in range(2):
                b = np.zeros(4 * hidden)
                b[hidden : 2 * hidden] = 1.0
                dirs.append(
                    LSTMDir(
                        w=_glorot(rng, (in_dim, 4 * hidden)),
                        u=_glorot(rng, (hidden, 4 * hidden)),
                        b=b,
                    )
                )
            layers.append((dirs[0], dirs[1]))
            in_dim = 2 * hidden
    feat = in_dim
    heads = {
        name: LinearHead(w=_glorot(rng, (feat, n)), b=np.zeros(n))
        for name, n in head_specs(kind, categories, max_len, scope_names).items()
    }
    return ModelParams(
        kind=kind,
        categories=tuple(categories),
        max_len=max_len,
        use_recurrent_encoder=use_recurrent_encoder,
        variant=variant,
        scope_names=tuple(scope_names) if kind == "mulco" else (),
        vocab=vocab,
        embeddings=emb,
        layers=layers,
        heads=heads,
    )


def named_params(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Canonical (name, array) list; arrays are live views, not copies."""
    out: list[tuple[str, np.ndarray]] = [("embeddings", params.embeddings)]
    for i, (fwd, bwd) in enumerate(params.layers):
        for tag, d in (("fwd", fwd), ("bwd", bwd)):
            out.append((f"layers.{i}.{tag}.w", d.w))
            out.append((f"layers.{i}.{tag}.u", d.u))
            out.append((f"layers.{i}.{tag}.b", d.b))
    for name in sorted(params.heads):
        head = params.heads[name]
        out.append((f"heads.{name}.w", head.w))
        out.append((f"heads.{name}.b", head.b))
    return out


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in named_params(params)}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass
class _DirCache:
    x: np.ndarray  # (T, in_dim) inputs in recurrence order
    gates: np.ndarray  # (T, 4H) post-activation [i, f, g, o]
    cs: np.ndarray  # (T, H)
    tcs: np.ndarray  # (T, H) tanh of cell state
    hs: np.ndarray  # (T, H)


def _dir_forward(p: LSTMDir, x: np.ndarray) -> _DirCache:
    T = x.shape[0]
    H = p.hidden
    xw = x @ p.w + p.b
    gates = np.empty((T, 4 * H))
    cs = np.empty((T, H))
    tcs = np.empty((T, H))
    hs = np.empty((T, H))
    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        a = xw[t] + h @ p.u
        i = _sigmoid(a[:H])
        f = _sigmoid(a[H : 2 * H])
        g = np.tanh(a[2 * H : 3 * H])
        o = _sigmoid(a[3 * H :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :H] = i
        gates[t, H : 2 * H] = f
        gates[t, 2 * H : 3 * H] = g
        gates[t, 3 * H :] = o
        cs[t] = c
        tcs[t] = tc
        hs[t] = h
    return _DirCache(x=x, gates=gates, cs=cs, tcs=tcs, hs=hs)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _dir_backward(
    p: LSTMDir, cache: _DirCache, dh_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, du, db) for one direction given d(loss)/d(hs)."""
    T, H = cache.hs.shape
    da = np.empty((T, 4 * H))
    dh = np.zeros(H)
    dc = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i = cache.gates[t, :H]
        f = cache.gates[t, H : 2 * H]
        g = cache.gates[t, 2 * H : 3 * H]
        o = cache.gates[t, 3 * H :]
        tc = cache.tcs[t]
        c_prev = cache.cs[t - 1] if t > 0 else 0.0
        dh = dh + dh_out[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        row = da[t]
        row[3 * H :] = dh * tc * o * (1.0 - o)
        row[:H] = dc * g * i * (1.0 - i)
        row[H : 2 * H] = dc * c_prev * f * (1.0 - f)
        row[2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dc = dc * f
        dh = row @ p.u.T
    h_prev = np.zeros_like(cache.hs)
    h_prev[1:] = cache.hs[:-1]
    dw = cache.x.T @ da
    du = h_prev.T @ da
    db = da.sum(axis=0)
    dx = da @ p.w.T
    return dx, dw, du, db


@dataclass
class _ForwardCache:
    tokens: np.ndarray
    length: int
    external: bool  # input vectors supplied, embedding table untouched
    x: np.ndarray  # embedded input after dropout, (L, E)
    emb_mask: np.ndarray | None
    layer_caches: list[tuple[_DirCache, _DirCache]]
    layer_masks: list[np.ndarray | None]
    m: np.ndarray  # encoder output, (L, feat)


def forward_sentence(
    params: ModelParams,
    tokens: np.ndarray,
    *,
    length: int | None = None,
    x_override: np.ndarray | None = None,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, np.ndarray], _ForwardCache]:
    """Logits per head for one sentence.

    ``length`` limits the recurrence and the logits to a prefix; anything
    after it is treated as padding and ignored entirely.  ``x_override``
    supplies precomputed input vectors in place of the embedding lookup.
    Dropout (inverted, applied to embeddings and each layer output)
    requires an rng and is only for training steps.
    """
    L = len(tokens) if length is None else length
    if not 0 < L <= len(tokens):
        raise ValueError(f"length {L} out of range for {len(tokens)} tokens")
    if x_override is not None:
        if x_override.shape != (len(tokens), params.embeddings.shape[1]):
            raise ValueError(
                f"external vectors shape {x_override.shape} does not match "
                f"({len(tokens)}, {params.embeddings.shape[1]})"
            )
        x = x_override[:L]
    else:
        x = params.embeddings[tokens[:L]]
    emb_mask = None
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout requires an rng")
        emb_mask = (rng.random(x.shape) >= dropout) / (1.0 - dropout)
        x = x * emb_mask
    layer_caches: list[tuple[_DirCache, _DirCache]] = []
    layer_masks: list[np.ndarray | None] = []
    m = x
    for fwd, bwd in params.layers:
        cf = _dir_forward(fwd, m)
        cb = _dir_forward(bwd, m[::-1])
        layer_caches.append((cf, cb))
        m = np.concatenate([cf.hs, cb.hs[::-1]], axis=1)
        mask = None
        if dropout > 0.0:
            mask = (rng.random(m.shape) >= dropout) / (1.0 - dropout)
            m = m * mask
        layer_masks.append(mask)
    logits = {name: m @ h.w + h.b for name, h in params.heads.items()}
    cache = _ForwardCache(
        tokens=tokens,
        length=L,
        external=x_override is not None,
        x=x,
        emb_mask=emb_mask,
        layer_caches=layer_caches,
        layer_masks=layer_masks,
        m=m,
    )
    return logits, cache


def sentence_loss(
    logits: Mapping[str, np.ndarray], targets: Mapping[str, np.ndarray]
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed cross entropy over heads and positions, plus d(loss)/d(logits)."""
    total = 0.0
    dlogits: dict[str, np.ndarray] = {}
    for name, tgt in targets.items():
        z = logits[name]
        probs = softmax(z)
        rows = np.arange(len(tgt))
        picked = np.clip(probs[rows, tgt], 1e-300, None)
        total += float(-np.log(picked).sum())
        d = probs.copy()
        d[rows, tgt] -= 1.0
        dlogits[name] = d
    return total, dlogits


def backward_sentence(
    params: ModelParams,
    cache: _ForwardCache,
    dlogits: Mapping[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate parameter gradients for one sentence into ``grads``."""
    dm = np.zeros_like(cache.m)
    for name, d in dlogits.items():
        head = params.heads[name]
        grads[f"heads.{name}.w"] += cache.m.T @ d
        grads[f"heads.{name}.b"] += d.sum(axis=0)
        dm += d @ head.w.T
    for i in range(len(params.layers) - 1, -1, -1):
        fwd, bwd = params.layers[i]
        cf, cb = cache.layer_caches[i]
        mask = cache.layer_masks[i]
        if mask is not None:
            dm = dm * mask
        H = fwd.hidden
        dxf, dwf, duf, dbf = _dir_backward(fwd, cf, dm[:, :H])
        dxb, dwb, dub, dbb = _dir_backward(bwd, cb, dm[:, H:][::-1])
        grads[f"layers.{i}.fwd.w"] += dwf
        grads[f"layers.{i}.fwd.u"] += duf
        grads[f"layers.{i}.fwd.b"] += dbf
        grads[f"layers.{i}.bwd.w"] += dwb
        grads[f"layers.{i}.bwd.u"] += dub
        grads[f"layers.{i}.bwd.b"] += dbb
        dm = dxf + dxb[::-1]
    if cache.emb_mask is not None:
        dm = dm * cache.emb_mask
    if not cache.external:
        np.add.at(grads["embeddings"], cache.tokens[: cache.length], dm)


# Batch items are (tokens, targets) or (tokens, targets, input_vectors).
Batch = Sequence[tuple]


def batch_loss_grads(
    params: ModelParams,
    batch: Batch,
    *,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss summed over the batch and gradients of that sum."""
    grads = zero_grads(params)
    total = 0.0
    for tokens, targets, *rest in batch:
        x_override = rest[0] if rest else None
        logits, cache = forward_sentence(
            params, tokens, x_override=x_override, dropout=dropout, rng=rng
        )
        loss, dlogits = sentence_loss(logits, targets)
        total += loss
        backward_sentence(params, cache, dlogits, grads)
    return total, grads


def batch_loss(params: ModelParams, batch: Batch) -> float:
    total = 0.0
    for tokens, targets, *rest in batch:
        x_override = rest[0] if rest else None
        logits, _ = forward_sentence(params, tokens, x_override=x_override)
        loss, _ = sentence_loss(logits, targets)
        total += loss
    return total
