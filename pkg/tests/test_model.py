"""Encoder and head correctness: a step-by-step LSTM oracle, gradient
checks against central finite differences, masking, and linearity."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mulco import Mention, Sentence, Vocab, forward_sentence, init_params
from mulco.model import (
    PAD,
    UNK,
    batch_loss,
    batch_loss_grads,
    named_params,
    sentence_loss,
    softmax,
)
from mulco.seeding import named_rng
from mulco.train import scope_targets


def tiny_params(
    seed=0, kind="mulco", vocab_chars="abcd", *, hidden=2, embedding_dim=3,
    num_layers=1, max_len=5, use_recurrent_encoder=True,
):
    vocab = Vocab.build([vocab_chars])
    return init_params(
        kind,
        ("Loc", "Org"),
        vocab,
        embedding_dim=embedding_dim,
        hidden=hidden,
        num_layers=num_layers,
        max_len=max_len,
        use_recurrent_encoder=use_recurrent_encoder,
        variant="innermost" if kind == "bioes" else None,
        rng=np.random.default_rng(seed),
    )


def random_targets(params, length, rng):
    """Valid random class targets for every head."""
    out = {}
    for name, head in params.heads.items():
        out[name] = rng.integers(0, head.b.shape[0], size=length).astype(np.int64)
    return out


class TestVocab:
    def test_reserved_entries(self):
        v = Vocab.build(["cab"])
        assert v.chars[:2] == ("<pad>", "<unk>")
        assert v.chars[2:] == ("a", "b", "c")  # sorted

    def test_encode_with_unknowns(self):
        v = Vocab.build(["ab"])
        ids = v.encode("abz")
        assert ids[2] == UNK
        assert PAD not in ids

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Vocab(("<pad>", "<unk>", "a", "a"))

    def test_reserved_order_enforced(self):
        with pytest.raises(ValueError):
            Vocab(("<unk>", "<pad>", "a"))


class TestInit:
    def test_forget_gate_bias_one(self):
        p = tiny_params()
        for fwd, bwd in p.layers:
            H = fwd.hidden
            for d in (fwd, bwd):
                assert np.all(d.b[H : 2 * H] == 1.0)
                assert np.all(d.b[:H] == 0.0)
                assert np.all(d.b[2 * H :] == 0.0)

    def test_embedding_range(self):
        p = tiny_params()
        assert np.all(np.abs(p.embeddings) <= 0.1)

    def test_head_bias_zero_and_sizes(self):
        p = tiny_params(max_len=5)
        assert set(p.heads) == {
            f"{s}.{part}"
            for s in ("B-min", "B-max", "E-min", "E-max")
            for part in ("anchor", "length")
        }
        assert p.heads["B-min.anchor"].w.shape[1] == 3  # NA + 2 categories
        assert p.heads["B-min.length"].w.shape[1] == 6  # 0..5
        assert all(np.all(h.b == 0.0) for h in p.heads.values())

    def test_bioes_single_head(self):
        p = tiny_params(kind="bioes")
        assert set(p.heads) == {"tags"}
        assert p.heads["tags"].w.shape[1] == 9  # O + 4 tags x 2 categories

    def test_pretrained_embeddings_shape_checked(self):
        vocab = Vocab.build(["ab"])
        with pytest.raises(ValueError, match="shape"):
            init_params(
                "mulco", ("Loc",), vocab, embedding_dim=3, hidden=2, num_layers=1,
                max_len=5, rng=np.random.default_rng(0),
                pretrained_embeddings=np.zeros((2, 3)),
            )


class TestZeroParams:
    def test_uniform_distributions_and_loss(self):
        p = tiny_params()
        for _, arr in named_params(p):
            arr[...] = 0.0
        tokens = p.vocab.encode("abca")
        logits, _ = forward_sentence(p, tokens)
        for name, z in logits.items():
            assert np.all(z == 0.0)
            assert np.allclose(softmax(z), 1.0 / z.shape[1])
        targets = random_targets(p, 4, np.random.default_rng(0))
        loss, _ = sentence_loss(logits, targets)
        # per position, per scope: ln(N_c + 1) + ln(N_l + 1)
        expected = 4 * 4 * (math.log(3) + math.log(6))
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_single_position_single_head(self):
        p = tiny_params(kind="bioes")
        for _, arr in named_params(p):
            arr[...] = 0.0
        logits, _ = forward_sentence(p, p.vocab.encode("a"))
        loss, _ = sentence_loss(logits, {"tags": np.array([0])})
        assert loss == pytest.approx(math.log(9), rel=1e-12)

    def test_huge_margin_on_gold_drives_loss_to_zero(self):
        p = tiny_params(kind="bioes", use_recurrent_encoder=False)
        for _, arr in named_params(p):
            arr[...] = 0.0
        tokens = p.vocab.encode("ab")
        targets = {"tags": np.array([2, 0])}
        logits = {"tags": np.full((2, 9), -1e4)}
        logits["tags"][0, 2] = 1e4
        logits["tags"][1, 0] = 1e4
        loss, _ = sentence_loss(logits, targets)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_fully_masked_sentence_zero_loss(self):
        loss, dlogits = sentence_loss(
            {"tags": np.zeros((0, 9))}, {"tags": np.zeros(0, dtype=np.int64)}
        )
        assert loss == 0.0
        assert dlogits["tags"].shape == (0, 9)


def oracle_lstm_direction(x, w, u, b):
    """Textbook LSTM cell evaluated with scalar loops.

    a = W^T x_t + U^T h_{t-1} + b, split into input/forget/candidate/output
    blocks; c_t = f*c + i*g; h_t = o*tanh(c_t).
    """
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    H = u.shape[0]
    h = [0.0] * H
    c = [0.0] * H
    rows = []
    for t in range(x.shape[0]):
        a = [0.0] * (4 * H)
        for j in range(4 * H):
            s = b[j]
            for k in range(x.shape[1]):
                s += x[t, k] * w[k, j]
            for k in range(H):
                s += h[k] * u[k, j]
            a[j] = s
        i = [sig(a[j]) for j in range(H)]
        f = [sig(a[H + j]) for j in range(H)]
        g = [math.tanh(a[2 * H + j]) for j in range(H)]
        o = [sig(a[3 * H + j]) for j in range(H)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(H)]
        h = [o[j] * math.tanh(c[j]) for j in range(H)]
        rows.append(list(h))
    return np.array(rows)


def oracle_encoder(params, tokens):
    x = params.embeddings[tokens]
    for fwd, bwd in params.layers:
        left = oracle_lstm_direction(x, fwd.w, fwd.u, fwd.b)
        right = oracle_lstm_direction(x[::-1], bwd.w, bwd.u, bwd.b)[::-1]
        x = np.concatenate([left, right], axis=1)
    return x


class TestForwardOracle:
    @pytest.mark.parametrize("layers,text", [(1, "a"), (1, "abca"), (2, "dcba")])
    def test_logits_match_hand_evaluation(self, layers, text):
        p = tiny_params(seed=7, num_layers=layers)
        tokens = p.vocab.encode(text)
        logits, _ = forward_sentence(p, tokens)
        m = oracle_encoder(p, tokens)
        for name, head in p.heads.items():
            want = m @ head.w + head.b
            np.testing.assert_allclose(logits[name], want, rtol=1e-12, atol=1e-12)

    def test_no_encoder_is_pure_lookup(self):
        p = tiny_params(use_recurrent_encoder=False)
        tokens = p.vocab.encode("abc")
        logits, _ = forward_sentence(p, tokens)
        m = p.embeddings[tokens]
        for name, head in p.heads.items():
            np.testing.assert_allclose(logits[name], m @ head.w + head.b, rtol=1e-12)

    def test_deterministic_repeat(self):
        p = tiny_params(seed=3)
        tokens = p.vocab.encode("abcd")
        a, _ = forward_sentence(p, tokens)
        b, _ = forward_sentence(p, tokens)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_logits_finite_on_long_input(self):
        p = tiny_params(seed=5)
        tokens = p.vocab.encode("abcd" * 100)
        logits, _ = forward_sentence(p, tokens)
        assert all(np.all(np.isfinite(z)) for z in logits.values())


class TestMasking:
    def test_padding_changes_nothing(self):
        p = tiny_params(seed=11)
        tokens = p.vocab.encode("abca")
        padded = np.concatenate([tokens, np.full(5, PAD, dtype=np.int64)])
        plain, _ = forward_sentence(p, tokens)
        masked, _ = forward_sentence(p, padded, length=4)
        for name in plain:
            np.testing.assert_array_equal(plain[name], masked[name])

    def test_padded_gradients_match(self):
        p = tiny_params(seed=11)
        rng = np.random.default_rng(4)
        tokens = p.vocab.encode("abca")
        targets = random_targets(p, 4, rng)
        loss_a, grads_a = batch_loss_grads(p, [(tokens, targets)])
        padded = np.concatenate([tokens, np.full(3, PAD, dtype=np.int64)])
        logits, cache = forward_sentence(p, padded, length=4)
        loss_b, dlogits = sentence_loss(logits, targets)
        from mulco.model import backward_sentence, zero_grads

        grads_b = zero_grads(p)
        backward_sentence(p, cache, dlogits, grads_b)
        assert loss_a == loss_b
        for name in grads_a:
            np.testing.assert_array_equal(grads_a[name], grads_b[name])

    def test_zero_length_rejected(self):
        p = tiny_params()
        with pytest.raises(ValueError, match="length"):
            forward_sentence(p, p.vocab.encode("ab"), length=0)


class TestGradLinearity:
    def test_duplicate_batch_doubles_everything(self):
        p = tiny_params(seed=2)
        rng = np.random.default_rng(8)
        tokens = p.vocab.encode("abdc")
        targets = random_targets(p, 4, rng)
        loss1, grads1 = batch_loss_grads(p, [(tokens, targets)])
        loss2, grads2 = batch_loss_grads(p, [(tokens, targets), (tokens, targets)])
        assert loss2 == pytest.approx(2 * loss1, rel=1e-15)
        for name in grads1:
            np.testing.assert_allclose(grads2[name], 2 * grads1[name], rtol=0, atol=0)

    def test_unused_vocab_rows_get_zero_gradient(self):
        p = tiny_params(seed=2)
        rng = np.random.default_rng(9)
        tokens = p.vocab.encode("aa")
        _, grads = batch_loss_grads(p, [(tokens, random_targets(p, 2, rng))])
        used = set(tokens.tolist())
        for row in range(len(p.vocab)):
            row_grad = grads["embeddings"][row]
            if row in used:
                assert np.any(row_grad != 0.0)
            else:
                assert np.all(row_grad == 0.0)


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise relative error, treating differences below the
    finite-difference noise floor as exact: central differences of an O(100)
    f64 loss at eps=1e-4 carry ~1e-10 absolute roundoff, so near-zero
    gradients cannot be resolved more finely than that."""
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    rel = np.where(diff <= 1e-8, 0.0, diff / denom)
    return float(np.max(rel))


def finite_difference_check(params, batch, eps=1e-4):
    """Max relative error between analytic and central-difference gradients,
    per tensor."""
    _, grads = batch_loss_grads(params, batch)
    worst = {}
    for name, arr in named_params(params):
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = batch_loss(params, batch)
            flat[j] = orig - eps
            lo = batch_loss(params, batch)
            flat[j] = orig
            num_flat[j] = (hi - lo) / (2 * eps)
        worst[name] = max_rel_error(grads[name], numeric)
    return worst


class TestGradCheck:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_recurrent_model(self, seed):
        p = tiny_params(seed=seed, vocab_chars="abc", max_len=4)
        rng = np.random.default_rng(100 + seed)
        batch = [
            (p.vocab.encode("abca"), random_targets(p, 4, rng)),
            (p.vocab.encode("cb"), random_targets(p, 2, rng)),
        ]
        for name, err in finite_difference_check(p, batch).items():
            assert err <= 1e-4, f"{name}: {err}"

    def test_two_layer_model(self):
        p = tiny_params(seed=5, vocab_chars="ab", num_layers=2, max_len=3)
        rng = np.random.default_rng(55)
        batch = [(p.vocab.encode("abab"), random_targets(p, 4, rng))]
        for name, err in finite_difference_check(p, batch).items():
            assert err <= 1e-4, f"{name}: {err}"

    def test_no_encoder_model(self):
        p = tiny_params(seed=6, use_recurrent_encoder=False, max_len=3)
        rng = np.random.default_rng(66)
        batch = [(p.vocab.encode("abcd"), random_targets(p, 4, rng))]
        for name, err in finite_difference_check(p, batch).items():
            assert err <= 1e-4, f"{name}: {err}"

    def test_bioes_model(self):
        p = tiny_params(seed=7, kind="bioes")
        rng = np.random.default_rng(77)
        batch = [(p.vocab.encode("dcba"), random_targets(p, 4, rng))]
        for name, err in finite_difference_check(p, batch).items():
            assert err <= 1e-4, f"{name}: {err}"


class TestDropoutAndOverride:
    def test_dropout_requires_rng(self):
        p = tiny_params()
        with pytest.raises(ValueError, match="rng"):
            forward_sentence(p, p.vocab.encode("ab"), dropout=0.5)

    def test_dropout_perturbs_training_logits_only(self):
        p = tiny_params(seed=1)
        tokens = p.vocab.encode("abcd")
        base, _ = forward_sentence(p, tokens)
        rng = named_rng(0, "dropout")
        dropped, _ = forward_sentence(p, tokens, dropout=0.5, rng=rng)
        assert any(
            not np.array_equal(base[name], dropped[name]) for name in base
        )
        again, _ = forward_sentence(p, tokens)
        for name in base:
            np.testing.assert_array_equal(base[name], again[name])

    def test_external_vectors_replace_lookup(self):
        p = tiny_params(seed=3)
        tokens = p.vocab.encode("abc")
        x = np.random.default_rng(1).normal(size=(3, 3))
        logits, _ = forward_sentence(p, tokens, x_override=x)
        manual = oracle_encoder_with_input(p, x)
        for name, head in p.heads.items():
            np.testing.assert_allclose(logits[name], manual @ head.w + head.b, rtol=1e-12)

    def test_external_vectors_leave_embeddings_ungradiented(self):
        p = tiny_params(seed=3)
        rng = np.random.default_rng(2)
        tokens = p.vocab.encode("abc")
        x = rng.normal(size=(3, 3))
        _, grads = batch_loss_grads(p, [(tokens, random_targets(p, 3, rng), x)])
        assert np.all(grads["embeddings"] == 0.0)
        assert any(
            np.any(grads[name] != 0.0) for name in grads if name != "embeddings"
        )

    def test_external_vector_shape_checked(self):
        p = tiny_params()
        with pytest.raises(ValueError, match="shape"):
            forward_sentence(p, p.vocab.encode("abc"), x_override=np.zeros((3, 7)))


def oracle_encoder_with_input(params, x):
    for fwd, bwd in params.layers:
        left = oracle_lstm_direction(x, fwd.w, fwd.u, fwd.b)
        right = oracle_lstm_direction(x[::-1], bwd.w, bwd.u, bwd.b)[::-1]
        x = np.concatenate([left, right], axis=1)
    return x


class TestTargetsIntegration:
    def test_scope_targets_match_encoding(self):
        sent = Sentence("abcdef", (Mention(0, 3, "Loc"), Mention(2, 6, "Org")))
        targets = scope_targets(sent, ("B-min", "E-max"), ("Loc", "Org"), 8)
        np.testing.assert_array_equal(
            targets["B-min.anchor"], [1, 0, 2, 0, 0, 0]
        )  # Loc at 0, Org at 2
        np.testing.assert_array_equal(targets["B-min.length"], [3, 0, 4, 0, 0, 0])
        np.testing.assert_array_equal(targets["E-max.anchor"], [0, 0, 1, 0, 0, 2])
        np.testing.assert_array_equal(targets["E-max.length"], [0, 0, 3, 0, 0, 4])
