"""Nested named-entity recognition via scope-based sequence labeling.

A scope anchors each entity on one of its boundary tokens and labels that
token with the entity's category and length; four complementary scopes
(shortest/longest entity at the first/last token) recover nested structures
that flat taggers cannot express.  The package ships the codec, a trainable
character-level BiLSTM tagger, flat BIOES baselines, evaluation, and a CLI.
"""

from .bioes import VARIANTS, bioes_decode, bioes_encode, select_flat, tag_alphabet
from .checkpoint import CheckpointError, load_params, save_params
from .corpus import (
    Corpus,
    CorpusError,
    CorpusStats,
    CrossingOverlapWarning,
    Mention,
    Sentence,
    compute_stats,
    diversity_ratio,
    load_corpus,
    load_manifest,
    save_corpus,
)
from .metrics import CategoryCounts, EvalReport, compare, score
from .model import ModelParams, Vocab, forward_sentence, init_params
from .scopes import (
    B_MAX,
    B_MIN,
    CANONICAL_SCOPES,
    E_MAX,
    E_MIN,
    CoverageResult,
    DecodedMention,
    Labeling,
    OverlengthWarning,
    Scope,
    ScopePrediction,
    aggregate,
    coverage,
    decode_hard,
    decode_scored,
    encode,
    four_scope_uncovered,
)
from .toydata import generate_toy_corpus
from .train import (
    AdamW,
    TrainConfig,
    TrainingDivergedError,
    TrainReport,
    evaluate,
    load_external_embeddings,
    predict,
    predict_mentions,
    train,
)

__all__ = [
    "AdamW",
    "B_MAX",
    "B_MIN",
    "CANONICAL_SCOPES",
    "CategoryCounts",
    "CheckpointError",
    "Corpus",
    "CorpusError",
    "CorpusStats",
    "CoverageResult",
    "CrossingOverlapWarning",
    "DecodedMention",
    "E_MAX",
    "E_MIN",
    "EvalReport",
    "Labeling",
    "Mention",
    "ModelParams",
    "OverlengthWarning",
    "Scope",
    "ScopePrediction",
    "Sentence",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "VARIANTS",
    "Vocab",
    "aggregate",
    "bioes_decode",
    "bioes_encode",
    "compare",
    "compute_stats",
    "coverage",
    "decode_hard",
    "decode_scored",
    "diversity_ratio",
    "encode",
    "evaluate",
    "forward_sentence",
    "four_scope_uncovered",
    "generate_toy_corpus",
    "init_params",
    "load_corpus",
    "load_external_embeddings",
    "load_manifest",
    "load_params",
    "predict",
    "predict_mentions",
    "save_corpus",
    "save_params",
    "score",
    "select_flat",
    "tag_alphabet",
    "train",
]

__version__ = "0.1.0"
