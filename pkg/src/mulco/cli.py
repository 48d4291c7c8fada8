"""Command-line pipeline: corpus tools, codec, training, and evaluation.

One executable with subcommands; every run is deterministic given its
inputs and the seed.  Training options come from defaults, then an optional
JSON config file, then flags, with later sources winning.  Exit status is 0
on success, 1 on validation or I/O failures, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_params, save_params
from .corpus import (
    Corpus,
    CorpusError,
    Sentence,
    compute_stats,
    diversity_ratio,
    load_corpus,
    load_manifest,
    save_corpus,
    sentence_to_json,
)
from .metrics import compare, score
from .scopes import (
    DecodedMention,
    Scope,
    aggregate,
    coverage,
    decode_hard,
    encode,
    read_labelings,
    write_labelings,
)
from .toydata import generate_toy_corpus
from .train import (
    TrainConfig,
    TrainingDivergedError,
    load_external_embeddings,
    predict_mentions,
    train,
)

DEFAULT_SCOPES = "B-min,B-max,E-min,E-max"


def _parse_scopes(spec: str) -> list[Scope]:
    names = [part.strip() for part in spec.split(",") if part.strip()]
    if not names:
        raise ValueError("no scopes given")
    return [Scope.parse(name) for name in names]


def _read_corpus(path: str, manifest: str | None) -> Corpus:
    categories = load_manifest(manifest) if manifest else None
    return load_corpus(path, categories=categories)


def _print_json(data) -> None:
    print(json.dumps(data, ensure_ascii=False, sort_keys=True))


def cmd_stats(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus, args.categories)
    stats = compute_stats(corpus)
    data = stats.as_dict()
    data["diversity_ratio"] = list(diversity_ratio(corpus))
    if args.format == "json":
        _print_json(data)
    else:
        width = max(len(k) for k in data)
        for key in sorted(data):
            print(f"{key:<{width}}  {data[key]}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus, args.categories)
    mentions = sum(len(s.mentions) for s in corpus.sentences)
    print(f"OK: {len(corpus.sentences)} sentences, {mentions} mentions")
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus, args.categories)
    scopes = _parse_scopes(args.scopes)
    groups = [
        [encode(sent, scope, max_len=args.max_len) for scope in scopes]
        for sent in corpus.sentences
    ]
    write_labelings(args.out, groups)
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus, args.categories)
    scopes = _parse_scopes(args.scopes)
    groups = read_labelings(args.labelings, scopes)
    if len(groups) != len(corpus.sentences):
        raise ValueError(
            f"{args.labelings}: {len(groups)} sentence groups for "
            f"{len(corpus.sentences)} corpus sentences"
        )
    lines = []
    for sent, group in zip(corpus.sentences, groups):
        decoded = []
        for scope, labeling in zip(scopes, group):
            if len(labeling.anchors) != len(sent.text):
                raise ValueError(
                    f"labeling length {len(labeling.anchors)} does not match "
                    f"sentence length {len(sent.text)}"
                )
            hard = decode_hard(labeling, scope, len(sent.text))
            decoded.append([DecodedMention(m, 1.0, scope) for m in sorted(hard)])
        mentions = tuple(sorted(aggregate(decoded)))
        lines.append(sentence_to_json(Sentence(sent.text, mentions)))
    Path(args.out).write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )
    return 0


def cmd_coverage(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.corpus, args.categories)
    scopes = _parse_scopes(args.scopes)
    covered = 0
    uncovered = []
    per_scope = {scope.name: 0 for scope in scopes}
    for i, sent in enumerate(corpus.sentences):
        result = coverage(sent, scopes, max_len=args.max_len)
        covered += len(result.covered)
        for m in sorted(result.uncovered):
            uncovered.append(
                {"sentence": i, "start": m.start, "end": m.end, "category": m.category}
            )
        for name, mentions in result.per_scope.items():
            per_scope[name] += len(mentions)
    _print_json(
        {
            "covered": covered,
            "uncovered": len(uncovered),
            "uncovered_mentions": uncovered,
            "per_scope": per_scope,
        }
    )
    return 0


def _train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with training options")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--lr-encoder", type=float)
    sub.add_argument("--lr-heads", type=float)
    sub.add_argument("--dropout", type=float)
    sub.add_argument("--weight-decay", type=float)
    sub.add_argument("--clip-norm", type=float)
    sub.add_argument("--embedding-dim", type=int)
    sub.add_argument("--hidden", type=int)
    sub.add_argument("--num-layers", type=int)
    sub.add_argument("--max-len", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--early-stop-f1", type=float)
    sub.add_argument(
        "--no-recurrent-encoder",
        action="store_true",
        help="feed embeddings straight to the heads",
    )


def _build_config(args: argparse.Namespace) -> TrainConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = TrainConfig.from_dict(json.load(fh))
    else:
        config = TrainConfig()
    config = config.override(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_encoder=args.lr_encoder,
        lr_heads=args.lr_heads,
        dropout=args.dropout,
        weight_decay=args.weight_decay,
        clip_norm=args.clip_norm,
        embedding_dim=args.embedding_dim,
        hidden=args.hidden,
        num_layers=args.num_layers,
        max_len=args.max_len,
        seed=args.seed,
        early_stop_f1=args.early_stop_f1,
    )
    if args.no_recurrent_encoder:
        config = config.override(use_recurrent_encoder=False)
    return config


def _run_training(args: argparse.Namespace, kind: str, variant: str | None) -> int:
    corpus = _read_corpus(args.corpus, args.categories)
    config = _build_config(args)
    val_corpus = _read_corpus(args.val, args.categories) if args.val else None
    external = val_external = None
    if args.embeddings:
        external = load_external_embeddings(
            args.embeddings, config.embedding_dim, [s.text for s in corpus.sentences]
        )
    if args.val_embeddings:
        if val_corpus is None:
            raise ValueError("--val-embeddings requires --val")
        val_external = load_external_embeddings(
            args.val_embeddings,
            config.embedding_dim,
            [s.text for s in val_corpus.sentences],
        )
    kwargs = {}
    if kind == "mulco":
        kwargs["scope_names"] = [s.name for s in _parse_scopes(args.scopes)]
    params, report = train(
        corpus,
        config,
        val_corpus,
        kind=kind,
        variant=variant,
        external=external,
        val_external=val_external,
        **kwargs,
    )
    save_params(args.out, params)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    else:
        print(report.to_json())
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    return _run_training(args, "mulco", None)


def cmd_baseline(args: argparse.Namespace) -> int:
    return _run_training(args, "bioes", args.variant)


def cmd_predict(args: argparse.Namespace) -> int:
    params = load_params(args.checkpoint)
    corpus = _read_corpus(args.corpus, args.categories)
    external = None
    if args.embeddings:
        external = load_external_embeddings(
            args.embeddings,
            params.embeddings.shape[1],
            [s.text for s in corpus.sentences],
        )
    lines = []
    for i, sent in enumerate(corpus.sentences):
        mentions = predict_mentions(
            params, sent.text, external=None if external is None else external[i]
        )
        lines.append(sentence_to_json(Sentence(sent.text, mentions)))
    Path(args.out).write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gold = _read_corpus(args.gold, args.categories)
    pred = _read_corpus(args.pred, args.categories)
    if len(gold.sentences) != len(pred.sentences):
        raise ValueError(
            f"gold has {len(gold.sentences)} sentences, "
            f"predictions have {len(pred.sentences)}"
        )
    for i, (g, p) in enumerate(zip(gold.sentences, pred.sentences)):
        if g.text != p.text:
            raise ValueError(f"sentence {i}: gold and prediction texts differ")
    report = score(
        [s.mentions for s in gold.sentences], [s.mentions for s in pred.sentences]
    )
    if args.format == "json":
        print(report.to_json())
    else:
        print(compare([(args.name, report)]))
    return 0


def cmd_gen_toy(args: argparse.Namespace) -> int:
    corpus = generate_toy_corpus(args.size, args.seed)
    save_corpus(corpus, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mulco",
        description="Nested named-entity tagging with scope-based labeling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument(
            "--categories", help='JSON manifest file: {"categories": [...]}'
        )
        return p

    p = add("stats", cmd_stats, "corpus statistics")
    p.add_argument("corpus")
    p.add_argument("--format", choices=("json", "table"), default="json")

    p = add("validate", cmd_validate, "check corpus well-formedness")
    p.add_argument("corpus")

    p = add("encode", cmd_encode, "write per-scope labelings")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--scopes", default=DEFAULT_SCOPES)
    p.add_argument("--max-len", type=int, default=512)

    p = add("decode", cmd_decode, "recover mentions from labelings")
    p.add_argument("labelings")
    p.add_argument("out")
    p.add_argument("--corpus", required=True, help="source sentences")
    p.add_argument("--scopes", default=DEFAULT_SCOPES)

    p = add("coverage", cmd_coverage, "which gold mentions the scopes can express")
    p.add_argument("corpus")
    p.add_argument("--scopes", default=DEFAULT_SCOPES)
    p.add_argument("--max-len", type=int, default=512)

    p = add("train", cmd_train, "train the scope tagger")
    p.add_argument("corpus")
    p.add_argument("out", help="checkpoint path")
    p.add_argument("--val", help="validation corpus")
    p.add_argument("--report", help="write the training report here")
    p.add_argument("--scopes", default=DEFAULT_SCOPES)
    p.add_argument("--embeddings", help="per-sentence input vectors (JSONL)")
    p.add_argument("--val-embeddings")
    _train_flags(p)

    p = add("baseline", cmd_baseline, "train a flat BIOES tagger")
    p.add_argument("corpus")
    p.add_argument("out", help="checkpoint path")
    p.add_argument(
        "--variant", choices=("innermost", "outermost"), default="outermost"
    )
    p.add_argument("--val", help="validation corpus")
    p.add_argument("--report", help="write the training report here")
    p.add_argument("--embeddings", help="per-sentence input vectors (JSONL)")
    p.add_argument("--val-embeddings")
    _train_flags(p)

    p = add("predict", cmd_predict, "emit predicted mentions")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--embeddings", help="per-sentence input vectors (JSONL)")

    p = add("eval", cmd_eval, "score predictions against gold")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--name", default="model", help="row label in table output")

    p = add("gen-toy", cmd_gen_toy, "generate the synthetic nested corpus")
    p.add_argument("out")
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (
        CorpusError,
        CheckpointError,
        TrainingDivergedError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
