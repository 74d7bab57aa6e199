"""Command line entry point: ``generate``, ``train`` and ``compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import CorpusSpec, generate_corpus, load_corpus, save_corpus, split_into_words
from .harness import (
    STRATEGIES,
    ExperimentConfig,
    TrainingAborted,
    compare_strategies,
    read_csv,
    run_experiment,
    write_csv,
    write_summary,
)
from .model import ModelConfig

log = logging.getLogger("ctc_curriculum")


def _generate(args: argparse.Namespace) -> int:
    spec = CorpusSpec(
        alphabet_size=args.alphabet_size,
        input_dim=args.input_dim,
        n_train=args.n_train,
        n_valid=args.n_valid,
        noise_sigma=args.noise_sigma,
        template_scale=args.template_scale,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate_corpus(spec)
    save_corpus(splits.train, out / "train.jsonl")
    save_corpus(splits.valid, out / "valid.jsonl")
    save_corpus(split_into_words(splits.train), out / "train_words.jsonl")
    log.info(
        "wrote %d train / %d valid lines (%d train target chars) to %s",
        len(splits.train), len(splits.valid), splits.train.total_target_chars, out,
    )
    return 0


def _train(args: argparse.Namespace) -> int:
    train = load_corpus(args.train)
    valid = load_corpus(args.valid)
    words = load_corpus(args.words) if args.words else None
    if len(train) == 0 or len(valid) == 0:
        log.error("training and validation corpora must be nonempty")
        return 2
    if args.strategy == "by_hand" and words is None:
        words = split_into_words(train)
    model = ModelConfig(
        input_dim=train.input_dim,
        hidden_dim=args.hidden_dim,
        alphabet_size=train.alphabet_size,
        learning_rate=args.lr,
    )
    config = ExperimentConfig(
        strategy=args.strategy,
        model=model,
        lambda_start=args.lambda_start,
        decay_epochs=args.decay_epochs,
        m_min=args.m_min,
        total_epochs=args.epochs,
        eval_every_targets=args.eval_every,
        seed=args.seed,
        min_delta=args.min_delta,
        patience=args.patience,
        train_path=str(args.train),
        valid_path=str(args.valid),
        words_path=str(args.words) if args.words else None,
        out_path=str(args.out),
    )
    try:
        points = run_experiment(config, train, valid, words)
    except TrainingAborted as exc:
        log.error("training aborted: %s", exc)
        return 3
    write_csv(points, args.out)
    write_summary(points, config, f"{args.out}.summary.json")
    return 0


def _compare(args: argparse.Namespace) -> int:
    reports = {}
    for item in args.logs:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        reports[name] = read_csv(path)
    comparison = compare_strategies(
        reports, args.eval_every, args.threshold, metric=args.metric, reference=args.reference
    )
    print(comparison.render())
    if args.out:
        Path(args.out).write_text(json.dumps(comparison.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctc-curriculum", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic train/valid/words corpus")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n-train", type=int, default=10_000)
    gen.add_argument("--n-valid", type=int, default=1_000)
    gen.add_argument("--alphabet-size", type=int, default=20)
    gen.add_argument("--input-dim", type=int, default=16)
    gen.add_argument("--noise-sigma", type=float, default=0.3)
    gen.add_argument("--template-scale", type=float, default=CorpusSpec.template_scale)
    gen.set_defaults(func=_generate)

    tr = sub.add_parser("train", help="train one strategy and write its convergence CSV")
    tr.add_argument("--strategy", choices=STRATEGIES, default="baseline")
    tr.add_argument("--lambda-start", type=float, default=3.0)
    tr.add_argument("--decay-epochs", type=float, default=5.0)
    tr.add_argument("--m-min", type=int, default=5)
    tr.add_argument("--lr", type=float, default=0.001)
    tr.add_argument("--hidden-dim", type=int, default=32)
    tr.add_argument("--epochs", type=float, default=10.0)
    tr.add_argument("--eval-every", type=int, default=50_000)
    tr.add_argument("--min-delta", type=float, default=0.001)
    tr.add_argument("--patience", type=int, default=2)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--train", required=True)
    tr.add_argument("--valid", required=True)
    tr.add_argument("--words", help="word corpus for by_hand (cut from --train when omitted)")
    tr.add_argument("--out", required=True, help="CSV path; a .summary.json is written next to it")
    tr.set_defaults(func=_train)

    cmp_ = sub.add_parser("compare", help="compare convergence CSVs from several strategies")
    cmp_.add_argument("logs", nargs="+", help="NAME=PATH pairs (name defaults to the file stem)")
    cmp_.add_argument("--eval-every", type=int, default=50_000)
    cmp_.add_argument("--threshold", type=float, default=1.0)
    cmp_.add_argument("--metric", choices=("valid_norm_nll", "valid_cer"), default="valid_norm_nll")
    cmp_.add_argument("--reference", default="baseline")
    cmp_.add_argument("--out", help="optional JSON summary path")
    cmp_.set_defaults(func=_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
