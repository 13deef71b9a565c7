"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import checkpoint
from .bench import bench
from .corpus import (build_alphabet, default_alphabet, is_bio_label, load_dataset, read_conll,
                     write_conll)
from .errors import DataError, NumericError
from .features import Featurizer, NgramStats, collect_ngram_stats
from .metrics import chunk_f1, token_accuracy
from .model import PRESETS, ModelConfig, char_dense_feature
from .training import TrainConfig, multi_seed, train

log = logging.getLogger("chardense")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment. Keys use underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataError(f"{path}: line {lineno}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


# flag name -> (type, ModelConfig/TrainConfig field)
_MODEL_KEYS = {
    "head": (str, "head"), "pieces_k": (int, "pieces_k"), "rnn_size": (int, "rnn_size"),
    "rnn_depth": (int, "rnn_depth"), "word_dim": (int, "word_dim"), "char_layer_size": (int, "char_layer_size"),
    "pre_rnn_size": ("opt_int", "pre_rnn_size"), "post_rnn_size": ("opt_int", "post_rnn_size"),
    "max_n": (int, "max_n"), "dtype": (str, "dtype"), "no_char": ("bool", "use_char"),
    "case_sensitive": ("bool", "lowercase"),
}
_TRAIN_KEYS = {
    "epochs": (int, "epochs"), "initial_batch": (int, "initial_batch"), "freeze_frac": (float, "t_freeze"),
    "oov_swap": (float, "oov_swap_p"), "lr": (float, "lr"), "seed": (int, "seed"), "metric": (str, "metric"),
    "clip_norm": (float, "clip_norm"), "embeddings": (str, "embeddings"),
}
_NEGATED = {"no_char", "case_sensitive"}


def _convert(kind, value):
    if kind == "opt_int":
        return None if str(value).lower() in ("none", "0", "") else int(value)
    if kind == "bool":
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    return kind(value)


def build_configs(args) -> tuple[ModelConfig, TrainConfig]:
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(_MODEL_KEYS) - set(_TRAIN_KEYS) - {"preset", "data", "threads"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def value(key):
        v = getattr(args, key, None)
        if v is None or v is False and key in _NEGATED:
            v = file_vals.get(key)
        return v

    preset = value("preset")
    mkw = dict(PRESETS[preset]) if preset else {}
    for key, (kind, field) in _MODEL_KEYS.items():
        v = value(key)
        if v is not None:
            v = _convert(kind, v)
            mkw[field] = not v if key in _NEGATED else v
    tkw = {"initial_batch": 16} if preset in ("pos", "ner") else {}
    for key, (kind, field) in _TRAIN_KEYS.items():
        v = value(key)
        if v is not None:
            tkw[field] = _convert(kind, v)
    try:
        return ModelConfig(**mkw), TrainConfig(**tkw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _data_paths(args):
    data = args.data
    if data is None:
        raise UsageError("--data is required")
    if os.path.isdir(data):
        paths = [os.path.join(data, f"{n}.txt") for n in ("train", "dev", "test")]
        if not os.path.exists(paths[0]):
            raise DataError(f"{paths[0]} not found")
        return [p if os.path.exists(p) else None for p in paths]
    return [data, args.dev, args.test]


def _load(args):
    train_p, dev_p, test_p = _data_paths(args)
    return load_dataset(train_p, dev_p, test_p, strict=not args.lenient)


def _model_flags(p):
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="controls all randomness")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--head", choices=["softmax", "crf"])
    p.add_argument("--pieces-k", type=int)
    p.add_argument("--rnn-size", type=int)
    p.add_argument("--rnn-depth", type=int)
    p.add_argument("--word-dim", type=int)
    p.add_argument("--char-layer-size", type=int)
    p.add_argument("--pre-rnn-size", help="integer or 'none'")
    p.add_argument("--post-rnn-size", help="integer or 'none'")
    p.add_argument("--max-n", type=int)
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--no-char", action="store_true", default=None, help="zero the character channel")
    p.add_argument("--case-sensitive", action="store_true", default=None, help="do not lowercase vocabulary lookups")
    p.add_argument("--epochs", type=int)
    p.add_argument("--initial-batch", type=int)
    p.add_argument("--freeze-frac", type=float)
    p.add_argument("--oov-swap", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--metric", choices=["accuracy", "f1"])
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--embeddings", help="pretrained vectors, one 'word v1 ... vd' per line")


def _data_flags(p, required=True):
    p.add_argument("--data", required=required, help="directory with train/dev/test.txt, or a training file")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--lenient", action="store_true", help="repair BIO violations instead of failing")


def make_parser():
    p = _Parser(prog="chardense", description="Char-dense Bi-LSTM(-CRF) sequence tagger")
    p.add_argument("--seed", type=int, help="controls all randomness")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model")
    _data_flags(t)
    _model_flags(t)
    t.add_argument("--checkpoint", required=True, help="output checkpoint path")
    t.add_argument("--log", help="write the per-epoch training log here")

    g = sub.add_parser("tag", help="append predicted tags to a CoNLL file")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--input", required=True, help="CoNLL file; column 0 is the token")
    g.add_argument("--output", help="default stdout")
    g.add_argument("--no-gold", action="store_true", help="input has no tag column")

    e = sub.add_parser("eval", help="score predictions")
    e.add_argument("file", nargs="?", help="CoNLL file whose last two columns are gold and predicted tags")
    e.add_argument("--gold")
    e.add_argument("--pred")
    e.add_argument("--metric", choices=["f1", "accuracy", "both"], default="both")

    x = sub.add_parser("extract-features", help="dump per-word feature vectors")
    x.add_argument("--word", action="append", default=[])
    x.add_argument("--input", help="file with one word per line")
    kind = x.add_mutually_exclusive_group()
    kind.add_argument("--sparse", action="store_true", help="sparse normalized vector (default)")
    kind.add_argument("--dense", action="store_true", help="char-dense layer output (needs --checkpoint)")
    x.add_argument("--checkpoint")
    x.add_argument("--data", help="training file used to build n-gram stats and alphabet")
    x.add_argument("--pieces-k", type=int, default=None)
    x.add_argument("--max-n", type=int, default=8)

    b = sub.add_parser("bench", help="throughput benchmark")
    _data_flags(b)
    _model_flags(b)
    b.add_argument("--timed-epochs", type=int, default=3)

    m = sub.add_parser("experiment", help="multi-seed mean/SD report")
    _data_flags(m)
    _model_flags(m)
    m.add_argument("--seeds", type=int, default=5)
    m.add_argument("--output", help="also write the report here")
    return p


def cmd_train(args):
    mcfg, tcfg = build_configs(args)
    ds = _load(args)
    if tcfg.metric == "f1" and ds.scheme != "BIO":
        raise UsageError("--metric f1 needs BIO-tagged data")

    def progress(e):
        log.info("epoch %d  loss %.4f  dev %.2f  batch %d  %.1f sent/s", e.epoch, e.loss, e.dev_metric,
                 e.batch_size, e.sent_per_sec)

    ckpt, trainlog = train(ds, mcfg, tcfg, progress)
    with open(args.checkpoint, "wb") as fh:
        fh.write(ckpt)
    text = trainlog.dumps()
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(f"best epoch {trainlog.best_epoch} dev {tcfg.metric} {trainlog.best_dev:.2f}")
    return 0


def cmd_tag(args):
    model = checkpoint.load(args.checkpoint)
    with open(args.input, encoding="utf-8") as fh:
        sents = read_conll(fh, 0, None if args.no_gold else -1)
    pred = model.tag(sents, threads=max(1, args.threads))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            write_conll(sents, fh, pred)
    else:
        write_conll(sents, sys.stdout, pred)
    return 0


def cmd_eval(args):
    if args.file:
        with open(args.file, encoding="utf-8") as fh:
            lines = fh.readlines()
        gold = [s.tags for s in read_conll(lines, 0, -2)]
        pred = [s.tags for s in read_conll(lines, 0, -1)]
    elif args.gold and args.pred:
        with open(args.gold, encoding="utf-8") as fh:
            gold = [s.tags for s in read_conll(fh)]
        with open(args.pred, encoding="utf-8") as fh:
            pred = [s.tags for s in read_conll(fh)]
    else:
        raise UsageError("eval needs FILE or both --gold and --pred")
    bio = all(is_bio_label(t) for seq in (*gold, *pred) for t in seq)
    if args.metric == "f1" and not bio:
        raise DataError("chunk F1 needs BIO labels")
    try:
        if args.metric == "f1" or args.metric == "both" and bio:
            sys.stdout.write(chunk_f1(gold, pred).report())
        else:
            print(f"accuracy: {token_accuracy(gold, pred):6.2f}%")
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return 0


def cmd_extract(args):
    words = list(args.word)
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            words += [w for line in fh for w in line.split()]
    if not words:
        raise UsageError("no words given (use --word or --input)")
    model = checkpoint.load(args.checkpoint) if args.checkpoint else None
    if args.dense and model is None:
        raise UsageError("--dense needs --checkpoint")
    if model is not None:
        featurizer = model.featurizer
    else:
        if args.data:
            with open(args.data, encoding="utf-8") as fh:
                train_sents = read_conll(fh, 0, None)
            stats, alphabet = collect_ngram_stats(train_sents, args.max_n), build_alphabet(train_sents)
        else:
            stats, alphabet = NgramStats({}, args.max_n), default_alphabet()
        featurizer = Featurizer(stats, alphabet, args.pieces_k or 2)
    for w in words:
        vec = featurizer.get(w)
        if args.dense:
            s = model.store
            vec = char_dense_feature(vec.astype(np.float64), s["char/W"].astype(np.float64),
                                     s["char/b"].astype(np.float64))
        print(w + "\t" + ",".join(repr(float(v)) for v in vec))
    return 0


def cmd_bench(args):
    mcfg, tcfg = build_configs(args)
    report = bench(_load(args), mcfg, tcfg, args.timed_epochs)
    sys.stdout.write(report.dumps())
    return 0


def cmd_experiment(args):
    mcfg, tcfg = build_configs(args)
    ds = _load(args)
    report = multi_seed(args.seeds, ds, mcfg, tcfg)
    text = report.dumps()
    sys.stdout.write(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0 if len(report.values) >= 2 else EXIT_NUMERIC


COMMANDS = {"train": cmd_train, "tag": cmd_tag, "eval": cmd_eval, "extract-features": cmd_extract,
            "bench": cmd_bench, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"chardense: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return 0 if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"chardense: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"chardense: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"chardense: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
