"""Command-line entry point: ``elcrf train|tag|eval|synth|inspect``.

Exit status is 0 on success, 1 on an internal failure and 2 on bad usage or
bad input.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from . import model as model_io
from .data import (
    Corpus,
    CorpusFormatError,
    chunk_f1,
    format_comparison,
    loo_cross_validate,
    read_conll,
    write_conll,
)
from .featurizer import EmbeddingFormatError, load_pretrained_embeddings
from .labels import AllocationError, LabelSchema, SchemaError
from .synth import KINDS, ConstraintSpec, GenerationError, constraint_violations, generate_constraint_corpus
from .training import ConfigError, TrainConfig, init_params, train

log = logging.getLogger("elcrf")

PATH_KEYS = ("train", "dev", "test", "model", "embeddings", "out", "log", "labels")

# flag dest -> TrainConfig field
FLAG_FIELDS = {
    "hidden_states": "hidden_states",
    "factor_size": "factor_size",
    "scheme": "scheme",
    "lr": "learning_rate",
    "lr_decay": "lr_decay",
    "clip": "clip_norm",
    "dropout": "dropout_p",
    "epochs": "max_epochs",
    "patience": "patience",
    "seed": "seed",
    "d_emb": "d_emb",
    "window": "window",
    "batch_size": "batch_size",
    "unk_replace": "unk_replace_p",
}


class UsageError(Exception):
    """Bad flags, files or inputs; reported with exit status 2."""


# -- config ---------------------------------------------------------------


def _coerce(key: str, raw: str):
    types = {f.name: f.type for f in fields(TrainConfig)}
    t = str(types[key])
    low = raw.strip().lower()
    if key == "factor_size" and low in ("full", "none", "full-rank"):
        return None
    if key == "hidden_states" and low == "none":
        return None
    try:
        if "bool" in t:
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in t:
            return int(raw)
        if "float" in t:
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw.strip()


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    known = {f.name for f in fields(TrainConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in PATH_KEYS:
            out[key] = value
        elif key in known:
            out[key] = _coerce(key, value)
        else:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
    return out


def resolve(args: argparse.Namespace) -> tuple[TrainConfig, dict]:
    """Merge config file and flags (flags win) into a TrainConfig plus paths."""
    merged = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in PATH_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    for dest, name in FLAG_FIELDS.items():
        v = getattr(args, dest, None)
        if v is not None:
            merged[name] = v
    if getattr(args, "full_rank", False):
        merged["factor_size"] = None
    paths = {k: merged.pop(k) for k in PATH_KEYS if k in merged}
    try:
        return TrainConfig.from_dict(merged), paths
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


# -- helpers --------------------------------------------------------------


def _read_corpus(path: str, digit_normalize: bool = False) -> Corpus:
    try:
        with open(path) as fh:
            return read_conll(fh, digit_normalize=digit_normalize, name=path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except CorpusFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_model(path: Optional[str]):
    if not path:
        raise UsageError("--model is required")
    try:
        return model_io.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read model {path}: {exc.strerror}") from None
    except (model_io.ModelFormatError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: not a usable model file ({exc})") from None


def _output(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w"), True
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


# -- commands -------------------------------------------------------------


def cmd_train(args) -> int:
    config, paths = resolve(args)
    if "train" not in paths:
        raise UsageError("--train is required")
    train_set = _read_corpus(paths["train"], config.digit_normalize)
    dev_set = _read_corpus(paths["dev"], config.digit_normalize) if "dev" in paths else None
    if len(train_set) == 0:
        raise UsageError(f"{paths['train']}: no sequences")

    if args.loo:
        result = loo_cross_validate(config, train_set, jobs=args.jobs, merge_blocks=not args.split_blocks)
        if "out" in paths:
            out, close = _output(paths["out"])
            write_conll(train_set, out, result.predictions)
            if close:
                out.close()
        print(result.report.format_table())
        return 0

    if "model" not in paths:
        raise UsageError("--model is required")
    try:
        schema = None
        if "labels" in paths:
            with open(paths["labels"]) as fh:
                schema = LabelSchema.from_file(fh, train_set.label_seqs, config.scheme)
        params = init_params(config, train_set, schema)
    except OSError as exc:
        raise UsageError(f"cannot read {paths['labels']}: {exc.strerror}") from None
    except (AllocationError, SchemaError) as exc:
        raise UsageError(str(exc)) from None
    if "embeddings" in paths:
        try:
            with open(paths["embeddings"]) as fh:
                feat, n = load_pretrained_embeddings(fh, params.featurizer)
        except OSError as exc:
            raise UsageError(f"cannot read {paths['embeddings']}: {exc.strerror}") from None
        except EmbeddingFormatError as exc:
            raise UsageError(f"{paths['embeddings']}: {exc}") from None
        params.featurizer = feat
        log.info("pretrained embeddings: %d vocabulary rows matched", n)

    params, history = train(config, train_set, dev_set, params=params)
    model_io.save(params, paths["model"])
    log_path = paths.get("log", paths["model"] + ".log.tsv")
    Path(log_path).write_text(history.to_tsv())
    if history.best_epoch is not None:
        print(f"best dev F1 {history.best_dev_f1:.2f} at epoch {history.best_epoch}")
    return 0


def cmd_tag(args) -> int:
    params = _load_model(args.model)
    src = args.input or args.test
    if src is None:
        raise UsageError("an input file is required")
    corpus = _read_corpus(src, bool(params.config.get("digit_normalize", False)))
    preds = model_io.predict_many(params, corpus.token_seqs)
    if corpus.digit_normalize:
        # write the original tokens back, not the normalized ones
        corpus = _read_corpus(src, False)
    out, close = _output(args.out)
    write_conll(corpus, out, preds)
    if close:
        out.close()
    return 0


def _check_aligned(gold: Corpus, pred: Corpus, gold_path: str, pred_path: str):
    for i, (g, p) in enumerate(zip(gold.sentences, pred.sentences)):
        if g.tokens != p.tokens:
            raise UsageError(f"{pred_path}: sequence {i + 1} does not match {gold_path} "
                             f"({len(g.tokens)} vs {len(p.tokens)} tokens)")
    if len(gold) != len(pred):
        raise UsageError(f"{pred_path}: {len(pred)} sequences but {gold_path} has {len(gold)} "
                         f"(first unmatched sequence {min(len(gold), len(pred)) + 1})")


def cmd_eval(args) -> int:
    gold = _read_corpus(args.gold)
    pred = _read_corpus(args.pred)
    _check_aligned(gold, pred, args.gold, args.pred)
    report = chunk_f1(gold.label_seqs, pred.label_seqs)
    if args.compare:
        other = _read_corpus(args.compare)
        _check_aligned(gold, other, args.gold, args.compare)
        new = chunk_f1(gold.label_seqs, other.label_seqs)
        print(format_comparison(report, new, (Path(args.pred).stem[:7], Path(args.compare).stem[:7])))
        report = new
    else:
        print(report.format_table())
    if args.out:
        out, close = _output(args.out)
        out.write(report.to_json() + "\n")
        if close:
            out.close()
    return 0


def cmd_synth(args) -> int:
    try:
        spec = ConstraintSpec(kind=args.kind, length=tuple(args.length))
        corpus = generate_constraint_corpus(spec, args.n_sequences, args.seed)
    except GenerationError as exc:
        raise UsageError(str(exc)) from None
    assert not constraint_violations(corpus.label_seqs, spec, corpus.token_seqs)
    out, close = _output(args.out)
    write_conll(corpus, out)
    if close:
        out.close()
    return 0


def cmd_inspect(args) -> int:
    params = _load_model(args.model)
    f = params.factors
    if f.mode == "full-rank":
        raise UsageError("full-rank model: transitions are not factorized, there are no state embeddings")
    out, close = _output(args.out)
    k = f.k
    header = ["state", "label"] + [f"u{i}" for i in range(k)] + [f"v{i}" for i in range(k)]
    out.write("\t".join(header) + "\n")
    for z in range(f.M):
        coords = [repr(float(x)) for x in f.U[:, z]] + [repr(float(x)) for x in f.V[:, z]]
        out.write("\t".join([str(z), params.states.label_of(z)] + coords) + "\n")
    if close:
        out.close()
    return 0


# -- parser ---------------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--train", help="training corpus (CoNLL columns)")
    p.add_argument("--dev", help="dev corpus for early stopping")
    p.add_argument("--model", help="where to write the model")
    p.add_argument("--log", help="per-epoch TSV log (default: MODEL.log.tsv)")
    p.add_argument("--labels", help="label inventory, one label per line")
    p.add_argument("--embeddings", help="pretrained embeddings, 'token v1 ... vd' per line")
    p.add_argument("--out", help="LOO predictions output")
    p.add_argument("--config", help="'key = value' file; flags take precedence")
    p.add_argument("--hidden-states", type=int, help="number of latent states M")
    p.add_argument("--factor-size", type=int, help="rank k of the transition factors")
    p.add_argument("--full-rank", action="store_true", help="use an unfactorized M x M matrix")
    p.add_argument("--scheme", choices=("iob", "iobes"))
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--clip", type=float, help="global gradient norm bound")
    p.add_argument("--dropout", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--d-emb", type=int)
    p.add_argument("--window", type=int, help="window half-width")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--unk-replace", type=float, help="singleton-to-UNK probability")
    p.add_argument("--loo", action="store_true", help="leave-one-document-out evaluation instead")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for --loo")
    p.add_argument("--split-blocks", action="store_true",
                   help="with --loo, tag each block separately instead of one sequence per document")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elcrf", description="Embedded-state latent CRF tagger.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="append predicted labels to a corpus")
    p.add_argument("input", nargs="?")
    p.add_argument("--test", help="input corpus (alternative to the positional)")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="chunk F1 of predictions against gold")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--compare", help="second prediction file; rows sorted by F1 gain over PRED")
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a corpus with a planted constraint")
    p.add_argument("--kind", choices=KINDS, default="at-most-once")
    p.add_argument("--n-sequences", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, nargs=2, default=(12, 20), metavar=("MIN", "MAX"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="dump per-state transition embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"elcrf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"elcrf {args.command}: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
