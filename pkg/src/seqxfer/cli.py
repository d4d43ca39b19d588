"""Command-line entry point.

Subcommands: pretrain-lm, finetune-lm, train-ner, train-pos,
transfer-init, evaluate, analyze, convert-bio.  Exit codes: 0 success,
1 data/model error, 2 usage error.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import bilm as bilm_mod
from . import corpus as corpus_mod
from . import evaluation, tagger as tagger_mod, transfer as transfer_mod
from .checkpoint import Checkpoint
from .encoder import CharEncoderConfig
from .errors import ContractError, DataError, NumericError, TransferError

log = logging.getLogger("seqxfer")


@dataclass
class RunConfig:
    seed: int = 0
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 10
    lm_epochs: int = 10
    finetune_epochs: int = 3
    patience: int = 0              # 0 = disabled
    dropout: float = 0.5
    anchor_l2: float = 0.001
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    d_word: int = 50
    hidden: int = 200
    layers: int = 2
    d_char: int = 16
    d_out: int = 64
    lm_hidden: int = 128
    lm_layers: int = 1
    filter_widths: str = "1,2,3,4"
    filter_counts: str = "8,8,16,16"
    max_word_len: int = 16
    min_count: int = 1
    head: str = "crf"
    unk_rate: float = 0.1
    freeze_word_emb: int = 0

    def encoder_config(self):
        return CharEncoderConfig(
            d_char=self.d_char,
            filter_widths=tuple(int(x) for x in self.filter_widths.split(",")),
            filter_counts=tuple(int(x) for x in self.filter_counts.split(",")),
            d_out=self.d_out, max_word_len=self.max_word_len)

    def bilm_config(self):
        return bilm_mod.BiLMConfig(self.encoder_config(), self.lm_hidden,
                                   self.lm_layers)

    def tagger_config(self, head=None, anchor=0.0):
        return tagger_mod.TaggerConfig(
            d_word=self.d_word, hidden=self.hidden, layers=self.layers,
            dropout=self.dropout, head=head or self.head,
            freeze_word_emb=bool(self.freeze_word_emb),
            unk_rate=self.unk_rate, anchor_coeff=anchor)


def load_config(path=None, overrides=None):
    """Line-oriented key=value file, then CLI-flag overrides."""
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    def apply(key, value, where):
        if key not in types:
            raise DataError(f"{where}: unknown config key {key!r}")
        try:
            setattr(cfg, key, types[key](value))
        except ValueError as exc:
            raise DataError(f"{where}: bad value for {key!r}: {exc}") from exc
    if path:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            apply(key.strip(), value.strip(), f"{path}:{lineno}")
    for key, value in (overrides or {}).items():
        if value is not None:
            apply(key, value, "command line")
    return cfg


def _emit(line):
    print(line, flush=True)


def _load_policy(path, source, target_labels=None):
    actions = {}
    anchor = 0.0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "anchor_l2":
            anchor = float(value)
        else:
            actions[key] = value
    mapping = None
    if target_labels is not None and "labels" in source.architecture:
        src_labels = tagger_mod.LabelSet(source.architecture["labels"],
                                         bio=source.architecture.get("bio", True))
        mapping = transfer_mod.map_label_space(src_labels, target_labels)
    return transfer_mod.TransferPolicy(actions, label_mapping=mapping,
                                       anchor_coeff=anchor)


def default_tagger_policy(source, target_arch, target_word_vocab, target_labels):
    """Copy whatever is shape- and semantics-compatible, reinit the rest."""
    src_arch = source.architecture
    actions = {"trunk": "copy"}
    actions["word_embedding"] = ("copy" if source.word_vocab == target_word_vocab
                                 else "skip")
    mapping = None
    same_head = src_arch["config"]["head"] == target_arch["config"]["head"]
    same_scheme = src_arch.get("bio", True) == target_arch.get("bio", True)
    if same_head and same_scheme:
        actions["emission"] = "copy"
        actions["crf"] = "copy"
        src_labels = tagger_mod.LabelSet(src_arch["labels"], bio=src_arch.get("bio", True))
        mapping = transfer_mod.map_label_space(src_labels, target_labels)
    else:
        actions["emission"] = "reinitialize"
        actions["crf"] = "reinitialize"
    for group in ("char_encoder", "lm_lstm", "lm_head"):
        actions[group] = "reinitialize"
    return transfer_mod.TransferPolicy(actions, label_mapping=mapping)


# commands -----------------------------------------------------------


def cmd_pretrain_lm(args, cfg):
    corpora = [corpus_mod.read_sentences(p) for p in args.corpus]
    train = corpora[0]
    vocab = corpus_mod.build_vocab(train, min_count=cfg.min_count)
    char_vocab = transfer_mod.build_shared_char_vocab(corpora)
    epochs = args.epochs or cfg.lm_epochs
    ck = bilm_mod.train_lm(
        train, vocab, char_vocab, cfg.bilm_config(), epochs,
        batch_size=cfg.batch_size, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
        eps=cfg.eps, clip_norm=cfg.clip_norm, seed=cfg.seed, log_fn=_emit)
    ck.save(args.out)
    _emit(f"checkpoint {args.out}")
    return 0


def cmd_finetune_lm(args, cfg):
    src = Checkpoint.load(args.init)
    target = corpus_mod.read_sentences(args.corpus[0])
    target_vocab = corpus_mod.build_vocab(target, min_count=cfg.min_count)
    surgered = bilm_mod.replace_vocab_head(src, target_vocab, cfg.seed)
    epochs = args.epochs or cfg.finetune_epochs
    ck = bilm_mod.train_lm(
        target, epochs=epochs, init=surgered,
        batch_size=cfg.batch_size, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
        eps=cfg.eps, clip_norm=cfg.clip_norm, seed=cfg.seed,
        anchor_coeff=cfg.anchor_l2, log_fn=_emit)
    ck.save(args.out)
    _emit(f"checkpoint {args.out}")
    return 0


def _train_tagger_common(args, cfg, head):
    train = corpus_mod.read_conll(args.train)
    dev = corpus_mod.read_conll(args.dev) if args.dev else None
    bio = head == "crf"
    labels = tagger_mod.LabelSet.from_sequences(train, bio=bio)
    word_vocab = corpus_mod.build_vocab([s.tokens for s in train],
                                        min_count=cfg.min_count)
    provider = None
    init_tensors = None
    report = None
    anchor = 0.0
    if args.init:
        src = Checkpoint.load(args.init)
        if src.architecture["kind"] == "bilm":
            provider = tagger_mod.ContextualProvider.from_checkpoint(src)
            anchor = cfg.anchor_l2
        else:
            d_ctx = 0
            tcfg = cfg.tagger_config(head=head)
            arch = tagger_mod.tagger_architecture(
                tcfg, len(word_vocab), len(labels), d_ctx, labels)
            policy = (_load_policy(args.policy, src, labels) if args.policy
                      else default_tagger_policy(src, arch, word_vocab, labels))
            init_tensors, report = transfer_mod.transfer_init(
                src, arch, policy, cfg.seed)
    tcfg = cfg.tagger_config(head=head, anchor=anchor)
    vectors = None
    if args.vectors:
        vectors, coverage = corpus_mod.load_word_vectors(
            args.vectors, word_vocab, cfg.d_word, seed=cfg.seed)
        _emit(f"vector_coverage {coverage:.4f}")
    patience = args.patience if args.patience is not None else (cfg.patience or None)
    model, metrics = tagger_mod.train_tagger(
        train, labels, tcfg, epochs=args.epochs or cfg.epochs, lr=cfg.lr,
        batch_size=cfg.batch_size, dev=dev, patience=patience, seed=cfg.seed,
        init_tensors=init_tensors, provider=provider, word_vocab=word_vocab,
        word_vectors=vectors, clip_norm=cfg.clip_norm, beta1=cfg.beta1,
        beta2=cfg.beta2, eps=cfg.eps, log_fn=_emit)
    provenance = [{"event": "train", "command": "train-ner" if bio else "train-pos",
                   "seed": cfg.seed, "init": args.init or None}]
    ck = model.to_checkpoint(provenance=provenance, metrics=metrics)
    ck.save(args.out)
    _emit(f"checkpoint {args.out}")
    if report is not None:
        Path(str(args.out) + ".report.txt").write_text(report.to_text())
    if args.test:
        test = corpus_mod.read_conll(args.test)
        pred = tagger_mod.predict(test, model)
        if bio:
            print(evaluation.span_f1(test, pred).to_kv(), end="")
        else:
            acc = tagger_mod._token_accuracy(test, pred)
            _emit(f"token_accuracy {100 * acc:.2f}")
    return 0


def cmd_train_ner(args, cfg):
    return _train_tagger_common(args, cfg, args.head or "crf")


def cmd_train_pos(args, cfg):
    return _train_tagger_common(args, cfg, args.head or "softmax")


def cmd_transfer_init(args, cfg):
    src = Checkpoint.load(args.init)
    train = corpus_mod.read_conll(args.train)
    head = args.head or cfg.head
    labels = tagger_mod.LabelSet.from_sequences(train, bio=(head == "crf"))
    word_vocab = corpus_mod.build_vocab([s.tokens for s in train],
                                        min_count=cfg.min_count)
    tcfg = cfg.tagger_config(head=head)
    arch = tagger_mod.tagger_architecture(tcfg, len(word_vocab), len(labels),
                                          0, labels)
    policy = (_load_policy(args.policy, src, labels) if args.policy
              else default_tagger_policy(src, arch, word_vocab, labels))
    tensors, report = transfer_mod.transfer_init(src, arch, policy, cfg.seed)
    ck = Checkpoint.create(
        "tagger", arch, tensors, word_vocab=word_vocab,
        provenance=[{"event": "transfer_init", "source": args.init}])
    ck.save(args.out)
    Path(str(args.out) + ".report.txt").write_text(report.to_text())
    _emit(f"checkpoint {args.out}")
    return 0


def cmd_evaluate(args, cfg):
    gold = corpus_mod.read_conll(args.gold)
    pred = corpus_mod.read_conll(args.pred)
    metrics = evaluation.span_f1(gold, pred)
    print(metrics.to_text(), end="")
    print(metrics.to_kv(), end="")
    return 0


def cmd_analyze(args, cfg):
    if len(args.corpus) < 1 or not args.test:
        raise DataError("analyze needs --corpus A and --test B (reference)")
    a = corpus_mod.read_conll(args.corpus[0])
    b = corpus_mod.read_conll(args.test)
    print(evaluation.overlap_report(a, b, name_a=args.corpus[0], name_b=args.test),
          end="")
    return 0


def cmd_convert_bio(args, cfg):
    sentences = corpus_mod.read_conll(args.corpus[0])
    converted = [corpus_mod.LabeledSequence(
        s.tokens, corpus_mod.contiguous_to_bio(s.tags)) for s in sentences]
    corpus_mod.write_conll(converted, args.out)
    _emit(f"wrote {args.out}")
    return 0


# wiring -------------------------------------------------------------

COMMANDS = {
    "pretrain-lm": cmd_pretrain_lm,
    "finetune-lm": cmd_finetune_lm,
    "train-ner": cmd_train_ner,
    "train-pos": cmd_train_pos,
    "transfer-init": cmd_transfer_init,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "convert-bio": cmd_convert_bio,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="seqxfer")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--init")
        p.add_argument("--corpus", action="append", default=[])
        p.add_argument("--train")
        p.add_argument("--dev")
        p.add_argument("--test")
        p.add_argument("--vectors")
        p.add_argument("--gold")
        p.add_argument("--pred")
        p.add_argument("--epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--head", choices=["crf", "softmax"])
        p.add_argument("--out")
        p.add_argument("--policy")
    return parser


def run(argv):
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warn": logging.WARNING}.get(os.environ.get("SEQXFER_LOG", "info"),
                                          logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    overrides = {"seed": args.seed, "epochs": args.epochs,
                 "patience": args.patience, "head": args.head}
    try:
        cfg = load_config(args.config, {k: v for k, v in overrides.items()
                                        if v is not None})
        return COMMANDS[args.command](args, cfg)
    except (DataError, ContractError, TransferError, NumericError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
