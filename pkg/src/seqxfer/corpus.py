"""Corpus ingestion and conversion.

CoNLL column files, contiguous-entity -> BIO conversion, BIO <-> span
extraction (with an optional repair mode), vocabulary construction,
pre-trained word-vector loading and LM batch preparation.
"""

import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import seeded_init
from .errors import ContractError, DataError, ParseError

PAD, UNK = 0, 1
# char vocabularies reserve word-boundary markers
BOW, EOW = 2, 3
# word vocabularies reserve sentence-boundary targets for the LM
BOS, EOS = 2, 3

WORD_RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")
CHAR_RESERVED = ("<pad>", "<unk>", "<bow>", "<eow>")


@dataclass
class LabeledSequence:
    tokens: list
    tags: list

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ContractError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags")
        if any(t == "" for t in self.tokens):
            raise ContractError("empty token string")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class EntitySpan:
    """Typed span over token indices, half-open [start, end)."""
    type: str
    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ContractError(f"bad span bounds [{self.start}, {self.end})")


class Vocabulary:
    """Bidirectional symbol <-> id map with reserved leading entries.

    Unknown symbols look up to the UNK id; reserved symbols occupy
    ids 0..len(reserved)-1.
    """

    def __init__(self, symbols, reserved=WORD_RESERVED):
        self.reserved = tuple(reserved)
        seen = set(self.reserved)
        self.symbols = list(self.reserved)
        for s in symbols:
            if s not in seen:
                seen.add(s)
                self.symbols.append(s)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    def id(self, symbol):
        return self._index.get(symbol, UNK)

    def symbol(self, idx):
        return self.symbols[idx]

    def __contains__(self, symbol):
        return symbol in self._index

    def __len__(self):
        return len(self.symbols)

    def non_reserved(self):
        return self.symbols[len(self.reserved):]

    def to_dict(self):
        return {"reserved": list(self.reserved), "symbols": self.non_reserved()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["symbols"], reserved=tuple(d["reserved"]))

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.symbols == other.symbols \
            and self.reserved == other.reserved


# CoNLL column format ------------------------------------------------


def _as_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return fh.read().splitlines()
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source.read().splitlines()
    return [line.rstrip("\n") for line in source]


def read_conll(source, token_col=0, tag_col=1):
    """Parse a whitespace-separated column file into LabeledSequences.

    Blank lines delimit sentences; runs of tabs/spaces both split.
    A line missing the requested column raises ParseError with its
    1-based line number.
    """
    sentences = []
    tokens, tags = [], []
    for lineno, raw in enumerate(_as_lines(source), start=1):
        line = raw.strip()
        if not line:
            if tokens:
                sentences.append(LabeledSequence(tokens, tags))
                tokens, tags = [], []
            continue
        cols = line.split()
        for col in (token_col, tag_col):
            needed = col + 1 if col >= 0 else -col
            if len(cols) < needed:
                raise ParseError(
                    f"line {lineno}: expected column {col}, found "
                    f"{len(cols)} column(s)")
        tokens.append(cols[token_col])
        tags.append(cols[tag_col])
    if tokens:
        sentences.append(LabeledSequence(tokens, tags))
    return sentences


def write_conll(sentences, dest=None):
    """Write 'token tag' lines, one blank line between sentences."""
    buf = io.StringIO() if dest is None else dest
    close = False
    if isinstance(dest, (str, Path)):
        buf = open(dest, "w", encoding="utf-8")
        close = True
    try:
        for sent in sentences:
            for tok, tag in zip(sent.tokens, sent.tags):
                buf.write(f"{tok} {tag}\n")
            buf.write("\n")
    finally:
        if close:
            buf.close()
    if dest is None:
        return buf.getvalue()
    return None


def read_sentences(source):
    """Plain-text LM corpus: one pre-tokenized sentence per line."""
    return [line.split() for line in _as_lines(source) if line.strip()]


# BIO conversions ----------------------------------------------------


def contiguous_to_bio(raw_tags):
    """Turn runs of bare entity types into BIO spans.

    Each maximal run of one non-O type becomes B-X I-X...; adjacent runs
    of different types each open with B-.
    """
    out = []
    prev = "O"
    for tag in raw_tags:
        if tag == "O":
            out.append("O")
        elif tag == prev:
            out.append(f"I-{tag}")
        else:
            out.append(f"B-{tag}")
        prev = tag
    return out


def bio_to_spans(tags, repair=False):
    """Extract EntitySpans from BIO tags.

    Strict mode raises DataError on an I-X with no live X entity;
    repair mode reads it as B-X.
    """
    spans = []
    cur_type, cur_start = None, None

    def close(end):
        nonlocal cur_type, cur_start
        if cur_type is not None:
            spans.append(EntitySpan(cur_type, cur_start, end))
            cur_type, cur_start = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i)
        elif tag.startswith("B-"):
            close(i)
            cur_type, cur_start = tag[2:], i
        elif tag.startswith("I-"):
            etype = tag[2:]
            if cur_type == etype:
                continue
            if not repair:
                raise DataError(f"illegal tag {tag!r} at index {i}")
            close(i)
            cur_type, cur_start = etype, i
        else:
            raise DataError(f"not a BIO tag: {tag!r} at index {i}")
    close(len(tags))
    return spans


def spans_to_bio(spans, length):
    """Inverse of bio_to_spans for non-overlapping spans."""
    tags = ["O"] * length
    for span in spans:
        if span.end > length:
            raise ContractError(f"span {span} exceeds sentence length {length}")
        tags[span.start] = f"B-{span.type}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.type}"
    return tags


def validate_bio(sentences):
    """Raise DataError naming the sentence index on any illegal tag run."""
    for i, sent in enumerate(sentences):
        try:
            bio_to_spans(sent.tags, repair=False)
        except DataError as exc:
            raise DataError(f"sentence {i}: {exc}") from exc


# vocabularies -------------------------------------------------------


def build_vocab(token_lists, min_count=1, reserved=WORD_RESERVED):
    """Frequency-thresholded, codepoint-sorted symbol vocabulary."""
    if min_count < 1:
        raise ContractError("min_count must be >= 1")
    counts = Counter()
    for toks in token_lists:
        counts.update(toks)
    kept = sorted(s for s, c in counts.items() if c >= min_count)
    return Vocabulary(kept, reserved=reserved)


def build_char_vocab(token_lists, reserved=CHAR_RESERVED):
    chars = set()
    for toks in token_lists:
        for tok in toks:
            chars.update(tok)
    return Vocabulary(sorted(chars), reserved=reserved)


# pre-trained vectors ------------------------------------------------


def load_word_vectors(source, vocab, dim, seed=0):
    """Read 'word v1 ... v_dim' lines into a [|vocab|, dim] matrix.

    Vocab words absent from the file get seeded glorot rows; returns
    (matrix, fraction of non-reserved vocab words found).
    """
    matrix = seeded_init((len(vocab), dim), "glorot", seed)
    matrix[PAD] = 0.0
    found = set()
    for lineno, raw in enumerate(_as_lines(source), start=1):
        if not raw.strip():
            continue
        parts = raw.split()
        word, values = parts[0], parts[1:]
        if len(values) != dim:
            raise ParseError(
                f"line {lineno}: expected {dim} floats, found {len(values)}")
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if word in vocab:
            matrix[vocab.id(word)] = vec
            found.add(word)
    n = len(vocab.non_reserved())
    coverage = len(found & set(vocab.non_reserved())) / n if n else 0.0
    return matrix, coverage


# LM batches ---------------------------------------------------------


@dataclass
class LMBatch:
    """One padded LM minibatch.

    Word surface forms are deduplicated: uniq_char_ids holds each
    distinct word's padded char-id row once, word_index maps [B, T]
    positions into it.
    """
    uniq_char_ids: np.ndarray   # [U, L] int
    word_index: np.ndarray      # [B, T] int
    fwd_targets: np.ndarray     # [B, T] int, next-word ids (EOS at end)
    bwd_targets: np.ndarray     # [B, T] int, previous-word ids (BOS at front)
    mask: np.ndarray            # [B, T] float, 1 where a real token sits

    @property
    def n_tokens(self):
        return int(self.mask.sum())


def char_id_row(word, char_vocab, max_len):
    """[BOW, chars..., EOW, PAD...] of fixed length; truncates long words."""
    if max_len < 3:
        raise ContractError("max_len must be >= 3")
    ids = [BOW] + [char_vocab.id(c) for c in word[:max_len - 2]] + [EOW]
    ids.extend([PAD] * (max_len - len(ids)))
    return np.array(ids, dtype=np.int64)


def lm_batches(corpus, vocab, char_vocab, batch_size, max_word_len, seed=0):
    """Shuffle, length-bucket and pad sentences into LMBatches."""
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    sentences = [s for s in corpus if s]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sentences))
    shuffled = [sentences[i] for i in order]
    shuffled.sort(key=len)  # stable: equal lengths keep shuffled order
    chunks = [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]
    chunk_order = rng.permutation(len(chunks))

    pad_row = np.full(max_word_len, PAD, dtype=np.int64)
    batches = []
    for ci in chunk_order:
        chunk = chunks[ci]
        B, T = len(chunk), max(len(s) for s in chunk)
        uniq = {}
        rows = [pad_row]
        uniq["<pad>"] = 0
        word_index = np.zeros((B, T), dtype=np.int64)
        fwd = np.full((B, T), PAD, dtype=np.int64)
        bwd = np.full((B, T), PAD, dtype=np.int64)
        mask = np.zeros((B, T), dtype=np.float64)
        for b, sent in enumerate(chunk):
            ids = [vocab.id(t) for t in sent]
            for k, tok in enumerate(sent):
                if tok not in uniq:
                    uniq[tok] = len(rows)
                    rows.append(char_id_row(tok, char_vocab, max_word_len))
                word_index[b, k] = uniq[tok]
                fwd[b, k] = ids[k + 1] if k + 1 < len(sent) else EOS
                bwd[b, k] = ids[k - 1] if k > 0 else BOS
                mask[b, k] = 1.0
        batches.append(LMBatch(np.stack(rows), word_index, fwd, bwd, mask))
    return batches
