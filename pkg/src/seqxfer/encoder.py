"""Character-aware word encoder.

Char embeddings -> multi-width 1-d convolutions -> max-over-time pooling
-> gated highway layers -> linear projection.  The encoder is context
free: one vector per surface form.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import PAD, char_id_row
from .errors import ContractError

NEG_BIG = -1e30  # masks padded windows out of the max-pool


@dataclass
class CharEncoderConfig:
    d_char: int = 16
    filter_widths: tuple = (1, 2, 3, 4)
    filter_counts: tuple = (8, 8, 16, 16)
    highway_layers: int = 2
    d_out: int = 64
    max_word_len: int = 16

    @property
    def pooled_dim(self):
        return sum(self.filter_counts)

    def to_dict(self):
        return {
            "d_char": self.d_char,
            "filter_widths": list(self.filter_widths),
            "filter_counts": list(self.filter_counts),
            "highway_layers": self.highway_layers,
            "d_out": self.d_out,
            "max_word_len": self.max_word_len,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["d_char"], tuple(d["filter_widths"]), tuple(d["filter_counts"]),
                   d["highway_layers"], d["d_out"], d["max_word_len"])


def init_char_encoder(config, n_chars, rng):
    """Fresh encoder parameters; names are stable across the package."""
    if len(config.filter_widths) != len(config.filter_counts):
        raise ContractError("filter_widths and filter_counts must align")
    y = config.pooled_dim
    params = {}
    params["char_enc.emb"] = ad.parameter(
        "char_enc.emb", ad.seeded_init((n_chars, config.d_char), "glorot", rng))
    for w, n in zip(config.filter_widths, config.filter_counts):
        params[f"char_enc.conv{w}.W"] = ad.parameter(
            f"char_enc.conv{w}.W",
            ad.seeded_init((w * config.d_char, n), "glorot", rng))
        params[f"char_enc.conv{w}.b"] = ad.parameter(
            f"char_enc.conv{w}.b", np.zeros(n))
    for layer in range(config.highway_layers):
        for mat in ("WT", "WH"):
            params[f"char_enc.hw{layer}.{mat}"] = ad.parameter(
                f"char_enc.hw{layer}.{mat}", ad.seeded_init((y, y), "glorot", rng))
        # negative gate bias starts the layer near the carry branch
        params[f"char_enc.hw{layer}.bT"] = ad.parameter(
            f"char_enc.hw{layer}.bT", np.full(y, -1.0))
        params[f"char_enc.hw{layer}.bH"] = ad.parameter(
            f"char_enc.hw{layer}.bH", np.zeros(y))
    params["char_enc.proj.W"] = ad.parameter(
        "char_enc.proj.W", ad.seeded_init((y, config.d_out), "glorot", rng))
    params["char_enc.proj.b"] = ad.parameter("char_enc.proj.b", np.zeros(config.d_out))
    return params


def char_ids(word, char_vocab, max_len):
    """Padded char-id row with word-boundary markers (see corpus.char_id_row)."""
    return char_id_row(word, char_vocab, max_len)


def highway_forward(x, WT, bT, WH, bH):
    """x_next = T (.) (WH x + bH) + (1 - T) (.) x with gate T = sigma(WT x + bT)."""
    WT, WH = ad._as_tensor(WT), ad._as_tensor(WH)
    x = ad._as_tensor(x)
    if x.data.shape[-1] != WT.data.shape[0]:
        raise ContractError(
            f"highway input dim {x.data.shape[-1]} != layer dim {WT.data.shape[0]}")
    gate = ad.sigmoid(ad.matmul(x, WT) + bT)
    transform = ad.matmul(x, WH) + bH
    return gate * transform + (1.0 - gate) * x


def encode_char_matrix(ids, params, config):
    """Encode a batch of padded char-id rows [U, L] into vectors [U, d_out].

    PAD char positions contribute zero embeddings; convolution windows
    whose start falls on PAD are forced to NEG_BIG before pooling, so
    trailing padding can never change the output.
    """
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    U, L = ids.shape
    d = config.d_char
    emb = ad.getitem(params["char_enc.emb"], ids.reshape(-1))
    emb = ad.reshape(emb, (U, L, d))
    real = (ids != PAD).astype(np.float64)
    emb = emb * real[:, :, None]

    pooled = []
    for w, n in zip(config.filter_widths, config.filter_counts):
        Lo = L - w + 1
        if Lo < 1:
            raise ContractError(f"filter width {w} exceeds max word length {L}")
        W = params[f"char_enc.conv{w}.W"]
        acc = None
        for j in range(w):
            piece = ad.matmul(emb[:, j:j + Lo, :], W[j * d:(j + 1) * d, :])
            acc = piece if acc is None else acc + piece
        act = ad.tanh(acc + params[f"char_enc.conv{w}.b"])
        window_ok = real[:, :Lo]
        act = act + ((1.0 - window_ok) * NEG_BIG)[:, :, None]
        pooled.append(ad.tmax(act, axis=1))
    x = ad.concat(pooled, axis=1)

    for layer in range(config.highway_layers):
        x = highway_forward(
            x,
            params[f"char_enc.hw{layer}.WT"], params[f"char_enc.hw{layer}.bT"],
            params[f"char_enc.hw{layer}.WH"], params[f"char_enc.hw{layer}.bH"])
    return ad.matmul(x, params["char_enc.proj.W"]) + params["char_enc.proj.b"]


def encode_word(chars, params, config):
    """Single padded CharSequence -> plain d_out vector."""
    return encode_char_matrix(np.asarray(chars)[None, :], params, config).data[0]
