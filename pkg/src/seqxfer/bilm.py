"""Bidirectional language model over char-encoded words.

Two independent LSTM stacks (left-to-right and right-to-left) share the
character encoder and the softmax vocabulary head.  Supports pretraining,
cross-lingual fine-tuning via vocabulary-head replacement, contextual
representation extraction and perplexity measurement.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, clip_by_global_norm, reverse_gradients
from .checkpoint import Checkpoint
from .corpus import lm_batches, char_id_row
from .encoder import CharEncoderConfig, encode_char_matrix, init_char_encoder
from .errors import ContractError, TransferError

DIRECTIONS = ("fwd", "bwd")
HEAD_PARAMS = ("lm.head.W", "lm.head.b")


@dataclass
class BiLMConfig:
    encoder: CharEncoderConfig = field(default_factory=CharEncoderConfig)
    lm_hidden: int = 128
    lm_layers: int = 1

    @property
    def d_out(self):
        return self.encoder.d_out

    def to_dict(self):
        return {"encoder": self.encoder.to_dict(),
                "lm_hidden": self.lm_hidden, "lm_layers": self.lm_layers}

    @classmethod
    def from_dict(cls, d):
        return cls(CharEncoderConfig.from_dict(d["encoder"]),
                   d["lm_hidden"], d["lm_layers"])


def init_bilm_params(config, n_chars, n_words, seed):
    rng = np.random.default_rng(seed)
    params = init_char_encoder(config.encoder, n_chars, rng)
    H, d = config.lm_hidden, config.d_out
    for direction in DIRECTIONS:
        for layer in range(config.lm_layers):
            base = f"lm.{direction}.l{layer}"
            params[f"{base}.Wx"] = ad.parameter(
                f"{base}.Wx", ad.seeded_init((d, 4 * H), "glorot", rng))
            params[f"{base}.Wh"] = ad.parameter(
                f"{base}.Wh", ad.seeded_init((H, 4 * H), "glorot", rng))
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0  # forget-gate bias
            params[f"{base}.b"] = ad.parameter(f"{base}.b", b)
            params[f"{base}.proj.W"] = ad.parameter(
                f"{base}.proj.W", ad.seeded_init((H, d), "glorot", rng))
            params[f"{base}.proj.b"] = ad.parameter(f"{base}.proj.b", np.zeros(d))
    params["lm.head.W"] = ad.parameter(
        "lm.head.W", ad.seeded_init((n_words, d), "glorot", rng))
    params["lm.head.b"] = ad.parameter("lm.head.b", np.zeros(n_words))
    return params


def params_from_tensors(tensors):
    return {name: ad.parameter(name, np.array(arr, copy=True))
            for name, arr in tensors.items()}


def tensors_from_params(params):
    return {name: np.array(p.data, copy=True) for name, p in params.items()}


def architecture(config, n_chars, n_words):
    return {"kind": "bilm", "config": config.to_dict(),
            "n_chars": n_chars, "n_words": n_words}


# forward pieces -----------------------------------------------------


def lstm_forward(xs, mask, Wx, Wh, b, reverse=False):
    """Run one LSTM layer over xs [B, T, D]; padded steps carry state through."""
    B, T, _ = xs.data.shape
    H = Wh.data.shape[0]
    h = ad.constant(np.zeros((B, H)))
    c = ad.constant(np.zeros((B, H)))
    outs = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        gates = ad.matmul(xs[:, t, :], Wx) + ad.matmul(h, Wh) + b
        i = ad.sigmoid(gates[:, :H])
        f = ad.sigmoid(gates[:, H:2 * H])
        g = ad.tanh(gates[:, 2 * H:3 * H])
        o = ad.sigmoid(gates[:, 3 * H:])
        c_new = f * c + i * g
        h_new = o * ad.tanh(c_new)
        m = mask[:, t:t + 1]
        c = c_new * m + c * (1.0 - m)
        h = h_new * m + h * (1.0 - m)
        outs[t] = h
    return ad.stack(outs, axis=1)


def encode_batch_words(batch, params, config):
    """Unique-word char encoding gathered back to [B, T, d_out]."""
    B, T = batch.word_index.shape
    enc = encode_char_matrix(batch.uniq_char_ids, params, config.encoder)
    x = ad.getitem(enc, batch.word_index.reshape(-1))
    return ad.reshape(x, (B, T, config.d_out))


def run_direction(x, mask, params, config, direction):
    """One direction's LSTM stack; each layer projects back to d_out."""
    for layer in range(config.lm_layers):
        base = f"lm.{direction}.l{layer}"
        h = lstm_forward(x, mask, params[f"{base}.Wx"], params[f"{base}.Wh"],
                         params[f"{base}.b"], reverse=(direction == "bwd"))
        x = ad.matmul(h, params[f"{base}.proj.W"]) + params[f"{base}.proj.b"]
    return x


def _nll_sum(states, targets, mask, params):
    B, T, d = states.data.shape
    V = params["lm.head.W"].data.shape[0]
    logits = ad.matmul(states, ad.transpose(params["lm.head.W"])) + params["lm.head.b"]
    logp = ad.log_softmax(logits, axis=-1)
    flat = ad.reshape(logp, (B * T, V))
    picked = flat[(np.arange(B * T), targets.reshape(-1))]
    return -(picked * mask.reshape(-1)).sum()


def bilm_loss_parts(batch, params, config):
    """(forward NLL sum, backward NLL sum, unmasked target count)."""
    count = batch.n_tokens
    if count == 0:
        raise ContractError("empty LM batch")
    x = encode_batch_words(batch, params, config)
    fwd_states = run_direction(x, batch.mask, params, config, "fwd")
    bwd_states = run_direction(x, batch.mask, params, config, "bwd")
    fwd = _nll_sum(fwd_states, batch.fwd_targets, batch.mask, params)
    bwd = _nll_sum(bwd_states, batch.bwd_targets, batch.mask, params)
    return fwd, bwd, count


def bilm_loss(batch, params, config):
    """Mean NLL per (position, direction) pair; ln|V| for a zeroed head."""
    fwd, bwd, count = bilm_loss_parts(batch, params, config)
    return (fwd + bwd) / (2.0 * count)


def contextual_states(char_ids_matrix, params, config):
    """Last-layer forward and backward states for one sentence, [T, 2*d_out]."""
    ids = np.asarray(char_ids_matrix)
    T = ids.shape[0]
    enc = encode_char_matrix(ids, params, config.encoder)
    x = ad.reshape(enc, (1, T, config.d_out))
    mask = np.ones((1, T))
    fwd = run_direction(x, mask, params, config, "fwd")
    bwd = run_direction(x, mask, params, config, "bwd")
    return ad.concat([ad.reshape(fwd, (T, config.d_out)),
                      ad.reshape(bwd, (T, config.d_out))], axis=1)


def contextual_repr(sentence, params, config, char_vocab):
    """Per-token contextual vectors for a token-string sentence."""
    if not sentence:
        raise ContractError("empty sentence")
    ids = np.stack([char_id_row(tok, char_vocab, config.encoder.max_word_len)
                    for tok in sentence])
    return contextual_states(ids, params, config).data.copy()


def perplexity(corpus, params, config, vocab, char_vocab, batch_size=32):
    """exp(mean per-direction per-token NLL), directions averaged."""
    corpus = [s for s in corpus if s]
    if not corpus:
        raise ContractError("empty corpus")
    total, count = 0.0, 0
    for batch in lm_batches(corpus, vocab, char_vocab, batch_size,
                            config.encoder.max_word_len, seed=0):
        fwd, bwd, n = bilm_loss_parts(batch, params, config)
        total += float(fwd.data) + float(bwd.data)
        count += n
    return math.exp(total / (2.0 * count))


# training and surgery -----------------------------------------------


def _check_architecture(init_arch, config, n_chars, n_words):
    want = architecture(config, n_chars, n_words)
    mismatched = [k for k in want if init_arch.get(k) != want[k]]
    if mismatched:
        raise TransferError(
            "init checkpoint architecture mismatch on: " + ", ".join(mismatched))


def anchor_penalty(params, anchors, coeff):
    """L2 pull toward the initial (pre-fine-tuning) values."""
    term = None
    for name, ref in anchors.items():
        d = params[name] - ad.constant(ref)
        sq = (d * d).sum()
        term = sq if term is None else term + sq
    return term * coeff


def train_lm(corpus, vocab=None, char_vocab=None, config=None, epochs=1, *,
             batch_size=32, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8,
             clip_norm=5.0, seed=0, init=None, anchor_coeff=0.0, log_fn=None):
    """Adam training of the BiLM; returns a checkpoint with per-epoch loss.

    With `init` (a bilm Checkpoint) this resumes/fine-tunes: vocabularies
    come from the checkpoint and, when anchor_coeff > 0, every non-head
    parameter is L2-anchored to its initial value.
    """
    corpus = [s for s in corpus if s]
    if not corpus:
        raise ContractError("empty corpus")
    provenance = []
    if init is not None:
        vocab = init.word_vocab
        char_vocab = init.char_vocab
        init_config = BiLMConfig.from_dict(init.architecture["config"])
        if config is not None:
            _check_architecture(init.architecture, config, len(char_vocab), len(vocab))
        config = init_config
        params = params_from_tensors(init.tensors)
        provenance = list(init.manifest.get("provenance", []))
        provenance.append({"event": "continue_training", "epochs": epochs})
    else:
        if vocab is None or char_vocab is None or config is None:
            raise ContractError("vocab, char_vocab and config are required without init")
        params = init_bilm_params(config, len(char_vocab), len(vocab), seed)
        provenance = [{"event": "pretrain", "epochs": epochs, "seed": seed}]

    anchors = {}
    if anchor_coeff > 0.0:
        anchors = {name: p.data.copy() for name, p in params.items()
                   if name not in HEAD_PARAMS}

    opt = Adam(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    epoch_losses = []
    for epoch in range(epochs):
        batches = lm_batches(corpus, vocab, char_vocab, batch_size,
                             config.encoder.max_word_len,
                             seed=seed * 100003 + epoch)
        total, count = 0.0, 0
        for batch in batches:
            fwd, bwd, n = bilm_loss_parts(batch, params, config)
            loss = (fwd + bwd) / (2.0 * n)
            total += float(loss.data) * n
            count += n
            if anchors:
                loss = loss + anchor_penalty(params, anchors, anchor_coeff)
            grads = reverse_gradients(loss, params)
            grads, _ = clip_by_global_norm(grads, clip_norm)
            opt.step(params, grads)
        epoch_losses.append(total / count)
        if log_fn:
            log_fn(f"epoch={epoch + 1} lm_train_loss={epoch_losses[-1]:.6f}")

    return Checkpoint.create(
        "bilm", architecture(config, len(char_vocab), len(vocab)),
        tensors_from_params(params), word_vocab=vocab, char_vocab=char_vocab,
        provenance=provenance, metrics={"train_loss": epoch_losses})


def replace_vocab_head(src, target_vocab, seed):
    """Copy all LM weights bit-exactly but re-create the softmax head
    for a new vocabulary (cross-lingual surgery)."""
    missing = [n for n in HEAD_PARAMS if n not in src.tensors]
    if missing or src.architecture.get("kind") != "bilm":
        raise TransferError("source checkpoint lacks BiLM parameters: "
                            + ", ".join(missing))
    config = BiLMConfig.from_dict(src.architecture["config"])
    tensors = {name: arr.copy() for name, arr in src.tensors.items()}
    tensors["lm.head.W"] = ad.seeded_init(
        (len(target_vocab), config.d_out), "glorot", seed)
    tensors["lm.head.b"] = np.zeros(len(target_vocab))
    arch = dict(src.architecture)
    arch["n_words"] = len(target_vocab)
    provenance = list(src.manifest.get("provenance", []))
    provenance.append({"event": "replace_vocab_head",
                       "source": src.digest(),
                       "replaced": list(HEAD_PARAMS),
                       "seed": seed})
    return Checkpoint.create("bilm", arch, tensors, word_vocab=target_vocab,
                             char_vocab=src.char_vocab, provenance=provenance,
                             metrics=dict(src.manifest.get("metrics", {})))
