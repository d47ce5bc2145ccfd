"""Encoder-decoder over pointer-index sequences.

The encoder maps the (boundary-wrapped) sentence to per-token states; the
decoder consumes the generated index history after converting each index
back to a token or class embedding, and its state is projected to logits over
[pointers 1..n, EOS, polarity classes] by dotting against the encoder
token states and, scaled by a learned mixing scalar, the special
embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sentigen.codec import IndexSequence, IndexSpace, validate_sequence
from sentigen.model.config import ModelConfig
from sentigen.model.layers import (
    DecoderLayer,
    EncoderLayer,
    causal_mask,
    log_softmax,
    sinusoidal_positions,
    softmax,
)
from sentigen.model.params import Initializer, Parameters

#: Reserved vocabulary ids.
BOS_ID = 0
EOS_ID = 1
UNK_ID = 2

#: Rows of the special output-embedding table.
N_SPECIAL_ROWS = 4  # EOS plus three polarity classes


@dataclass
class EncoderState:
    """Per-token encoder representations for one sentence."""

    hidden: np.ndarray  # (n_tokens, d_model)
    token_ids: np.ndarray  # (n_tokens,) vocabulary ids, boundaries excluded

    cache: object = field(default=None, repr=False)

    @property
    def token_count(self) -> int:
        return int(self.token_ids.shape[0])

    @property
    def space(self) -> IndexSpace:
        return IndexSpace(self.token_count)


@dataclass
class DecoderStep:
    """Distribution over the next index given a history."""

    hidden: np.ndarray  # (d_model,)
    logits: np.ndarray  # (n_tokens + 4,)
    probs: np.ndarray  # (n_tokens + 4,)


@dataclass
class LossContext:
    """Forward-pass record required to run the backward pass."""

    loss: float
    scale: float = 1.0
    _enc: EncoderState = field(default=None, repr=False)
    _dec_cache: object = field(default=None, repr=False)
    _probs: np.ndarray = field(default=None, repr=False)
    _targets: np.ndarray = field(default=None, repr=False)


class PointerSeq2Seq:
    """From-scratch transformer with a pointer/class output head."""

    def __init__(self, config: ModelConfig, params: Parameters | None = None,
                 zero_init: bool = False):
        if config.vocab_size < 3:
            raise ValueError("vocab_size must cover the reserved ids")
        self.config = config
        self.params = params if params is not None else Parameters()
        rng = np.random.default_rng(config.seed)
        init = Initializer(rng, zeros=zero_init)

        d = config.d_model
        self.word_emb = self.params.add("embed.word", init.weight(config.vocab_size, d))
        self.special_emb = self.params.add("embed.special", init.weight(N_SPECIAL_ROWS, d))
        self.alpha = self.params.add("head.alpha", init.scalar(0.5))
        self.enc_layers = [
            EncoderLayer(self.params, f"enc.{i}", d, config.n_heads, config.d_ff,
                         config.dropout, init)
            for i in range(config.n_layers_enc)
        ]
        self.dec_layers = [
            DecoderLayer(self.params, f"dec.{i}", d, config.n_heads, config.d_ff,
                         config.dropout, init)
            for i in range(config.n_layers_dec)
        ]
        self.positions = sinusoidal_positions(config.max_len, d)
        self._dropout_rng = np.random.default_rng(config.seed + 1)

    # -- encoder ---------------------------------------------------------

    def encode(self, token_ids, train: bool = False) -> EncoderState:
        """Encode a sentence given as vocabulary ids (without boundary tokens)."""
        token_ids = np.asarray(token_ids, dtype=np.int64)
        if token_ids.ndim != 1 or token_ids.size == 0:
            raise ValueError("token_ids must be a non-empty 1-D sequence")
        if np.any(token_ids < 0) or np.any(token_ids >= self.config.vocab_size):
            raise ValueError("token id outside the vocabulary")
        wrapped = np.concatenate(([BOS_ID], token_ids, [EOS_ID]))
        if wrapped.size > self.config.max_len:
            raise ValueError(
                f"sentence of {token_ids.size} tokens exceeds max_len={self.config.max_len}"
            )
        rng = self._dropout_rng if train else None
        x = self.word_emb.value[wrapped][None, :, :] + self.positions[: wrapped.size]
        caches = []
        for layer in self.enc_layers:
            x, cache = layer.forward(x, rng=rng)
            caches.append(cache)
        return EncoderState(
            hidden=x[0, 1:-1, :],
            token_ids=token_ids,
            cache=(wrapped, caches),
        )

    def _encoder_backward(self, d_tokens: np.ndarray, enc: EncoderState) -> None:
        wrapped, caches = enc.cache
        dx = np.zeros((1, wrapped.size, self.config.d_model))
        dx[0, 1:-1, :] = d_tokens
        for layer, cache in zip(reversed(self.enc_layers), reversed(caches)):
            dx = layer.backward(dx, cache)
        np.add.at(self.word_emb.grad, wrapped, dx[0])

    # -- index history conversion ----------------------------------------

    def _convert_history(self, histories: np.ndarray, enc: EncoderState):
        """Index2Token conversion: map generated indices to embedding rows.

        Returns (word_ids, special_rows, is_special) arrays of the history
        shape; pointer indices resolve to the word id of the token they
        point at, class and EOS indices to special-table rows.
        """
        space = enc.space
        histories = np.asarray(histories, dtype=np.int64)
        if np.any(histories < 1) or np.any(histories > space.max_index):
            raise ValueError(
                f"history index outside 1..{space.max_index} for this sentence"
            )
        is_special = histories > space.n_tokens
        word_ids = np.where(is_special, 0, np.maximum(histories, 1) - 1)
        word_ids = enc.token_ids[word_ids]
        special_rows = np.where(is_special, histories - space.eos_index, 0)
        return word_ids, special_rows, is_special

    def _embed_history(self, histories: np.ndarray, enc: EncoderState):
        b, t = histories.shape
        word_ids, special_rows, is_special = self._convert_history(histories, enc)
        emb = np.empty((b, t + 1, self.config.d_model))
        emb[:, 0, :] = self.word_emb.value[BOS_ID]
        if t:
            emb[:, 1:, :] = np.where(
                is_special[..., None],
                self.special_emb.value[special_rows],
                self.word_emb.value[word_ids],
            )
        return emb, (word_ids, special_rows, is_special)

    def _history_embedding_backward(self, d_emb: np.ndarray, conv_cache) -> None:
        word_ids, special_rows, is_special = conv_cache
        self.word_emb.grad[BOS_ID] += d_emb[:, 0, :].sum(axis=0)
        if d_emb.shape[1] > 1:
            d_rest = d_emb[:, 1:, :]
            pointer_part = np.where(is_special[..., None], 0.0, d_rest)
            special_part = np.where(is_special[..., None], d_rest, 0.0)
            np.add.at(self.word_emb.grad, word_ids.ravel(),
                      pointer_part.reshape(-1, d_emb.shape[-1]))
            np.add.at(self.special_emb.grad, special_rows.ravel(),
                      special_part.reshape(-1, d_emb.shape[-1]))

    # -- decoder -----------------------------------------------------------

    def decode_logits(self, enc: EncoderState, histories, train: bool = False):
        """Logits over the index space at every prefix position.

        ``histories`` has shape (batch, t); the returned logits have shape
        (batch, t + 1, n_tokens + 4) where position j conditions on the
        first j history indices.
        """
        histories = np.atleast_2d(np.asarray(histories, dtype=np.int64))
        rng = self._dropout_rng if train else None
        if histories.shape[1] + 1 > self.config.max_len:
            raise ValueError("decoder history exceeds max_len")
        emb, conv_cache = self._embed_history(histories, enc)
        x = emb + self.positions[: emb.shape[1]]
        mask = causal_mask(x.shape[1])
        enc_batch = enc.hidden[None, :, :]
        caches = []
        for layer in self.dec_layers:
            x, cache = layer.forward(x, enc_batch, mask, rng=rng)
            caches.append(cache)
        hidden = x
        ptr_logits = np.einsum("btd,nd->btn", hidden, enc.hidden)
        special_logits = float(self.alpha.value) * np.einsum(
            "btd,kd->btk", hidden, self.special_emb.value
        )
        logits = np.concatenate([ptr_logits, special_logits], axis=-1)
        cache = (conv_cache, caches, hidden, enc)
        return logits, cache

    def _decoder_backward(self, d_logits: np.ndarray, cache) -> None:
        conv_cache, layer_caches, hidden, enc = cache
        n = enc.token_count
        d_ptr = d_logits[..., :n]
        d_special = d_logits[..., n:]
        special_scores = np.einsum("btd,kd->btk", hidden, self.special_emb.value)
        alpha = float(self.alpha.value)
        self.alpha.grad += np.sum(d_special * special_scores)
        d_hidden = np.einsum("btn,nd->btd", d_ptr, enc.hidden)
        d_hidden += alpha * np.einsum("btk,kd->btd", d_special, self.special_emb.value)
        self.special_emb.grad += alpha * np.einsum(
            "btk,btd->kd", d_special, hidden
        )
        d_enc_tokens = np.einsum("btn,btd->nd", d_ptr, hidden)

        dx = d_hidden
        for layer, layer_cache in zip(reversed(self.dec_layers), reversed(layer_caches)):
            dx, d_enc = layer.backward(dx, layer_cache)
            d_enc_tokens += d_enc[0]
        self._history_embedding_backward(dx, conv_cache)
        self._encoder_backward(d_enc_tokens, enc)

    def decoder_step(self, enc: EncoderState, history) -> DecoderStep:
        """Next-index distribution after a (possibly empty) history prefix."""
        history = np.asarray(list(history), dtype=np.int64).reshape(1, -1)
        logits, cache = self.decode_logits(enc, history)
        last = logits[0, -1, :]
        return DecoderStep(hidden=cache[2][0, -1, :], logits=last, probs=softmax(last))

    def step_logits(self, enc: EncoderState, histories) -> np.ndarray:
        """Next-position logits for a batch of equal-length histories."""
        logits, _ = self.decode_logits(enc, histories)
        return logits[:, -1, :]

    # -- training --------------------------------------------------------

    def sequence_nll(self, token_ids, gold: IndexSequence, train: bool = False) -> LossContext:
        """Teacher-forced negative log likelihood of a gold index sequence."""
        enc = self.encode(token_ids, train=train)
        space = enc.space
        if gold.space.n_tokens != space.n_tokens:
            raise ValueError("gold sequence built for a different sentence length")
        ok, violation = validate_sequence(gold)
        if not ok:
            raise ValueError(f"invalid gold sequence: {violation}")
        targets = np.asarray(gold.indices, dtype=np.int64)
        history = targets[:-1].reshape(1, -1)
        logits, cache = self.decode_logits(enc, history, train=train)
        log_probs = log_softmax(logits[0])
        picked = log_probs[np.arange(targets.size), targets - 1]
        loss = float(-picked.sum())
        return LossContext(
            loss=loss,
            _enc=enc,
            _dec_cache=cache,
            _probs=np.exp(log_probs),
            _targets=targets,
        )

    def backward(self, ctx: LossContext, scale: float = 1.0) -> None:
        """Accumulate exact gradients of the recorded loss into the parameters."""
        probs = ctx._probs
        targets = ctx._targets
        d_logits = probs.copy()
        d_logits[np.arange(targets.size), targets - 1] -= 1.0
        d_logits *= scale
        self._decoder_backward(d_logits[None, :, :], ctx._dec_cache)
