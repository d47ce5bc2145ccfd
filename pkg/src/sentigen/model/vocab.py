"""Word-level vocabulary and corpus-to-example conversion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from sentigen import corpus as corpus_mod
from sentigen.codec import (
    IndexSequence,
    canonical_order,
    encode_tuples,
    index_space_for,
)
from sentigen.corpus import OffsetMode, RawDocument, TokenizedSentence
from sentigen.model.network import BOS_ID, EOS_ID, UNK_ID

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"

_RESERVED = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)


class Vocabulary:
    """Deterministic word-type inventory with reserved special ids."""

    def __init__(self, words: Sequence[str] = ()):
        self.tokens: list[str] = list(_RESERVED)
        self._ids: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        for w in words:
            self._add(w)
        assert self._ids[BOS_TOKEN] == BOS_ID
        assert self._ids[EOS_TOKEN] == EOS_ID
        assert self._ids[UNK_TOKEN] == UNK_ID

    def _add(self, word: str) -> None:
        if word not in self._ids:
            self._ids[word] = len(self.tokens)
            self.tokens.append(word)

    @classmethod
    def build(cls, sentences: Iterable[TokenizedSentence]) -> "Vocabulary":
        """Collect word types in first-appearance order (deterministic)."""
        vocab = cls()
        for sent in sentences:
            for tok in sent.tokens:
                vocab._add(tok)
        return vocab

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, word: str) -> int:
        return self._ids.get(word, UNK_ID)

    def encode(self, words: Sequence[str]) -> np.ndarray:
        return np.asarray([self.id_of(w) for w in words], dtype=np.int64)

    def to_list(self) -> list[str]:
        return list(self.tokens)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        if tuple(tokens[:3]) != _RESERVED:
            raise ValueError("vocabulary list does not start with the reserved tokens")
        return cls(tokens[3:])


@dataclass
class TrainExample:
    """One preprocessed sentence: ids for the encoder, gold indices to emit."""

    sent_id: str
    sentence: TokenizedSentence
    token_ids: np.ndarray
    gold: IndexSequence


def build_examples(
    docs: Sequence[RawDocument],
    vocab: Vocabulary,
    offsets: OffsetMode = OffsetMode.BYTES,
) -> list[TrainExample]:
    """Tokenize with the None prefix, align gold spans and encode supervision."""
    examples = []
    for doc in docs:
        sent = corpus_mod.tokenize(doc, add_none_prefix=True)
        tuples = canonical_order(corpus_mod.document_tuples(sent, doc, offsets))
        gold = encode_tuples(tuples, index_space_for(sent))
        examples.append(
            TrainExample(
                sent_id=doc.sent_id,
                sentence=sent,
                token_ids=vocab.encode(sent.tokens),
                gold=gold,
            )
        )
    return examples
