"""Shared-task annotation corpus: parsing, tokenization and span alignment.

Corpora are JSON arrays of sentences; each sentence carries opinion
annotations whose entities (Source, Target, Polar_expression) are given as
phrase lists plus "begin:end" character ranges into the sentence text.
Character offsets may count UTF-8 bytes (default) or code points; all
in-memory token bookkeeping uses code points and conversion happens at the
parse/serialize boundary.
"""

from __future__ import annotations

import json
import random
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from sentigen.codec import OpinionTuple, Polarity

NONE_PREFIX = "None"

_TOKEN_RE = re.compile(r"\S+")

_ENTITY_KEYS = ("Source", "Target", "Polar_expression")


class OffsetMode(str, Enum):
    """How annotation character offsets index into the sentence text."""

    BYTES = "bytes"
    CODEPOINTS = "codepoints"


class CorpusError(ValueError):
    """Base class for corpus reading problems."""


class CorpusFormatError(CorpusError):
    """Structurally malformed input (bad JSON, wrong shapes)."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class CorpusValidationError(CorpusError):
    """Well-formed JSON whose content violates the annotation contract."""

    def __init__(self, message: str, sent_id: str | None = None, entity: str | None = None):
        super().__init__(message)
        self.sent_id = sent_id
        self.entity = entity


class SpanAlignmentWarning(UserWarning):
    """A character range did not line up with token boundaries and was snapped."""


@dataclass
class RawOpinion:
    """One annotated opinion in the shared-task JSON shape."""

    source_phrases: list[str]
    source_offsets: list[tuple[int, int]]
    target_phrases: list[str]
    target_offsets: list[tuple[int, int]]
    expression_phrases: list[str]
    expression_offsets: list[tuple[int, int]]
    polarity: Polarity
    intensity: str | None = None

    def entity(self, key: str) -> tuple[list[str], list[tuple[int, int]]]:
        if key == "Source":
            return self.source_phrases, self.source_offsets
        if key == "Target":
            return self.target_phrases, self.target_offsets
        if key == "Polar_expression":
            return self.expression_phrases, self.expression_offsets
        raise KeyError(key)


@dataclass
class RawDocument:
    sent_id: str
    text: str
    opinions: list[RawOpinion] = field(default_factory=list)

    @property
    def is_null(self) -> bool:
        return not self.opinions


@dataclass
class TokenizedSentence:
    """Whitespace tokens of a sentence, optionally behind a None prefix.

    ``tokens[0]`` is the prefix token when ``none_prefixed``; its entry in
    ``token_char_spans`` is ``None`` because the prefix has no position in
    the original text. All other spans are code-point ranges into
    ``original_text``.
    """

    sent_id: str
    tokens: list[str]
    token_char_spans: list[tuple[int, int] | None]
    none_prefixed: bool
    original_text: str

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


@dataclass
class CorpusStats:
    n_sentences: int
    n_null: int
    null_fraction: float
    n_tuples: int
    token_length_histogram: dict[int, int]


def _byte_to_codepoint(text: str, byte_pos: int, *, sent_id: str | None = None) -> int:
    raw = text.encode("utf-8")
    if not 0 <= byte_pos <= len(raw):
        raise CorpusValidationError(
            f"byte offset {byte_pos} outside text of {len(raw)} bytes", sent_id=sent_id
        )
    try:
        return len(raw[:byte_pos].decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CorpusValidationError(
            f"byte offset {byte_pos} splits a multi-byte character", sent_id=sent_id
        ) from exc


def _codepoint_to_byte(text: str, cp_pos: int) -> int:
    return len(text[:cp_pos].encode("utf-8"))


def to_codepoint_range(
    text: str,
    char_range: tuple[int, int],
    offsets: OffsetMode = OffsetMode.BYTES,
    *,
    sent_id: str | None = None,
) -> tuple[int, int]:
    """Normalize an annotation range to code-point coordinates."""
    begin, end = char_range
    if offsets is OffsetMode.BYTES:
        return (
            _byte_to_codepoint(text, begin, sent_id=sent_id),
            _byte_to_codepoint(text, end, sent_id=sent_id),
        )
    if not 0 <= begin <= len(text) or not 0 <= end <= len(text):
        raise CorpusValidationError(
            f"offset range {char_range} outside text of {len(text)} characters",
            sent_id=sent_id,
        )
    return begin, end


def from_codepoint_range(
    text: str, cp_range: tuple[int, int], offsets: OffsetMode = OffsetMode.BYTES
) -> tuple[int, int]:
    """Convert a code-point range back to the requested offset coordinates."""
    if offsets is OffsetMode.BYTES:
        return _codepoint_to_byte(text, cp_range[0]), _codepoint_to_byte(text, cp_range[1])
    return cp_range


def _parse_offset_string(raw: str, sent_id: str, entity: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+):(\d+)", raw.strip())
    if not m:
        raise CorpusValidationError(
            f"offset {raw!r} is not of the form 'begin:end'", sent_id=sent_id, entity=entity
        )
    begin, end = int(m.group(1)), int(m.group(2))
    if begin >= end:
        raise CorpusValidationError(
            f"offset range {begin}:{end} is empty or reversed", sent_id=sent_id, entity=entity
        )
    return begin, end


def _parse_entity(
    value: object, text: str, sent_id: str, entity: str, offsets: OffsetMode
) -> tuple[list[str], list[tuple[int, int]]]:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(part, list) for part in value)
    ):
        raise CorpusFormatError(
            f"sentence {sent_id!r}: {entity} must be [[phrases...], [offsets...]]"
        )
    phrases, offset_strings = value
    if len(phrases) != len(offset_strings):
        raise CorpusValidationError(
            f"{entity} has {len(phrases)} phrases but {len(offset_strings)} offsets",
            sent_id=sent_id,
            entity=entity,
        )
    ranges: list[tuple[int, int]] = []
    for phrase, raw in zip(phrases, offset_strings):
        begin, end = _parse_offset_string(str(raw), sent_id, entity)
        cp_begin, cp_end = to_codepoint_range(text, (begin, end), offsets, sent_id=sent_id)
        found = text[cp_begin:cp_end]
        if found != phrase:
            raise CorpusValidationError(
                f"{entity} phrase {phrase!r} does not match text substring {found!r} "
                f"at {begin}:{end}",
                sent_id=sent_id,
                entity=entity,
            )
        ranges.append((begin, end))
    return [str(p) for p in phrases], ranges


def parse_corpus(
    data: bytes | str, offsets: OffsetMode = OffsetMode.BYTES
) -> list[RawDocument]:
    """Parse raw file content in the shared-task JSON format.

    Every phrase is checked against the text substring at its offsets;
    mismatches, unknown polarities and malformed shapes raise.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(
            f"malformed JSON at position {exc.pos}: {exc.msg}", position=exc.pos
        ) from exc
    if not isinstance(payload, list):
        raise CorpusFormatError("corpus must be a JSON array of sentence objects")

    docs: list[RawDocument] = []
    seen_ids: set[str] = set()
    for i, item in enumerate(payload):
        if not isinstance(item, dict):
            raise CorpusFormatError(f"entry {i} is not an object")
        try:
            sent_id = str(item["sent_id"])
            text = str(item["text"])
            raw_opinions = item["opinions"]
        except KeyError as exc:
            raise CorpusFormatError(f"entry {i} is missing key {exc.args[0]!r}") from exc
        if not sent_id:
            raise CorpusValidationError(f"entry {i} has an empty sent_id")
        if sent_id in seen_ids:
            raise CorpusValidationError(f"duplicate sent_id {sent_id!r}", sent_id=sent_id)
        seen_ids.add(sent_id)
        if not isinstance(raw_opinions, list):
            raise CorpusFormatError(f"sentence {sent_id!r}: opinions must be a list")

        opinions: list[RawOpinion] = []
        for op in raw_opinions:
            if not isinstance(op, dict):
                raise CorpusFormatError(f"sentence {sent_id!r}: opinion is not an object")
            entities = {}
            for key in _ENTITY_KEYS:
                if key not in op:
                    raise CorpusFormatError(
                        f"sentence {sent_id!r}: opinion is missing {key!r}"
                    )
                entities[key] = _parse_entity(op[key], text, sent_id, key, offsets)
            try:
                polarity = Polarity(op.get("Polarity"))
            except ValueError:
                raise CorpusValidationError(
                    f"unknown polarity {op.get('Polarity')!r}", sent_id=sent_id
                ) from None
            intensity = op.get("Intensity")
            opinions.append(
                RawOpinion(
                    source_phrases=entities["Source"][0],
                    source_offsets=entities["Source"][1],
                    target_phrases=entities["Target"][0],
                    target_offsets=entities["Target"][1],
                    expression_phrases=entities["Polar_expression"][0],
                    expression_offsets=entities["Polar_expression"][1],
                    polarity=polarity,
                    intensity=None if intensity is None else str(intensity),
                )
            )
        docs.append(RawDocument(sent_id=sent_id, text=text, opinions=opinions))
    return docs


def _opinion_to_json(op: RawOpinion) -> dict:
    payload: dict = {}
    for key in _ENTITY_KEYS:
        phrases, ranges = op.entity(key)
        payload[key] = [list(phrases), [f"{b}:{e}" for b, e in ranges]]
    payload["Polarity"] = op.polarity.value
    if op.intensity is not None:
        payload["Intensity"] = op.intensity
    return payload


def serialize_corpus(docs: Iterable[RawDocument]) -> str:
    """Render documents back to the shared-task JSON format."""
    payload = [
        {
            "sent_id": doc.sent_id,
            "text": doc.text,
            "opinions": [_opinion_to_json(op) for op in doc.opinions],
        }
        for doc in docs
    ]
    return json.dumps(payload, ensure_ascii=False, indent=2)


def tokenize(doc: RawDocument, add_none_prefix: bool = False) -> TokenizedSentence:
    """Whitespace-tokenize a document, optionally prepending the None token.

    Token character spans always refer to the original text; the prefix is
    tracked separately and has no span.
    """
    if not doc.text:
        raise ValueError(f"sentence {doc.sent_id!r} has empty text")
    tokens: list[str] = []
    spans: list[tuple[int, int] | None] = []
    for m in _TOKEN_RE.finditer(doc.text):
        tokens.append(m.group())
        spans.append((m.start(), m.end()))
    if add_none_prefix:
        tokens = [NONE_PREFIX] + tokens
        spans = [None] + spans
    return TokenizedSentence(
        sent_id=doc.sent_id,
        tokens=tokens,
        token_char_spans=spans,
        none_prefixed=add_none_prefix,
        original_text=doc.text,
    )


def align_span(
    sent: TokenizedSentence,
    char_range: tuple[int, int],
    offsets: OffsetMode = OffsetMode.BYTES,
) -> tuple[int, int]:
    """Map a character range to the minimal covering token span.

    Returns 1-based inclusive token indices into ``sent.tokens`` (so the
    None prefix, when present, shifts everything by one). Ranges that cut
    into a token snap outward to whole tokens with a warning.
    """
    begin, end = to_codepoint_range(
        sent.original_text, char_range, offsets, sent_id=sent.sent_id
    )
    if begin >= end:
        raise ValueError(f"empty character range {char_range}")
    if begin < 0 or end > len(sent.original_text):
        raise ValueError(
            f"character range {char_range} outside text of length {len(sent.original_text)}"
        )

    covered: list[int] = []
    snapped = False
    for i, span in enumerate(sent.token_char_spans):
        if span is None:
            continue
        tok_begin, tok_end = span
        if tok_begin < end and tok_end > begin:
            covered.append(i)
            if begin > tok_begin or end < tok_end:
                snapped = True
    if not covered:
        raise ValueError(
            f"character range {char_range} covers no token of sentence {sent.sent_id!r}"
        )
    if snapped:
        warnings.warn(
            f"sentence {sent.sent_id!r}: range {char_range} cuts token boundaries; "
            "snapped outward to whole tokens",
            SpanAlignmentWarning,
            stacklevel=2,
        )
    return covered[0] + 1, covered[-1] + 1


def entity_token_span(
    sent: TokenizedSentence,
    phrases: Sequence[str],
    char_ranges: Sequence[tuple[int, int]],
    offsets: OffsetMode = OffsetMode.BYTES,
) -> tuple[int, int]:
    """Token span of one annotated entity, handling missing and fragmented ones.

    A missing entity (no phrases) maps to the (1, 1) span on the None
    prefix; several fragments collapse to their minimal covering span with
    a warning.
    """
    if not phrases:
        if not sent.none_prefixed:
            raise ValueError(
                f"sentence {sent.sent_id!r}: missing entity requires a None-prefixed sentence"
            )
        return (1, 1)
    spans = [align_span(sent, r, offsets) for r in char_ranges]
    if len(spans) > 1:
        warnings.warn(
            f"sentence {sent.sent_id!r}: {len(spans)} fragments collapsed to one "
            "covering token span",
            SpanAlignmentWarning,
            stacklevel=2,
        )
    return min(s for s, _ in spans), max(e for _, e in spans)


def opinion_to_tuple(
    sent: TokenizedSentence, op: RawOpinion, offsets: OffsetMode = OffsetMode.BYTES
) -> OpinionTuple:
    """Convert an annotated opinion into a token-span opinion tuple."""
    return OpinionTuple(
        holder=entity_token_span(sent, op.source_phrases, op.source_offsets, offsets),
        target=entity_token_span(sent, op.target_phrases, op.target_offsets, offsets),
        expression=entity_token_span(
            sent, op.expression_phrases, op.expression_offsets, offsets
        ),
        polarity=op.polarity,
    )


def document_tuples(
    sent: TokenizedSentence, doc: RawDocument, offsets: OffsetMode = OffsetMode.BYTES
) -> list[OpinionTuple]:
    return [opinion_to_tuple(sent, op, offsets) for op in doc.opinions]


def subsample_nulls(
    docs: Sequence[RawDocument], target_null_fraction: float, seed: int
) -> list[RawDocument]:
    """Down-sample null sentences so their share is the largest value <= target.

    Non-null documents are always kept, input order is preserved, and the
    selection is deterministic per seed.
    """
    if not 0.0 <= target_null_fraction <= 1.0:
        raise ValueError("target_null_fraction must be in [0, 1]")
    null_positions = [i for i, d in enumerate(docs) if d.is_null]
    n_null = len(null_positions)
    n_full = len(docs) - n_null
    if target_null_fraction >= 1.0:
        return list(docs)
    # Largest k with k / (n_full + k) <= target.
    max_keep = int(target_null_fraction * n_full / (1.0 - target_null_fraction))
    keep = min(n_null, max_keep)
    if keep == n_null:
        return list(docs)
    chosen = set(random.Random(seed).sample(null_positions, keep))
    return [d for i, d in enumerate(docs) if not d.is_null or i in chosen]


def compute_stats(docs: Sequence[RawDocument]) -> CorpusStats:
    """Corpus size, null share, tuple count and sentence-length histogram."""
    histogram = Counter(len(d.text.split()) for d in docs)
    n_null = sum(1 for d in docs if d.is_null)
    n = len(docs)
    return CorpusStats(
        n_sentences=n,
        n_null=n_null,
        null_fraction=(n_null / n) if n else 0.0,
        n_tuples=sum(len(d.opinions) for d in docs),
        token_length_histogram=dict(sorted(histogram.items())),
    )


def _span_to_entity_json(
    sent: TokenizedSentence, span: tuple[int, int], offsets: OffsetMode
) -> list:
    start, end = span
    if not (1 <= start <= end <= len(sent.tokens)):
        raise ValueError(
            f"token span {span} out of range for sentence {sent.sent_id!r} "
            f"with {len(sent.tokens)} tokens"
        )
    char_spans = [
        s for s in sent.token_char_spans[start - 1 : end] if s is not None
    ]
    if not char_spans:  # the span sits entirely on the None prefix
        return [[], []]
    cp_begin, cp_end = char_spans[0][0], char_spans[-1][1]
    phrase = sent.original_text[cp_begin:cp_end]
    out_begin, out_end = from_codepoint_range(
        sent.original_text, (cp_begin, cp_end), offsets
    )
    return [[phrase], [f"{out_begin}:{out_end}"]]


def write_predictions(
    sents: Sequence[TokenizedSentence],
    tuples: Sequence[Sequence[OpinionTuple]],
    offsets: OffsetMode = OffsetMode.BYTES,
) -> str:
    """Serialize predicted tuples in the shared-task JSON shape.

    Spans on the None prefix serialize as empty entities; offsets are
    reported in original-text coordinates. Intensity is never emitted.
    """
    if len(sents) != len(tuples):
        raise ValueError("one tuple list per sentence is required")
    payload = []
    for sent, sent_tuples in zip(sents, tuples):
        opinions = []
        for t in sent_tuples:
            opinions.append(
                {
                    "Source": _span_to_entity_json(sent, t.holder, offsets),
                    "Target": _span_to_entity_json(sent, t.target, offsets),
                    "Polar_expression": _span_to_entity_json(sent, t.expression, offsets),
                    "Polarity": t.polarity.value,
                }
            )
        payload.append(
            {"sent_id": sent.sent_id, "text": sent.original_text, "opinions": opinions}
        )
    return json.dumps(payload, ensure_ascii=False, indent=2)
