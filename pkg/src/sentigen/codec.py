"""Bidirectional conversion between opinion tuples and flat pointer-index sequences.

A sentence with n tokens defines an index space: positions 1..n point at
tokens, n+1 terminates the sequence, and n+2..n+4 name the three polarity
classes. Each opinion tuple becomes a group of seven integers

    [target_start, target_end, expr_start, expr_end, holder_start, holder_end, polarity_class]

and a full prediction is the concatenation of the groups followed by the
end-of-sequence index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from sentigen.corpus import TokenizedSentence

EOS_MARKER = "</s>"

GROUP_SIZE = 7


class Polarity(str, Enum):
    NEUTRAL = "Neutral"
    POSITIVE = "Positive"
    NEGATIVE = "Negative"

    def __str__(self) -> str:
        return self.value


#: Fixed class ordering; with a 6-token sentence this puts the classes at 8, 9, 10.
POLARITY_ORDER: tuple[Polarity, ...] = (
    Polarity.NEUTRAL,
    Polarity.POSITIVE,
    Polarity.NEGATIVE,
)

N_SPECIALS = 1 + len(POLARITY_ORDER)  # EOS plus the polarity classes


@dataclass(frozen=True)
class IndexSpace:
    """Index layout for one sentence: pointers, EOS and polarity classes."""

    n_tokens: int

    def __post_init__(self) -> None:
        if self.n_tokens < 1:
            raise ValueError("index space needs at least one token")

    @property
    def eos_index(self) -> int:
        return self.n_tokens + 1

    @property
    def class_base(self) -> int:
        return self.n_tokens + 2

    @property
    def max_index(self) -> int:
        return self.n_tokens + 1 + len(POLARITY_ORDER)

    def is_pointer(self, y: int) -> bool:
        return 1 <= y <= self.n_tokens

    def is_eos(self, y: int) -> bool:
        return y == self.eos_index

    def is_class(self, y: int) -> bool:
        return self.class_base <= y <= self.max_index

    def class_index(self, polarity: Polarity) -> int:
        return self.class_base + POLARITY_ORDER.index(polarity)

    def polarity_at(self, y: int) -> Polarity:
        if not self.is_class(y):
            raise ValueError(f"index {y} is not a class index in this space")
        return POLARITY_ORDER[y - self.class_base]


@dataclass(frozen=True, order=True)
class OpinionTuple:
    """One opinion: holder, target and expression token spans plus polarity.

    Spans are 1-based inclusive (start, end) pairs over the sentence tokens.
    A missing entity is represented by the span (1, 1) on a None-prefixed
    sentence; the codec itself treats all spans uniformly.
    """

    holder: tuple[int, int]
    target: tuple[int, int]
    expression: tuple[int, int]
    polarity: Polarity

    def spans(self) -> tuple[tuple[int, int], ...]:
        return (self.holder, self.target, self.expression)


@dataclass(frozen=True)
class IndexSequence:
    """A flat index sequence over a given space, EOS-terminated when well formed."""

    indices: tuple[int, ...]
    space: IndexSpace

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Diagnostic:
    """Machine-readable note about a recoverable decoding problem."""

    code: str  # "malformed_group" | "truncated_group" | "duplicate_tuple"
    message: str
    group: int | None = None


def index_space_for(sent: "TokenizedSentence") -> IndexSpace:
    """Index space of a tokenized sentence (including its None prefix, if any)."""
    return IndexSpace(len(sent.tokens))


def _check_span(span: tuple[int, int], space: IndexSpace, what: str) -> None:
    start, end = span
    if not (1 <= start <= end <= space.n_tokens):
        raise ValueError(
            f"{what} span {span} out of range for a {space.n_tokens}-token sentence"
        )


def canonical_order(tuples: Iterable[OpinionTuple]) -> list[OpinionTuple]:
    """Sort tuples into the canonical supervision order.

    Primary key is the expression start, then target start, then holder
    start; remaining fields extend the key so that the order is total and
    encoding is deterministic under input shuffling.
    """
    return sorted(
        tuples,
        key=lambda t: (
            t.expression[0],
            t.target[0],
            t.holder[0],
            t.expression[1],
            t.target[1],
            t.holder[1],
            POLARITY_ORDER.index(t.polarity),
        ),
    )


def encode_tuples(tuples: Sequence[OpinionTuple], space: IndexSpace) -> IndexSequence:
    """Encode tuples, in the given order, as index groups terminated by EOS."""
    indices: list[int] = []
    for t in tuples:
        _check_span(t.target, space, "target")
        _check_span(t.expression, space, "expression")
        _check_span(t.holder, space, "holder")
        indices.extend(t.target)
        indices.extend(t.expression)
        indices.extend(t.holder)
        indices.append(space.class_index(t.polarity))
    indices.append(space.eos_index)
    return IndexSequence(tuple(indices), space)


def _group_problem(group: Sequence[int], space: IndexSpace) -> str | None:
    """First grammar violation inside a 7-index group, or None if well formed."""
    for pos in range(6):
        if not space.is_pointer(group[pos]):
            return f"slot {pos} holds {group[pos]}, expected a pointer in 1..{space.n_tokens}"
    for lo, hi, what in ((0, 1, "target"), (2, 3, "expression"), (4, 5, "holder")):
        if group[lo] > group[hi]:
            return f"{what} span ({group[lo]}, {group[hi]}) has start > end"
    if not space.is_class(group[6]):
        return (
            f"slot 6 holds {group[6]}, expected a class index in "
            f"{space.class_base}..{space.max_index}"
        )
    return None


def _tuple_from_group(group: Sequence[int], space: IndexSpace) -> OpinionTuple:
    return OpinionTuple(
        holder=(group[4], group[5]),
        target=(group[0], group[1]),
        expression=(group[2], group[3]),
        polarity=space.polarity_at(group[6]),
    )


def decode_sequence(
    seq: Sequence[int] | IndexSequence, space: IndexSpace | None = None
) -> tuple[list[OpinionTuple], list[Diagnostic]]:
    """Leniently decode a raw index sequence into opinion tuples.

    Total on arbitrary integer lists: parsing proceeds in groups of seven up
    to the first EOS; malformed or truncated groups and duplicate tuples are
    dropped and reported as diagnostics, never raised.
    """
    if isinstance(seq, IndexSequence):
        if space is None:
            space = seq.space
        indices: Sequence[int] = seq.indices
    else:
        if space is None:
            raise TypeError("space is required when decoding a plain index list")
        indices = seq

    # EOS anywhere truncates; whatever precedes it is parsed in groups of 7.
    body: list[int] = []
    for y in indices:
        if space.is_eos(y):
            break
        body.append(y)

    tuples: list[OpinionTuple] = []
    diagnostics: list[Diagnostic] = []
    seen: set[OpinionTuple] = set()
    n_groups, tail = divmod(len(body), GROUP_SIZE)
    for g in range(n_groups):
        group = body[g * GROUP_SIZE : (g + 1) * GROUP_SIZE]
        problem = _group_problem(group, space)
        if problem is not None:
            diagnostics.append(Diagnostic("malformed_group", problem, group=g))
            continue
        t = _tuple_from_group(group, space)
        if t in seen:
            diagnostics.append(
                Diagnostic("duplicate_tuple", f"tuple {t} repeated", group=g)
            )
            continue
        seen.add(t)
        tuples.append(t)
    if tail:
        diagnostics.append(
            Diagnostic(
                "truncated_group",
                f"{tail} trailing indices do not form a full group",
                group=n_groups,
            )
        )
    return tuples, diagnostics


def index_to_token(y: int, sent: "TokenizedSentence", space: IndexSpace) -> str:
    """Convert one generated index back to its surface form.

    Pointer indices name sentence tokens, the EOS index maps to the EOS
    marker, and class indices map to polarity labels.
    """
    if space.is_pointer(y):
        return sent.tokens[y - 1]
    if space.is_eos(y):
        return EOS_MARKER
    if space.is_class(y):
        return space.polarity_at(y).value
    raise ValueError(f"index {y} outside the space 1..{space.max_index}")


def validate_sequence(
    seq: Sequence[int] | IndexSequence, space: IndexSpace | None = None
) -> tuple[bool, str | None]:
    """Check the full sequence grammar; returns (ok, first violation)."""
    if isinstance(seq, IndexSequence):
        if space is None:
            space = seq.space
        indices: Sequence[int] = seq.indices
    else:
        if space is None:
            raise TypeError("space is required when validating a plain index list")
        indices = seq

    if not indices:
        return False, "empty sequence (missing EOS)"
    for i, y in enumerate(indices[:-1]):
        if space.is_eos(y):
            return False, f"EOS at position {i} before the end of the sequence"
    if not space.is_eos(indices[-1]):
        return False, f"sequence ends with {indices[-1]}, not EOS"
    body = indices[:-1]
    if len(body) % GROUP_SIZE != 0:
        return False, f"{len(body)} indices before EOS, not a multiple of {GROUP_SIZE}"
    for g in range(len(body) // GROUP_SIZE):
        group = body[g * GROUP_SIZE : (g + 1) * GROUP_SIZE]
        problem = _group_problem(group, space)
        if problem is not None:
            return False, f"group {g}: {problem}"
    return True, None
