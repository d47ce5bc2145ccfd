"""Sentiment Graph F1: tuple-level exact match weighted by token overlap.

A predicted tuple earns fractional true-positive credit against a gold
tuple when their polarities agree and their expressions overlap; the credit
is the mean of the three per-span overlap ratios. Per sentence, predicted
and gold tuples are put in a one-to-one assignment that maximizes total
credit; precision mass uses predicted-span denominators and recall mass
gold-span denominators. All weights are exact rationals so the fast
implementation and the brute-force oracle can be compared for equality.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Literal, Sequence

from scipy.optimize import linear_sum_assignment

from sentigen.codec import OpinionTuple, Polarity

Denominator = Literal["predicted", "gold"]

# Exact assignment search is capped here; larger sentences (unseen in real
# corpora) fall back to a float Hungarian solve.
_EXACT_ASSIGNMENT_LIMIT = 16

_ORACLE_LIMIT = 6


@dataclass(frozen=True)
class GraphTuple:
    """An opinion as token sets; an empty set is an explicitly empty entity."""

    holder: frozenset[int]
    target: frozenset[int]
    expression: frozenset[int]
    polarity: Polarity


@dataclass
class SentGraph:
    sent_id: str
    tuples: list[GraphTuple]


@dataclass
class SentenceScore:
    sent_id: str
    n_predicted: int
    n_gold: int
    weighted_tp_precision: float
    weighted_tp_recall: float
    precision: float
    recall: float
    f1: float


@dataclass
class SGF1Report:
    weighted_tp_precision: float
    weighted_tp_recall: float
    n_predicted: int
    n_gold: int
    precision: float
    recall: float
    f1: float
    per_sentence: list[SentenceScore] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "sentiment_graph_f1": self.f1,
            "n_predicted": self.n_predicted,
            "n_gold": self.n_gold,
            "per_sentence": [
                {
                    "sent_id": s.sent_id,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "n_predicted": s.n_predicted,
                    "n_gold": s.n_gold,
                }
                for s in self.per_sentence
            ],
        }


def span_tokens(span: tuple[int, int], none_prefixed: bool = False) -> frozenset[int]:
    """Token set of an inclusive span, in original (unprefixed) coordinates.

    On a prefixed sentence the prefix token is dropped and the remaining
    indices shift down by one, so the (1, 1) missing-entity span becomes
    the empty set.
    """
    start, end = span
    shift = 1 if none_prefixed else 0
    return frozenset(i - shift for i in range(start, end + 1) if i - shift >= 1)


def graph_tuple(t: OpinionTuple, none_prefixed: bool = False) -> GraphTuple:
    return GraphTuple(
        holder=span_tokens(t.holder, none_prefixed),
        target=span_tokens(t.target, none_prefixed),
        expression=span_tokens(t.expression, none_prefixed),
        polarity=t.polarity,
    )


def graph_from_tuples(
    sent_id: str, tuples: Iterable[OpinionTuple], none_prefixed: bool = False
) -> SentGraph:
    return SentGraph(sent_id, [graph_tuple(t, none_prefixed) for t in tuples])


def span_weight(
    pred_span: frozenset[int] | set[int],
    gold_span: frozenset[int] | set[int],
    denominator: Denominator,
) -> Fraction:
    """Overlap ratio of one span pair; two empty spans count as a full match."""
    if not pred_span and not gold_span:
        return Fraction(1)
    if not pred_span or not gold_span:
        return Fraction(0)
    denom = pred_span if denominator == "predicted" else gold_span
    return Fraction(len(pred_span & gold_span), len(denom))


def matchable(pred: GraphTuple, gold: GraphTuple) -> bool:
    """Gate for any credit: equal polarity and overlapping expressions."""
    if pred.polarity != gold.polarity:
        return False
    if not pred.expression and not gold.expression:
        return True
    return bool(pred.expression & gold.expression)


def tuple_weight(pred: GraphTuple, gold: GraphTuple, denominator: Denominator) -> Fraction:
    """Credit for a pred/gold pair: mean span overlap, zero if unmatchable."""
    if not matchable(pred, gold):
        return Fraction(0)
    total = (
        span_weight(pred.holder, gold.holder, denominator)
        + span_weight(pred.target, gold.target, denominator)
        + span_weight(pred.expression, gold.expression, denominator)
    )
    return total / 3


# A pair's value is (combined weight, precision weight); assignments maximize
# the summed value lexicographically, which pins down both masses even when
# several assignments tie on combined weight.
_PairValue = tuple[Fraction, Fraction]

_ZERO: _PairValue = (Fraction(0), Fraction(0))


def _pair_values(
    pred: Sequence[GraphTuple], gold: Sequence[GraphTuple]
) -> list[list[_PairValue]]:
    values = []
    for p in pred:
        row = []
        for g in gold:
            wp = tuple_weight(p, g, "predicted")
            wr = tuple_weight(p, g, "gold")
            row.append((wp + wr, wp))
        values.append(row)
    return values


def _add(a: _PairValue, b: _PairValue) -> _PairValue:
    return (a[0] + b[0], a[1] + b[1])


def _assign_exact(values: list[list[_PairValue]]) -> _PairValue:
    """Exact maximum assignment value by subset DP over the smaller side."""
    rows = len(values)
    cols = len(values[0]) if rows else 0
    if rows == 0 or cols == 0:
        return _ZERO
    if cols > rows:  # mask the smaller side; pair values are orientation-free
        values = [[values[i][j] for i in range(rows)] for j in range(cols)]
        rows, cols = cols, rows
    best = [_ZERO] * (1 << cols)
    for i in range(rows):
        nxt = list(best)
        for mask in range(1 << cols):
            base = best[mask]
            for j in range(cols):
                bit = 1 << j
                if mask & bit:
                    continue
                cand = _add(base, values[i][j])
                if cand > nxt[mask | bit]:
                    nxt[mask | bit] = cand
        best = nxt
    return max(best)


def _assign_float(values: list[list[_PairValue]]) -> _PairValue:
    """Hungarian fallback on float combined weights for oversized sentences."""
    cost = [[-float(v[0]) for v in row] for row in values]
    rows, cols = linear_sum_assignment(cost)
    total = _ZERO
    for i, j in zip(rows, cols):
        total = _add(total, values[i][j])
    return total


def _sentence_masses(
    pred: Sequence[GraphTuple], gold: Sequence[GraphTuple]
) -> tuple[Fraction, Fraction]:
    values = _pair_values(pred, gold)
    if min(len(pred), len(gold)) > _EXACT_ASSIGNMENT_LIMIT:
        combined, tp_p = _assign_float(values)
    else:
        combined, tp_p = _assign_exact(values)
    return tp_p, combined - tp_p


def _ratio(numerator: Fraction, denominator: int, other_side: int) -> Fraction:
    if denominator:
        return numerator / denominator
    return Fraction(1) if other_side == 0 else Fraction(0)


def _f1(precision: Fraction, recall: Fraction) -> Fraction:
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def _paired_graphs(
    gold: Sequence[SentGraph], pred: Sequence[SentGraph]
) -> list[tuple[SentGraph, SentGraph]]:
    gold_by_id = {g.sent_id: g for g in gold}
    pred_by_id = {p.sent_id: p for p in pred}
    if set(gold_by_id) != set(pred_by_id):
        missing = sorted(set(gold_by_id) ^ set(pred_by_id))
        raise ValueError(f"gold and prediction sent_ids differ, e.g. {missing[:5]}")
    return [(g, pred_by_id[g.sent_id]) for g in gold]


def _build_report(
    pairs: Iterable[tuple[SentGraph, SentGraph, Fraction, Fraction]]
) -> SGF1Report:
    per_sentence = []
    tot_tp_p = Fraction(0)
    tot_tp_r = Fraction(0)
    tot_pred = 0
    tot_gold = 0
    for g, p, tp_p, tp_r in pairs:
        n_pred, n_gold = len(p.tuples), len(g.tuples)
        prec = _ratio(tp_p, n_pred, n_gold)
        rec = _ratio(tp_r, n_gold, n_pred)
        f1 = Fraction(1) if n_pred == 0 and n_gold == 0 else _f1(prec, rec)
        per_sentence.append(
            SentenceScore(
                sent_id=g.sent_id,
                n_predicted=n_pred,
                n_gold=n_gold,
                weighted_tp_precision=float(tp_p),
                weighted_tp_recall=float(tp_r),
                precision=float(prec),
                recall=float(rec),
                f1=float(f1),
            )
        )
        tot_tp_p += tp_p
        tot_tp_r += tp_r
        tot_pred += n_pred
        tot_gold += n_gold
    precision = _ratio(tot_tp_p, tot_pred, tot_gold)
    recall = _ratio(tot_tp_r, tot_gold, tot_pred)
    f1 = Fraction(1) if tot_pred == 0 and tot_gold == 0 else _f1(precision, recall)
    return SGF1Report(
        weighted_tp_precision=float(tot_tp_p),
        weighted_tp_recall=float(tot_tp_r),
        n_predicted=tot_pred,
        n_gold=tot_gold,
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        per_sentence=per_sentence,
    )


def sg_f1(gold: Sequence[SentGraph], pred: Sequence[SentGraph]) -> SGF1Report:
    """Corpus-level Sentiment Graph F1 (micro-averaged over sentences)."""
    rows = []
    for g, p in _paired_graphs(gold, pred):
        tp_p, tp_r = _sentence_masses(p.tuples, g.tuples)
        rows.append((g, p, tp_p, tp_r))
    return _build_report(rows)


def _oracle_masses(
    pred: Sequence[GraphTuple], gold: Sequence[GraphTuple]
) -> tuple[Fraction, Fraction]:
    """Reference assignment by exhaustive enumeration of injective matchings."""
    values = _pair_values(pred, gold)
    small, large = (len(pred), len(gold)) if len(pred) <= len(gold) else (len(gold), len(pred))
    pred_is_small = len(pred) <= len(gold)
    best = _ZERO
    for chosen in itertools.permutations(range(large), small):
        total = _ZERO
        for s, l in enumerate(chosen):
            i, j = (s, l) if pred_is_small else (l, s)
            total = _add(total, values[i][j])
        if total > best:
            best = total
    return best[1], best[0] - best[1]


def oracle_sg_f1(gold: Sequence[SentGraph], pred: Sequence[SentGraph]) -> SGF1Report:
    """Brute-force reference for sg_f1; limited to small sentences."""
    rows = []
    for g, p in _paired_graphs(gold, pred):
        if len(g.tuples) > _ORACLE_LIMIT or len(p.tuples) > _ORACLE_LIMIT:
            raise ValueError(
                f"sentence {g.sent_id!r} exceeds the oracle limit of "
                f"{_ORACLE_LIMIT} tuples per side"
            )
        tp_p, tp_r = _oracle_masses(p.tuples, g.tuples)
        rows.append((g, p, tp_p, tp_r))
    return _build_report(rows)
