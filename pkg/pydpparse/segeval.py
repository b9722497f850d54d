"""Token and boundary precision, recall and F-score of segmentations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Collection

from .exceptions import AlignmentError, DomainError
from .text import Corpus, boundary_spans


@dataclass(frozen=True)
class SegEvalCounts:
    """Hit and miss counts; add them up across sentences."""

    token_tp: int = 0
    token_fp: int = 0
    token_fn: int = 0
    boundary_tp: int = 0
    boundary_fp: int = 0
    boundary_fn: int = 0

    def __add__(self, other: SegEvalCounts) -> SegEvalCounts:
        return SegEvalCounts(
            self.token_tp + other.token_tp,
            self.token_fp + other.token_fp,
            self.token_fn + other.token_fn,
            self.boundary_tp + other.boundary_tp,
            self.boundary_fp + other.boundary_fp,
            self.boundary_fn + other.boundary_fn,
        )


@dataclass(frozen=True)
class PRF:
    """Precision, recall and F1."""

    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict[str, float]:
        """Percentages rounded to 2 decimals, plus full-precision fractions."""
        return {
            "p": round(100 * self.precision, 2),
            "r": round(100 * self.recall, 2),
            "f": round(100 * self.f1, 2),
            "p_full": self.precision,
            "r_full": self.recall,
            "f_full": self.f1,
        }


@dataclass(frozen=True)
class SegScores:
    """Token and boundary scores of a corpus."""

    token: PRF
    boundary: PRF
    counts: SegEvalCounts

    def to_json(self) -> dict[str, Any]:
        return {"token": self.token.to_json(), "boundary": self.boundary.to_json()}


def _check(boundaries: Collection[int], length: int, which: str) -> None:
    for b in boundaries:
        if not 0 < b < length:
            raise DomainError(
                f"{which} boundary {b} is not interior to a sentence of length {length}"
            )


def sentence_counts(
    gold: Collection[int], predicted: Collection[int], length: int
) -> SegEvalCounts:
    """Counts hits and misses for one sentence.

    Sentence edges are not boundaries. A predicted token is a hit iff its
    exact span is a gold token span.

    :raise pydpparse.exceptions.DomainError: On a boundary outside
        ``1..length-1``.
    """
    _check(gold, length, "gold")
    _check(predicted, length, "predicted")
    gold_b, pred_b = set(gold), set(predicted)
    gold_spans = set(boundary_spans(sorted(gold_b), length))
    pred_spans = set(boundary_spans(sorted(pred_b), length))
    token_tp = len(gold_spans & pred_spans)
    boundary_tp = len(gold_b & pred_b)
    return SegEvalCounts(
        token_tp=token_tp,
        token_fp=len(pred_spans) - token_tp,
        token_fn=len(gold_spans) - token_tp,
        boundary_tp=boundary_tp,
        boundary_fp=len(pred_b) - boundary_tp,
        boundary_fn=len(gold_b) - boundary_tp,
    )


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Returns (precision, recall, f1).

    Any 0/0 is 0, except that all-zero counts score (1, 1, 1).
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise DomainError("counts must be non-negative")
    if tp == fp == fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def scores_from_counts(counts: SegEvalCounts) -> SegScores:
    """Turns summed counts into token and boundary scores."""
    return SegScores(
        token=PRF(*prf(counts.token_tp, counts.token_fp, counts.token_fn)),
        boundary=PRF(*prf(counts.boundary_tp, counts.boundary_fp, counts.boundary_fn)),
        counts=counts,
    )


def evaluate_corpus(gold: Corpus, predicted: Corpus) -> SegScores:
    """Micro-averaged token and boundary scores.

    Boundaries are read whether or not they are visible, so a stripped gold
    corpus still evaluates against its preserved boundaries.

    :raise pydpparse.exceptions.AlignmentError: When sentence counts or
        lengths differ.
    """
    if len(gold) != len(predicted):
        raise AlignmentError(
            f"gold has {len(gold)} sentences, predicted has {len(predicted)}",
            index=min(len(gold), len(predicted)),
        )
    total = SegEvalCounts()
    for index, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise AlignmentError(
                f"gold has {len(g)} symbols, predicted has {len(p)}", index=index
            )
        total += sentence_counts(g.boundaries, p.boundaries, len(g))
    return scores_from_counts(total)
