"""Spot-the-word, acceptability and similarity benchmark runners.

Scores come either from an internal scorer (any ``str -> float`` callable,
such as an :class:`~pydpparse.ngram.NGramModel`) or from files written by
an external model. The file formats are tab-separated:

* pairs: ``id<TAB>category<TAB>positive<TAB>negative[<TAB>key=value...]``
* similarity: ``word_a<TAB>word_b<TAB>score``
* scores: ``id<TAB>side<TAB>score`` with side ``positive`` or ``negative``
* embeddings: a ``layers=<L> width=<D>`` header, then
  ``word<TAB>layer<TAB>position<TAB>d0 d1 ... dD-1`` lines
"""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import logging
import math
import os
from typing import Any, Callable, Container, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import spearmanr

from .common import read_lines
from .exceptions import (
    CoverageError,
    DomainError,
    ParseError,
    PreconditionError,
    UndefinedCorrelationError,
)

_LOGGER = logging.getLogger(__name__)

MAX_HUMAN_SCORE = 10.0
OOV_BIN = "oov"


class Side(str, Enum):
    """The two members of a minimal pair."""

    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class MinimalPair:
    """An acceptable string and its matched unacceptable counterpart."""

    id: str
    """Unique identifier of the pair."""

    category: str
    """Paradigm (acceptability) or frequency/length bin (spot-the-word)."""

    positive: str
    """The real word or grammatical sentence."""

    negative: str
    """The nonword or ungrammatical sentence."""

    metadata: Mapping[str, str] = field(default_factory=dict)
    """Free-form attributes such as ``frequency`` and ``length`` bins."""

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise DomainError(f"pair {self.id}: empty member")
        if self.positive == self.negative:
            raise DomainError(f"pair {self.id}: positive and negative are identical")


ScoreTable = dict[tuple[str, Side], float]
"""Maps (pair id, side) to a score."""


@dataclass(frozen=True)
class SimilarityItem:
    """A word pair with a human similarity judgement on a 0-10 scale."""

    word_a: str
    word_b: str
    human_score: float

    def __post_init__(self):
        if not 0.0 <= self.human_score <= MAX_HUMAN_SCORE:
            raise DomainError(
                f"human score {self.human_score} of ({self.word_a}, {self.word_b}) "
                f"is outside 0..{MAX_HUMAN_SCORE:g}"
            )

    @property
    def key(self) -> tuple[str, str]:
        """The order-insensitive identity of the pair."""
        a, b = sorted((self.word_a, self.word_b))
        return a, b


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-word, per-layer sequences of fixed-width vectors."""

    vectors: Mapping[str, tuple[np.ndarray, ...]]
    """word -> one ``(positions, width)`` array per layer."""

    layers: int
    """Number of layers."""

    width: int
    """Vector width."""

    def __post_init__(self):
        if self.layers < 1:
            raise DomainError("an embedding set needs at least one layer")
        for word, arrays in self.vectors.items():
            if len(arrays) != self.layers:
                raise DomainError(
                    f"{word!r} has {len(arrays)} layers, expected {self.layers}"
                )
            for array in arrays:
                if (
                    array.ndim != 2
                    or array.shape[1] != self.width
                    or not array.shape[0]
                ):
                    raise DomainError(
                        f"{word!r} has vectors of shape {array.shape}, "
                        f"expected (positions, {self.width})"
                    )

    def __contains__(self, word: object) -> bool:
        return word in self.vectors

    def layer(self, word: str, layer: int) -> np.ndarray:
        """Returns the ``(positions, width)`` vectors of a word at a layer."""
        return self.vectors[word][layer]


class PoolingFn(str, Enum):
    """Element-wise reductions across positions, in tie-break order."""

    MEAN = "mean"
    MAX = "max"
    MIN = "min"


def score_pairs(
    pairs: Iterable[MinimalPair], scorer: Callable[[str], float]
) -> ScoreTable:
    """Scores both sides of every pair with an internal scorer."""
    table: ScoreTable = {}
    for pair in pairs:
        table[(pair.id, Side.POSITIVE)] = scorer(pair.positive)
        table[(pair.id, Side.NEGATIVE)] = scorer(pair.negative)
    return table


def _credits(pairs: Sequence[MinimalPair], scores: ScoreTable) -> list[float]:
    missing = [
        f"{pair.id}:{side.value}"
        for pair in pairs
        for side in Side
        if (pair.id, side) not in scores
    ]
    if missing:
        raise CoverageError("scores", missing)
    credits: list[float] = []
    for pair in pairs:
        pos = scores[(pair.id, Side.POSITIVE)]
        neg = scores[(pair.id, Side.NEGATIVE)]
        credits.append(1.0 if pos > neg else 0.5 if pos == neg else 0.0)
    return credits


def pair_accuracy(
    pairs: Sequence[MinimalPair],
    scores: ScoreTable,
    group_by: Callable[[MinimalPair], str] | None = None,
) -> tuple[float, dict[str, float]]:
    """Returns the overall and per-group share of pairs scored positive-higher.

    Ties earn half credit. Groups default to the pair category.

    :raise pydpparse.exceptions.PreconditionError: When there are no pairs.
    :raise pydpparse.exceptions.CoverageError: When a pair side has no score.
    """
    if not pairs:
        raise PreconditionError("no pairs to evaluate")
    credits = _credits(pairs, scores)
    key = group_by or (lambda pair: pair.category)
    groups: defaultdict[str, list[float]] = defaultdict(list)
    for pair, credit in zip(pairs, credits):
        groups[key(pair)].append(credit)
    breakdown = {
        name: sum(values) / len(values) for name, values in sorted(groups.items())
    }
    return sum(credits) / len(credits), breakdown


def wuggy_report(pairs: Sequence[MinimalPair], scores: ScoreTable) -> dict[str, Any]:
    """Spot-the-word accuracy, broken down by category, frequency and length.

    Frequency and length bins are read from the ``frequency`` and ``length``
    metadata of each pair; pairs in the ``oov`` frequency bin are also
    reported as a separate subset.
    """
    overall, by_category = pair_accuracy(pairs, scores)
    report: dict[str, Any] = {
        "accuracy": overall,
        "pairs": len(pairs),
        "by_category": by_category,
    }
    for axis in ("frequency", "length"):
        tagged = [p for p in pairs if axis in p.metadata]
        if tagged:
            _, report[f"by_{axis}"] = pair_accuracy(
                tagged, scores, lambda p, axis=axis: p.metadata[axis]
            )
    oov = [p for p in pairs if p.metadata.get("frequency") == OOV_BIN]
    in_vocab = [p for p in pairs if p.metadata.get("frequency") != OOV_BIN]
    if oov:
        report["oov_accuracy"] = pair_accuracy(oov, scores)[0]
        if in_vocab:
            report["in_vocabulary_accuracy"] = pair_accuracy(in_vocab, scores)[0]
    return report


def blimp_report(pairs: Sequence[MinimalPair], scores: ScoreTable) -> dict[str, Any]:
    """Acceptability accuracy overall and per paradigm."""
    overall, by_category = pair_accuracy(pairs, scores)
    return {"accuracy": overall, "pairs": len(pairs), "by_category": by_category}


def pool(vectors: np.ndarray | Sequence[Sequence[float]], fn: PoolingFn) -> np.ndarray:
    """Reduces position vectors to one vector element-wise.

    :raise pydpparse.exceptions.DomainError: On ragged widths or no vectors.
    """
    try:
        array = np.asarray(vectors, dtype=np.float64)
    except ValueError as ex:
        raise DomainError(f"vectors differ in width: {ex}") from ex
    if array.ndim != 2 or not array.shape[0]:
        raise DomainError("pooling needs at least one vector of equal width")
    match PoolingFn(fn):
        case PoolingFn.MEAN:
            return array.mean(axis=0)
        case PoolingFn.MAX:
            return array.max(axis=0)
        case PoolingFn.MIN:
            return array.min(axis=0)
    raise AssertionError(fn)  # pragma: no cover


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is all zeros.

    :raise pydpparse.exceptions.DomainError: On a width mismatch.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError(f"cannot compare vectors of shapes {a.shape} and {b.shape}")
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0:
        _LOGGER.warning("cosine of a zero vector, using 0")
        return 0.0
    return float(np.clip(np.dot(a, b) / norm, -1.0, 1.0))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman's rho with average ranks for ties.

    :raise pydpparse.exceptions.DomainError: On unequal or too short lists.
    :raise pydpparse.exceptions.UndefinedCorrelationError: When either list
        is constant.
    """
    if len(xs) != len(ys):
        raise DomainError(f"lists differ in length: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise DomainError("spearman needs at least two items")
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        raise UndefinedCorrelationError("rank correlation of a constant list")
    rho, _ = spearmanr(xs, ys)
    return float(rho)


@dataclass(frozen=True)
class PsimiResult:
    """The dev-selected cell of a layer x pooling grid and its test scores."""

    layer: int
    pooling: PoolingFn
    dev_rho: float
    test_rhos: dict[str, float | None]
    grid: dict[tuple[int, PoolingFn], float | None] = field(repr=False)
    """Dev rho of every cell; None where the correlation is undefined."""

    def to_json(self) -> dict[str, Any]:
        return {
            "layer": self.layer,
            "pooling": self.pooling.value,
            "dev_rho": self.dev_rho,
            "test_rhos": dict(self.test_rhos),
            "grid": [
                {"layer": layer, "pooling": fn.value, "dev_rho": rho}
                for (layer, fn), rho in self.grid.items()
            ],
        }


def _similarities(
    items: Sequence[SimilarityItem], embeddings: EmbeddingSet, layer: int, fn: PoolingFn
) -> list[float]:
    pooled: dict[str, np.ndarray] = {}
    sims: list[float] = []
    for item in items:
        for word in (item.word_a, item.word_b):
            if word not in pooled:
                pooled[word] = pool(embeddings.layer(word, layer), fn)
        sims.append(cosine(pooled[item.word_a], pooled[item.word_b]))
    return sims


def _rho(
    items: Sequence[SimilarityItem], embeddings: EmbeddingSet, layer: int, fn: PoolingFn
) -> float | None:
    try:
        return spearman(
            [item.human_score for item in items],
            _similarities(items, embeddings, layer, fn),
        )
    except UndefinedCorrelationError:
        return None


def psimi_eval(
    dev: Sequence[SimilarityItem],
    tests: Mapping[str, Sequence[SimilarityItem]],
    embeddings: EmbeddingSet,
    threads: int = 1,
) -> PsimiResult:
    """Picks the layer and pooling with the best dev rho and reports test rhos there.

    Ties go to the lower layer, then to mean over max over min. Test sets
    play no part in the selection.

    :raise pydpparse.exceptions.CoverageError: When a word has no embedding.
    :raise pydpparse.exceptions.UndefinedCorrelationError: When no cell has
        a defined dev correlation.
    """
    words = {
        w
        for items in (dev, *tests.values())
        for item in items
        for w in (item.word_a, item.word_b)
    }
    missing = [w for w in words if w not in embeddings]
    if missing:
        raise CoverageError("embeddings", missing)

    cells = [(layer, fn) for layer in range(embeddings.layers) for fn in PoolingFn]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_:
            rhos = list(pool_.map(lambda cell: _rho(dev, embeddings, *cell), cells))
    else:
        rhos = [_rho(dev, embeddings, *cell) for cell in cells]
    grid = dict(zip(cells, rhos))

    best: tuple[int, PoolingFn] | None = None
    best_rho = -math.inf
    for cell, rho in grid.items():
        if rho is not None and rho > best_rho:
            best, best_rho = cell, rho
    if best is None:
        raise UndefinedCorrelationError("dev correlation is undefined for every cell")

    layer, fn = best
    _LOGGER.info(
        "pSIMI selected layer %d, %s pooling (dev rho %.4f)", layer, fn.value, best_rho
    )
    test_rhos = {
        name: _rho(items, embeddings, layer, fn) for name, items in tests.items()
    }
    return PsimiResult(layer, fn, best_rho, test_rhos, grid)


def restrict_to(
    items: Iterable[SimilarityItem], vocabulary: Container[str]
) -> list[SimilarityItem]:
    """Keeps the items whose two words are both in ``vocabulary``."""
    return [i for i in items if i.word_a in vocabulary and i.word_b in vocabulary]


def remove_overlap(
    dev: Iterable[SimilarityItem], test: Iterable[SimilarityItem]
) -> list[SimilarityItem]:
    """Drops test items whose word pair, in either order, is in the dev set."""
    seen = {item.key for item in dev}
    return [item for item in test if item.key not in seen]


def _bad_line(
    message: str, path: str | os.PathLike[str], lineno: int
) -> ParseError:
    return ParseError(message, path=str(path), line=lineno)


def _float(value: str, path: str | os.PathLike[str], lineno: int) -> float:
    try:
        result = float(value)
    except ValueError as ex:
        raise _bad_line(f"not a number: {value!r}", path, lineno) from ex
    if not math.isfinite(result):
        raise _bad_line(f"non-finite value {value!r}", path, lineno)
    return result


def _fields(
    line: str, count: int, path: str | os.PathLike[str], lineno: int
) -> list[str]:
    fields = line.split("\t")
    if len(fields) < count:
        raise _bad_line(
            f"expected {count} tab-separated fields, got {len(fields)}", path, lineno
        )
    return fields


def load_pairs(path: str | os.PathLike[str]) -> list[MinimalPair]:
    """Reads a minimal-pair file.

    :raise pydpparse.exceptions.ParseError: On malformed lines or duplicate ids.
    """
    pairs: list[MinimalPair] = []
    seen: set[str] = set()
    for lineno, line in read_lines(path):
        if not line:
            continue
        pair_id, category, positive, negative, *extra = _fields(line, 4, path, lineno)
        if pair_id in seen:
            raise _bad_line(f"duplicate pair id {pair_id!r}", path, lineno)
        seen.add(pair_id)
        metadata: dict[str, str] = {}
        for item in extra:
            key, sep, value = item.partition("=")
            if not sep:
                raise _bad_line(
                    f"metadata {item!r} is not key=value", path, lineno
                )
            metadata[key] = value
        try:
            pairs.append(MinimalPair(pair_id, category, positive, negative, metadata))
        except DomainError as ex:
            raise _bad_line(str(ex), path, lineno) from ex
    return pairs


def write_pairs(pairs: Iterable[MinimalPair], path: str | os.PathLike[str]) -> None:
    """Writes pairs in the format read by :func:`load_pairs`."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pair in pairs:
            fields = [pair.id, pair.category, pair.positive, pair.negative]
            fields.extend(f"{k}={v}" for k, v in pair.metadata.items())
            f.write("\t".join(fields) + "\n")


def load_similarity(
    path: str | os.PathLike[str], scale: float | None = None
) -> list[SimilarityItem]:
    """Reads a similarity file.

    Pairs listing the same two words in either order are averaged into one
    item, kept at the position of their first occurrence.

    :param scale: Maximum of the file's rating scale; scores are mapped to
        0-10 when given.
    :raise pydpparse.exceptions.ParseError: On malformed lines or scores
        outside the scale.
    """
    if scale is not None and not scale > 0:
        raise DomainError("similarity scale must be positive")
    first: dict[tuple[str, str], tuple[str, str]] = {}
    scores: defaultdict[tuple[str, str], list[float]] = defaultdict(list)
    for lineno, line in read_lines(path):
        if not line:
            continue
        word_a, word_b, raw, *_ = _fields(line, 3, path, lineno)
        score = _float(raw, path, lineno)
        if scale is not None:
            score = score * MAX_HUMAN_SCORE / scale
        if not 0.0 <= score <= MAX_HUMAN_SCORE:
            raise _bad_line(f"score {raw} is outside the 0-10 scale", path, lineno)
        key = (min(word_a, word_b), max(word_a, word_b))
        first.setdefault(key, (word_a, word_b))
        scores[key].append(score)
    return [
        SimilarityItem(a, b, sum(scores[key]) / len(scores[key]))
        for key, (a, b) in first.items()
    ]


def write_similarity(
    items: Iterable[SimilarityItem], path: str | os.PathLike[str]
) -> None:
    """Writes items in the format read by :func:`load_similarity`."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for item in items:
            f.write(f"{item.word_a}\t{item.word_b}\t{item.human_score!r}\n")


def load_external_scores(path: str | os.PathLike[str]) -> ScoreTable:
    """Reads a score file; a repeated (id, side) keeps its last score.

    :raise pydpparse.exceptions.ParseError: On malformed lines, or a file
        without scores.
    """
    table: ScoreTable = {}
    for lineno, line in read_lines(path):
        if not line:
            continue
        pair_id, raw_side, raw, *_ = _fields(line, 3, path, lineno)
        try:
            side = Side(raw_side)
        except ValueError as ex:
            raise _bad_line(f"unknown side {raw_side!r}", path, lineno) from ex
        if (pair_id, side) in table:
            _LOGGER.warning(
                "%s:%d: duplicate score for %s:%s, keeping the last",
                path,
                lineno,
                pair_id,
                side.value,
            )
        table[(pair_id, side)] = _float(raw, path, lineno)
    if not table:
        raise ParseError("no scores", path=str(path))
    return table


def write_scores(scores: ScoreTable, path: str | os.PathLike[str]) -> None:
    """Writes a score table in the format read by :func:`load_external_scores`."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for (pair_id, side), score in scores.items():
            f.write(f"{pair_id}\t{side.value}\t{score!r}\n")


def _header(line: str, path: str | os.PathLike[str], lineno: int) -> tuple[int, int]:
    try:
        values = dict(item.split("=", 1) for item in line.split())
        return int(values["layers"]), int(values["width"])
    except (KeyError, ValueError) as ex:
        raise ParseError(
            "expected a 'layers=<L> width=<D>' header", path=str(path), line=lineno
        ) from ex


def load_external_embeddings(path: str | os.PathLike[str]) -> EmbeddingSet:
    """Reads an embedding file.

    A repeated (word, layer, position) keeps its last vector.

    :raise pydpparse.exceptions.ParseError: On malformed lines, a file
        without vectors, or a word whose layers or positions are incomplete.
    """
    layers = width = None
    rows: defaultdict[str, dict[tuple[int, int], list[float]]] = defaultdict(dict)
    for lineno, line in read_lines(path):
        if not line:
            continue
        if layers is None or width is None:
            layers, width = _header(line, path, lineno)
            if layers < 1 or width < 1:
                raise _bad_line("layers and width must be positive", path, lineno)
            continue
        word, raw_layer, raw_position, raw_vector, *_ = _fields(line, 4, path, lineno)
        try:
            layer, position = int(raw_layer), int(raw_position)
        except ValueError as ex:
            raise _bad_line(
                "layer and position must be integers", path, lineno
            ) from ex
        if not 0 <= layer < layers or position < 0:
            raise _bad_line(
                f"layer {layer} or position {position} out of range", path, lineno
            )
        vector = [_float(v, path, lineno) for v in raw_vector.split()]
        if len(vector) != width:
            raise _bad_line(
                f"vector has {len(vector)} values, expected {width}", path, lineno
            )
        if (layer, position) in rows[word]:
            _LOGGER.warning(
                "%s:%d: duplicate vector for %s layer %d position %d, keeping the last",
                path,
                lineno,
                word,
                layer,
                position,
            )
        rows[word][(layer, position)] = vector
    if layers is None or width is None:
        raise ParseError("no embeddings: missing header", path=str(path))
    if not rows:
        raise ParseError("no embeddings", path=str(path))

    vectors: dict[str, tuple[np.ndarray, ...]] = {}
    for word, cells in rows.items():
        arrays: list[np.ndarray] = []
        for layer in range(layers):
            positions = sorted(p for l, p in cells if l == layer)
            if not positions or positions != list(range(len(positions))):
                raise ParseError(
                    f"{word!r} layer {layer} does not have positions 0..n-1",
                    path=str(path),
                )
            stacked = [cells[(layer, p)] for p in positions]
            arrays.append(np.asarray(stacked, dtype=np.float64))
        vectors[word] = tuple(arrays)
    return EmbeddingSet(vectors, layers, width)


def write_embeddings(embeddings: EmbeddingSet, path: str | os.PathLike[str]) -> None:
    """Writes embeddings in the format read by :func:`load_external_embeddings`."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"layers={embeddings.layers} width={embeddings.width}\n")
        for word, arrays in embeddings.vectors.items():
            for layer, array in enumerate(arrays):
                for position, row in enumerate(array):
                    values = " ".join(repr(float(x)) for x in row)
                    f.write(f"{word}\t{layer}\t{position}\t{values}\n")
