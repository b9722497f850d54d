"""Byte-pair encoding over alphabet symbols.

Base units are the symbols of an :class:`~pydpparse.text.Alphabet`, so a
phoneme label such as ``AH0`` is one unit. Merges never cross a word
boundary.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
import logging
import os
from typing import Iterable, Sequence

from .common import read_lines
from .exceptions import ConfigurationError, DomainError, ParseError, PreconditionError
from .text import (
    END_OF_WORD,
    END_OF_WORD_SURFACE,
    Alphabet,
    AlphabetKind,
    Corpus,
    Sentence,
    word_frequencies,
)

_LOGGER = logging.getLogger(__name__)
_FORMAT_VERSION = "1"
_PROGRESS_EVERY = 1000
_HEADER_KEYS = ("#bpe", "#kind", "#end_of_word", "#target")

Unit = tuple[int, ...]


@dataclass(frozen=True)
class BpeModel:
    """An ordered list of merges over an alphabet."""

    alphabet: Alphabet
    """The base symbols."""

    merges: tuple[tuple[Unit, Unit], ...] = ()
    """Merged (left, right) unit pairs, in learned order."""

    target_size: int = 0
    """The vocabulary size the model was learned towards."""

    end_of_word: bool = False
    """Whether words carry a trailing ``</w>`` pseudo-symbol."""

    vocab: tuple[Unit, ...] = field(init=False)
    """Unit inventory: base symbols first, then merge results in order."""

    _ids: dict[Unit, int] = field(init=False, repr=False, compare=False)
    _ranks: dict[tuple[int, int], tuple[int, int]] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(
            self, "merges", tuple((tuple(l), tuple(r)) for l, r in self.merges)
        )
        vocab: list[Unit] = [(i,) for i in range(self.alphabet.size)]
        if self.end_of_word:
            vocab.append((END_OF_WORD,))
        ids = {u: k for k, u in enumerate(vocab)}
        ranks: dict[tuple[int, int], tuple[int, int]] = {}
        for rank, (left, right) in enumerate(self.merges):
            if left not in ids or right not in ids:
                raise DomainError(f"merge {rank} uses a unit that does not exist yet")
            merged = left + right
            if merged not in ids:
                ids[merged] = len(vocab)
                vocab.append(merged)
            ranks.setdefault((ids[left], ids[right]), (rank, ids[merged]))
        object.__setattr__(self, "vocab", tuple(vocab))
        object.__setattr__(self, "_ids", ids)
        object.__setattr__(self, "_ranks", ranks)

    @property
    def base_size(self) -> int:
        """Number of base units."""
        return self.alphabet.size + int(self.end_of_word)

    def unit_id(self, unit: Sequence[int]) -> int | None:
        """Returns the id of a unit, or None."""
        return self._ids.get(tuple(unit))

    def encode(self, word: Sequence[int], close: bool = True) -> list[int]:
        """Encodes one word into unit ids.

        Merges are applied lowest rank first, each to all of its occurrences
        left to right.

        :param word: Symbol ids of the word.
        :param close: Append the end-of-word unit when the model uses one.
        :raise pydpparse.exceptions.DomainError: On out-of-alphabet symbols.
        """
        size = self.alphabet.size
        for s in word:
            if not 0 <= s < size:
                raise DomainError(f"symbol id {s} is not in the BPE alphabet")
        if not word:
            return []
        units = list(word)
        if self.end_of_word and close:
            units.append(size)
        while len(units) > 1:
            best: tuple[int, int] | None = None
            pair: tuple[int, int] | None = None
            for k in range(len(units) - 1):
                candidate = (units[k], units[k + 1])
                entry = self._ranks.get(candidate)
                if entry is not None and (best is None or entry[0] < best[0]):
                    best, pair = entry, candidate
            if best is None or pair is None:
                break
            units = _merge_pair(units, pair, best[1])
        return units

    def decode(self, units: Iterable[int]) -> list[int]:
        """Returns the symbols behind a unit sequence.

        :raise pydpparse.exceptions.DomainError: On unknown unit ids.
        """
        symbols: list[int] = []
        for u in units:
            if not 0 <= u < len(self.vocab):
                raise DomainError(f"unit id {u} is not in the BPE vocabulary")
            symbols.extend(s for s in self.vocab[u] if s != END_OF_WORD)
        return symbols

    def surface(self, unit_id: int) -> str:
        """Returns the printable form of a unit."""
        return self.alphabet.join(self.vocab[unit_id])


def _merge_pair(units: list[int], pair: tuple[int, int], merged: int) -> list[int]:
    out: list[int] = []
    k = 0
    while k < len(units):
        if k < len(units) - 1 and units[k] == pair[0] and units[k + 1] == pair[1]:
            out.append(merged)
            k += 2
        else:
            out.append(units[k])
            k += 1
    return out


def learn(corpus: Corpus, target: int, end_of_word: bool = False) -> BpeModel:
    """Learns merges until the vocabulary has ``target`` units.

    Learning also stops once no adjacent pair occurs twice. Ties between
    equally frequent pairs go to the smallest (left id, right id).

    :param corpus: A corpus with visible word boundaries.
    :param target: Vocabulary size, base symbols included.
    :raise pydpparse.exceptions.PreconditionError: When the corpus hides its
        boundaries.
    :raise pydpparse.exceptions.DomainError: When ``end_of_word`` is set and
        a word contains the ``</w>`` surface.
    """
    if target < 1:
        raise ConfigurationError("BPE target size must be positive")
    if not corpus.boundaries_visible:
        raise PreconditionError("BPE learning requires word boundaries")

    alphabet = corpus.alphabet
    vocab: list[Unit] = [(i,) for i in range(alphabet.size)]
    if end_of_word:
        vocab.append((END_OF_WORD,))
    ids = {u: k for k, u in enumerate(vocab)}

    words: list[list[int]] = []
    counts: list[int] = []
    for word, count in word_frequencies(corpus).items():
        units = list(word)
        if end_of_word:
            if END_OF_WORD_SURFACE in alphabet.join(word):
                raise DomainError(
                    f"word {alphabet.join(word)!r} contains the end-of-word marker"
                )
            units.append(alphabet.size)
        words.append(units)
        counts.append(count)

    pair_counts: Counter[tuple[int, int]] = Counter()
    where: defaultdict[tuple[int, int], set[int]] = defaultdict(set)
    for w, units in enumerate(words):
        for pair in zip(units, units[1:]):
            pair_counts[pair] += counts[w]
            where[pair].add(w)

    merges: list[tuple[Unit, Unit]] = []
    while len(vocab) < target and pair_counts:
        pair, freq = max(
            pair_counts.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1])
        )
        if freq < 2:
            break
        left, right = vocab[pair[0]], vocab[pair[1]]
        merged = left + right
        merged_id = ids.get(merged)
        if merged_id is None:
            merged_id = ids[merged] = len(vocab)
            vocab.append(merged)
        merges.append((left, right))

        for w in sorted(where.pop(pair)):
            units = words[w]
            new_units = _merge_pair(units, pair, merged_id)
            if len(new_units) == len(units):
                continue
            for old in zip(units, units[1:]):
                pair_counts[old] -= counts[w]
                if pair_counts[old] <= 0:
                    del pair_counts[old]
            for new in zip(new_units, new_units[1:]):
                pair_counts[new] += counts[w]
                where[new].add(w)
            words[w] = new_units
        pair_counts.pop(pair, None)

        if len(merges) % _PROGRESS_EVERY == 0:
            _LOGGER.info("learned %d merges, vocab size %d", len(merges), len(vocab))

    _LOGGER.info("BPE learning done: %d merges, vocab size %d", len(merges), len(vocab))
    return BpeModel(alphabet, tuple(merges), target, end_of_word)


def encode(model: BpeModel, word: Sequence[int]) -> list[int]:
    """Encodes one word; see :meth:`BpeModel.encode`."""
    return model.encode(word)


def decode(model: BpeModel, units: Iterable[int]) -> list[int]:
    """Decodes a unit sequence; see :meth:`BpeModel.decode`."""
    return model.decode(units)


def encode_corpus(model: BpeModel, corpus: Corpus) -> list[list[list[int]]]:
    """Encodes every word of every sentence.

    :raise pydpparse.exceptions.PreconditionError: When the corpus hides its
        boundaries.
    """
    if not corpus.boundaries_visible:
        raise PreconditionError("BPE encoding requires word boundaries")
    return [[model.encode(word) for word in sentence.words()] for sentence in corpus]


def decode_corpus(
    model: BpeModel,
    encoded: Sequence[Sequence[Sequence[int]]],
    source: str | None = None,
) -> Corpus:
    """Rebuilds a corpus from the output of :func:`encode_corpus`."""
    sentences: list[Sentence] = []
    for words in encoded:
        symbols: list[int] = []
        boundaries: list[int] = []
        for word in words:
            if symbols:
                boundaries.append(len(symbols))
            symbols.extend(model.decode(word))
        sentences.append(Sentence(tuple(symbols), tuple(boundaries)))
    return Corpus(tuple(sentences), model.alphabet, source)


def write_bpe(model: BpeModel, path: str | os.PathLike[str]) -> None:
    """Writes the merges as ``left<TAB>right`` lines after a ``#`` header."""
    alphabet = model.alphabet
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#bpe\t{_FORMAT_VERSION}\n")
        f.write(f"#kind\t{alphabet.kind.value}\n")
        f.write(f"#end_of_word\t{int(model.end_of_word)}\n")
        f.write(f"#target\t{model.target_size}\n")
        for surface in alphabet.symbols:
            f.write(f"#symbol\t{surface}\n")
        for left, right in model.merges:
            f.write(f"{alphabet.join(left)}\t{alphabet.join(right)}\n")


def read_bpe(path: str | os.PathLike[str]) -> BpeModel:
    """Reads a model written by :func:`write_bpe`.

    :raise pydpparse.exceptions.ParseError: On malformed lines.
    """
    header: dict[str, str] = {}
    symbols: list[str] = []
    raw_merges: list[tuple[int, str, str]] = []
    for lineno, line in read_lines(path):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(
                "expected two tab-separated fields", path=str(path), line=lineno
            )
        key, value = fields
        if key == "#symbol":
            symbols.append(value)
        elif key in _HEADER_KEYS:
            header[key[1:]] = value
        else:
            raw_merges.append((lineno, key, value))
    if header.get("bpe") != _FORMAT_VERSION:
        raise ParseError("not a BPE model file", path=str(path), line=1)
    try:
        alphabet = Alphabet(tuple(symbols), AlphabetKind.parse(header["kind"]))
        end_of_word = header.get("end_of_word", "0") == "1"
        target = int(header.get("target", "0"))
    except (KeyError, ValueError, DomainError, ConfigurationError) as ex:
        raise ParseError(f"bad header: {ex}", path=str(path), line=1) from ex
    merges: list[tuple[Unit, Unit]] = []
    for lineno, left, right in raw_merges:
        try:
            merges.append(
                (alphabet.split(left, end_of_word), alphabet.split(right, end_of_word))
            )
        except DomainError as ex:
            raise ParseError(str(ex), path=str(path), line=lineno) from ex
    return BpeModel(alphabet, tuple(merges), target, end_of_word)
