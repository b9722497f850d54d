"""Corpora, symbol alphabets, word lexicons and tokenization modes."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import os
from typing import TYPE_CHECKING, Any, Iterable, Iterator, Sequence

from .common import read_lines
from .exceptions import ConfigurationError, DomainError, ParseError, PreconditionError

if TYPE_CHECKING:  # pragma: no cover
    from .bpe import BpeModel

_LOGGER = logging.getLogger(__name__)

EOS = "<EOS>"
UNK = "<UNK>"
SPACE = "<SPACE>"
RESERVED_MARKERS = (EOS, UNK, SPACE)
DEFAULT_BOUNDARY_MARKER = "|"
DEFAULT_WORD_CAP = 40_000
DEFAULT_FALLBACK_CAP = 20_000
END_OF_WORD = -1
"""Pseudo-symbol id closing a word when BPE runs with end-of-word units."""

END_OF_WORD_SURFACE = "</w>"


class AlphabetKind(str, Enum):
    """Kinds of atomic symbols a corpus can be made of."""

    CHARACTER = "character"
    PHONEME = "phoneme"

    @classmethod
    def parse(cls, value: str | AlphabetKind) -> AlphabetKind:
        """Accepts ``char``/``character`` and ``phone``/``phoneme``."""
        if isinstance(value, AlphabetKind):
            return value
        match value.lower():
            case "char" | "character":
                return cls.CHARACTER
            case "phone" | "phoneme":
                return cls.PHONEME
        raise ConfigurationError(f"unknown alphabet kind: {value!r}")


@dataclass(frozen=True)
class Symbol:
    """An atomic unit of a corpus."""

    id: int
    """Index of the symbol in its Alphabet."""

    surface: str
    """One character, or one phoneme label such as ``AH0``."""


@dataclass(frozen=True)
class Alphabet:
    """The ordered inventory of symbols observed in a corpus."""

    symbols: tuple[str, ...]
    """Unique symbol surfaces; a symbol's id is its position."""

    kind: AlphabetKind = AlphabetKind.CHARACTER
    """Whether symbols are characters or phoneme labels."""

    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "kind", AlphabetKind.parse(self.kind))
        index: dict[str, int] = {}
        for surface in self.symbols:
            _check_surface(surface, self.kind)
            if surface in index:
                raise DomainError(f"duplicate symbol {surface!r}")
            index[surface] = len(index)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_surfaces(
        cls, surfaces: Iterable[str], kind: AlphabetKind | str
    ) -> Alphabet:
        """Creates an Alphabet in first-occurrence order of the given surfaces."""
        return cls(tuple(dict.fromkeys(surfaces)), AlphabetKind.parse(kind))

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def size(self) -> int:
        """Number of symbols."""
        return len(self.symbols)

    def symbol(self, symbol_id: int) -> Symbol:
        """Returns the Symbol with the given id."""
        if not 0 <= symbol_id < len(self.symbols):
            raise DomainError(f"symbol id {symbol_id} out of range")
        return Symbol(symbol_id, self.symbols[symbol_id])

    def get(self, surface: str) -> int | None:
        """Returns the id of a surface, or None if it is not in the alphabet."""
        return self._index.get(surface)

    def id_of(self, surface: str) -> int:
        """Returns the id of a surface.

        :raise pydpparse.exceptions.DomainError: When the surface is unknown.
        """
        symbol_id = self._index.get(surface)
        if symbol_id is None:
            raise DomainError(f"symbol {surface!r} not in alphabet")
        return symbol_id

    @property
    def separator(self) -> str:
        """String placed between symbols when rendering a symbol sequence."""
        return "" if self.kind is AlphabetKind.CHARACTER else " "

    def join(self, ids: Iterable[int]) -> str:
        """Renders a symbol sequence as a single string."""
        return self.separator.join(
            END_OF_WORD_SURFACE if i == END_OF_WORD else self.symbols[i] for i in ids
        )

    def split(self, text: str, end_of_word: bool = False) -> tuple[int, ...]:
        """Inverse of :meth:`join`.

        A trailing ``</w>`` is read as :data:`END_OF_WORD` only when
        ``end_of_word`` is set; otherwise it is read as ordinary symbols.

        :raise pydpparse.exceptions.DomainError: On unknown symbols.
        """
        ids: list[int] = []
        if end_of_word and text.endswith(END_OF_WORD_SURFACE):
            text = text[: -len(END_OF_WORD_SURFACE)].rstrip(" ")
            return self.split(text) + (END_OF_WORD,)
        if not text:
            return ()
        if self.kind is AlphabetKind.CHARACTER:
            surfaces = list(text)
        else:
            surfaces = text.split(" ")
        for surface in surfaces:
            ids.append(self.id_of(surface))
        return tuple(ids)

    def to_json(self) -> dict[str, Any]:
        """Returns a JSON dict of this Alphabet."""
        return {"kind": self.kind.value, "symbols": list(self.symbols)}

    @classmethod
    def from_json(cls, json: dict[str, Any]) -> Alphabet:
        """Creates an Alphabet from a JSON dict."""
        return cls(tuple(json["symbols"]), AlphabetKind.parse(json["kind"]))


def _check_surface(surface: str, kind: AlphabetKind) -> None:
    if not surface:
        raise DomainError("empty symbol")
    if surface in RESERVED_MARKERS or surface == END_OF_WORD_SURFACE:
        raise DomainError(f"reserved marker {surface!r} used as a symbol")
    if any(c.isspace() for c in surface):
        raise DomainError(f"symbol {surface!r} contains whitespace")
    if kind is AlphabetKind.CHARACTER and len(surface) != 1:
        raise DomainError(f"character symbol {surface!r} is not one code point")


@dataclass(frozen=True)
class Sentence:
    """A sequence of symbol ids with optional word boundaries.

    Boundary position ``k`` separates symbol ``k-1`` from symbol ``k``.
    """

    symbols: tuple[int, ...]
    """Symbol ids in the sentence's alphabet."""

    boundaries: tuple[int, ...] = ()
    """Sorted interior word boundary positions.

    Gold when read from a reference transcription, predicted when produced
    by a segmenter.
    """

    boundaries_visible: bool = True
    """Whether models may see the boundaries.

    Stripped sentences keep their boundaries for evaluation only.
    """

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        boundaries = tuple(self.boundaries)
        object.__setattr__(self, "boundaries", boundaries)
        prev = 0
        for b in boundaries:
            if b <= prev or b >= len(self.symbols):
                raise DomainError(
                    f"boundaries {boundaries} are not sorted interior positions "
                    f"of a sentence of length {len(self.symbols)}"
                )
            prev = b

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def visible_boundaries(self) -> tuple[int, ...]:
        """Boundaries a model is allowed to use."""
        return self.boundaries if self.boundaries_visible else ()

    def spans(self, boundaries: Sequence[int] | None = None) -> list[tuple[int, int]]:
        """Returns the ``[start, end)`` spans cut by the given boundaries.

        Defaults to the visible boundaries.
        """
        if boundaries is None:
            boundaries = self.visible_boundaries
        return boundary_spans(boundaries, len(self.symbols))

    def words(self) -> list[tuple[int, ...]]:
        """Returns the symbol sequences of the words cut by visible boundaries."""
        return [self.symbols[i:j] for i, j in self.spans()]

    def stripped(self) -> Sentence:
        """Returns this sentence with boundaries hidden from models."""
        if not self.boundaries_visible:
            return self
        return replace(self, boundaries_visible=False)

    def attached(self) -> Sentence:
        """Returns this sentence with its preserved boundaries visible again."""
        if self.boundaries_visible:
            return self
        return replace(self, boundaries_visible=True)

    def with_boundaries(self, boundaries: Iterable[int]) -> Sentence:
        """Returns a copy carrying the given (visible) boundaries."""
        return Sentence(self.symbols, tuple(sorted(set(boundaries))), True)


def boundary_spans(boundaries: Sequence[int], length: int) -> list[tuple[int, int]]:
    """Returns the spans of a sentence of ``length`` cut at ``boundaries``."""
    cuts = [0, *boundaries, length]
    return [(cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1)]


@dataclass(frozen=True)
class Corpus:
    """A list of sentences over one alphabet."""

    sentences: tuple[Sentence, ...]
    """The sentences, in file order."""

    alphabet: Alphabet
    """The symbol inventory."""

    source: str | None = None
    """Path the corpus was read from, if any."""

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        size = self.alphabet.size
        for k, sentence in enumerate(self.sentences):
            if sentence.symbols and (
                max(sentence.symbols) >= size or min(sentence.symbols) < 0
            ):
                raise DomainError(f"sentence {k} uses a symbol id outside the alphabet")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    @property
    def sentence_count(self) -> int:
        """Number of sentences."""
        return len(self.sentences)

    @property
    def symbol_count(self) -> int:
        """Total number of symbols."""
        return sum(len(s) for s in self.sentences)

    @property
    def boundaries_visible(self) -> bool:
        """True when every sentence exposes its boundaries to models."""
        return all(s.boundaries_visible for s in self.sentences)

    @property
    def metadata(self) -> dict[str, Any]:
        """Source path, symbol and sentence counts."""
        return {
            "source": self.source,
            "kind": self.alphabet.kind.value,
            "symbols": self.symbol_count,
            "sentences": self.sentence_count,
            "alphabet_size": self.alphabet.size,
            "boundaries_visible": self.boundaries_visible,
        }

    def with_sentences(self, sentences: Iterable[Sentence]) -> Corpus:
        """Returns a corpus over the same alphabet with new sentences."""
        return Corpus(tuple(sentences), self.alphabet, self.source)


def split_text(
    text: str, kind: AlphabetKind, boundary_marker: str = DEFAULT_BOUNDARY_MARKER
) -> list[list[str]]:
    """Splits one line of text into words of symbol surfaces.

    :raise ValueError: When the line is malformed.
    """
    if kind is AlphabetKind.CHARACTER:
        words = text.split(" ")
        if any(not w for w in words):
            raise ValueError("empty token (leading, trailing or repeated space)")
        for word in words:
            for c in word:
                if c.isspace():
                    raise ValueError(f"unexpected whitespace character {c!r}")
        return [list(w) for w in words]

    tokens = text.split(" ")
    if any(not t for t in tokens):
        raise ValueError("empty token (leading, trailing or repeated space)")
    if tokens[0] == boundary_marker or tokens[-1] == boundary_marker:
        raise ValueError("boundary marker at sentence edge")
    result: list[list[str]] = [[]]
    for token in tokens:
        if token == boundary_marker:
            if not result[-1]:
                raise ValueError("repeated boundary marker")
            result.append([])
            continue
        if token in RESERVED_MARKERS:
            raise ValueError(f"reserved marker {token!r} in input")
        if any(c.isspace() for c in token):
            raise ValueError(f"unexpected whitespace in {token!r}")
        result[-1].append(token)
    return result


def load_corpus(
    path: str | os.PathLike[str],
    kind: AlphabetKind | str,
    boundary_marker: str = DEFAULT_BOUNDARY_MARKER,
) -> Corpus:
    """Reads a corpus with one sentence per line.

    Character corpora use spaces as word boundaries. Phoneme corpora use
    space-separated labels with ``boundary_marker`` between words. Blank
    lines are skipped.

    :raise pydpparse.exceptions.ParseError: On a malformed line.
    :raise pydpparse.exceptions.CorpusReadError: When the file cannot be read.
    """
    kind = AlphabetKind.parse(kind)
    index: dict[str, int] = {}
    sentences: list[Sentence] = []
    for lineno, line in read_lines(path):
        if not line:
            continue
        try:
            words = split_text(line, kind, boundary_marker)
        except ValueError as ex:
            raise ParseError(str(ex), path=str(path), line=lineno) from ex
        symbols: list[int] = []
        boundaries: list[int] = []
        for word in words:
            if symbols:
                boundaries.append(len(symbols))
            for surface in word:
                symbol_id = index.get(surface)
                if symbol_id is None:
                    symbol_id = index[surface] = len(index)
                symbols.append(symbol_id)
        sentences.append(Sentence(tuple(symbols), tuple(boundaries)))
    alphabet = Alphabet(tuple(index), kind)
    corpus = Corpus(tuple(sentences), alphabet, str(path))
    _LOGGER.info(
        "loaded %s: %d sentences, %d symbols, %d symbol types",
        path,
        corpus.sentence_count,
        corpus.symbol_count,
        alphabet.size,
    )
    return corpus


def format_sentence(
    sentence: Sentence,
    alphabet: Alphabet,
    boundary_marker: str = DEFAULT_BOUNDARY_MARKER,
) -> str:
    """Renders a sentence in the corpus file format using visible boundaries."""
    words = [alphabet.join(w) for w in sentence.words()]
    if alphabet.kind is AlphabetKind.CHARACTER:
        return " ".join(words)
    return f" {boundary_marker} ".join(words)


def write_corpus(
    corpus: Corpus,
    path: str | os.PathLike[str],
    boundary_marker: str = DEFAULT_BOUNDARY_MARKER,
) -> None:
    """Writes a corpus in the format read by :func:`load_corpus`."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sentence in corpus:
            f.write(format_sentence(sentence, corpus.alphabet, boundary_marker))
            f.write("\n")


def strip_boundaries(corpus: Corpus) -> Corpus:
    """Hides word boundaries from models.

    Boundaries stay on every sentence for evaluation. Stripping an already
    stripped corpus returns it unchanged.
    """
    if not any(s.boundaries_visible for s in corpus):
        return corpus
    return corpus.with_sentences(s.stripped() for s in corpus)


def attach_boundaries(corpus: Corpus) -> Corpus:
    """Makes preserved boundaries visible again; inverse of :func:`strip_boundaries`."""
    if corpus.boundaries_visible:
        return corpus
    return corpus.with_sentences(s.attached() for s in corpus)


def word_frequencies(corpus: Corpus) -> Counter[tuple[int, ...]]:
    """Counts word types, in first-occurrence order.

    :raise pydpparse.exceptions.PreconditionError: When the corpus hides
        its boundaries.
    """
    if not corpus.boundaries_visible:
        raise PreconditionError("word statistics require visible word boundaries")
    counts: Counter[tuple[int, ...]] = Counter()
    for sentence in corpus:
        counts.update(sentence.words())
    return counts


@dataclass(frozen=True)
class WordLexicon:
    """A frequency-ranked, capped list of word types."""

    entries: tuple[tuple[tuple[int, ...], int], ...]
    """(word, count) pairs by descending count, ties in first-occurrence order."""

    cap: int
    """Maximum number of entries."""

    has_unk: bool = True
    """Whether out-of-lexicon words map to the reserved ``<UNK>`` unit."""

    _ranks: dict[tuple[int, ...], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.cap < 1:
            raise ConfigurationError("lexicon cap must be positive")
        if len(self.entries) > self.cap:
            raise DomainError("lexicon is larger than its cap")
        counts = [c for _, c in self.entries]
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise DomainError("lexicon entries are not sorted by descending count")
        object.__setattr__(
            self, "_ranks", {w: rank for rank, (w, _) in enumerate(self.entries)}
        )

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: object) -> bool:
        return word in self._ranks

    @property
    def words(self) -> list[tuple[int, ...]]:
        """Words in rank order."""
        return [w for w, _ in self.entries]

    def rank(self, word: Sequence[int]) -> int | None:
        """Returns the 0-based rank of a word, or None when it is out of lexicon."""
        return self._ranks.get(tuple(word))

    def write_tsv(self, path: str | os.PathLike[str], alphabet: Alphabet) -> None:
        """Writes ``surface<TAB>count`` lines in rank order."""
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for word, count in self.entries:
                f.write(f"{alphabet.join(word)}\t{count}\n")

    @classmethod
    def read_tsv(
        cls,
        path: str | os.PathLike[str],
        alphabet: Alphabet,
        cap: int | None = None,
    ) -> WordLexicon:
        """Reads a lexicon written by :meth:`write_tsv`."""
        entries: list[tuple[tuple[int, ...], int]] = []
        for lineno, line in read_lines(path):
            if not line:
                continue
            try:
                surface, count = line.split("\t")
                entries.append((alphabet.split(surface), int(count)))
            except (ValueError, DomainError) as ex:
                raise ParseError(str(ex), path=str(path), line=lineno) from ex
        return cls(tuple(entries), cap or max(len(entries), 1))


def build_word_lexicon(corpus: Corpus, cap: int) -> WordLexicon:
    """Returns the ``cap`` most frequent word types of a corpus.

    Ties are broken by first occurrence.

    :raise pydpparse.exceptions.PreconditionError: When the corpus hides its
        boundaries.
    """
    if cap < 1:
        raise ConfigurationError("lexicon cap must be positive")
    counts = word_frequencies(corpus)
    # sorted() is stable, so equal counts keep first-occurrence order.
    ranked = sorted(counts.items(), key=lambda item: -item[1])[:cap]
    return WordLexicon(tuple(ranked), cap)


class ModeKind(str, Enum):
    """Units a tokenizer maps sentences to."""

    CHAR = "char"
    PHONE = "phone"
    WORD = "word"
    WORD_FALLBACK = "word-fallback"
    BPE = "bpe"


@dataclass(frozen=True)
class TokenizationMode:
    """How a sentence is turned into model units."""

    kind: ModeKind
    """The unit type."""

    cap: int | None = None
    """Lexicon size for the word modes."""

    keep_space_marker: bool = False
    """Emit ``<SPACE>`` between words in the symbol modes."""

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if self.kind in (ModeKind.WORD, ModeKind.WORD_FALLBACK):
            if self.cap is None:
                default = (
                    DEFAULT_WORD_CAP
                    if self.kind is ModeKind.WORD
                    else DEFAULT_FALLBACK_CAP
                )
                object.__setattr__(self, "cap", default)
            elif self.cap < 1:
                raise ConfigurationError("lexicon cap must be positive")
        elif self.cap is not None:
            raise ConfigurationError(f"mode {self.kind.value} takes no lexicon cap")

    @classmethod
    def char(cls, keep_space_marker: bool = False) -> TokenizationMode:
        return cls(ModeKind.CHAR, keep_space_marker=keep_space_marker)

    @classmethod
    def phone(cls, keep_space_marker: bool = False) -> TokenizationMode:
        return cls(ModeKind.PHONE, keep_space_marker=keep_space_marker)

    @classmethod
    def word(cls, cap: int = DEFAULT_WORD_CAP) -> TokenizationMode:
        return cls(ModeKind.WORD, cap)

    @classmethod
    def word_fallback(cls, cap: int = DEFAULT_FALLBACK_CAP) -> TokenizationMode:
        return cls(ModeKind.WORD_FALLBACK, cap)

    @classmethod
    def bpe(cls) -> TokenizationMode:
        return cls(ModeKind.BPE)

    @property
    def needs_boundaries(self) -> bool:
        """True for modes that cannot work without word boundaries."""
        return self.kind in (ModeKind.WORD, ModeKind.WORD_FALLBACK, ModeKind.BPE)

    @property
    def is_symbol_mode(self) -> bool:
        """True for the one-unit-per-symbol modes."""
        return self.kind in (ModeKind.CHAR, ModeKind.PHONE)

    def to_json(self) -> dict[str, Any]:
        """Returns a JSON dict of this mode."""
        return {
            "kind": self.kind.value,
            "cap": self.cap,
            "keep_space_marker": self.keep_space_marker,
        }

    @classmethod
    def from_json(cls, json: dict[str, Any]) -> TokenizationMode:
        """Creates a mode from a JSON dict."""
        return cls(
            ModeKind(json["kind"]),
            json.get("cap"),
            bool(json.get("keep_space_marker", False)),
        )


@dataclass(frozen=True)
class UnitVocab:
    """Unit inventory of a tokenizer.

    Ids ``0..S-1`` are the alphabet's symbols, ``S``, ``S+1`` and ``S+2`` are
    ``<EOS>``, ``<UNK>`` and ``<SPACE>``, and the remaining ids are multi-symbol
    units (lexicon words or merged BPE units).
    """

    alphabet: Alphabet
    units: tuple[tuple[int, ...], ...] = ()

    _index: dict[tuple[int, ...], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(tuple(u) for u in self.units))
        offset = self.alphabet.size + len(RESERVED_MARKERS)
        index: dict[tuple[int, ...], int] = {}
        for k, unit in enumerate(self.units):
            index.setdefault(unit, offset + k)
        object.__setattr__(self, "_index", index)

    @property
    def eos(self) -> int:
        return self.alphabet.size

    @property
    def unk(self) -> int:
        return self.alphabet.size + 1

    @property
    def space(self) -> int:
        return self.alphabet.size + 2

    def __len__(self) -> int:
        return self.alphabet.size + len(RESERVED_MARKERS) + len(self.units)

    @property
    def size(self) -> int:
        return len(self)

    def unit_id(self, unit: Sequence[int]) -> int | None:
        """Returns the id of a multi-symbol unit, if it is in the vocabulary."""
        return self._index.get(tuple(unit))

    def is_reserved(self, unit_id: int) -> bool:
        size = self.alphabet.size
        return size <= unit_id < size + len(RESERVED_MARKERS)

    def expand(self, unit_id: int) -> tuple[int, ...]:
        """Returns the symbols a unit stands for; reserved units expand to nothing.

        :raise pydpparse.exceptions.DomainError: On ids outside the vocabulary.
        """
        size = self.alphabet.size
        if 0 <= unit_id < size:
            return (unit_id,)
        if self.is_reserved(unit_id):
            return ()
        k = unit_id - size - len(RESERVED_MARKERS)
        if not 0 <= k < len(self.units):
            raise DomainError(f"unit id {unit_id} out of range")
        return tuple(s for s in self.units[k] if s != END_OF_WORD)

    def surface(self, unit_id: int) -> str:
        """Returns the printable form of a unit."""
        size = self.alphabet.size
        if 0 <= unit_id < size:
            return self.alphabet.symbols[unit_id]
        if self.is_reserved(unit_id):
            return RESERVED_MARKERS[unit_id - size]
        k = unit_id - size - len(RESERVED_MARKERS)
        if not 0 <= k < len(self.units):
            raise DomainError(f"unit id {unit_id} out of range")
        return self.alphabet.join(self.units[k])


class Tokenizer:
    """Maps sentences and free text to unit ids under one tokenization mode."""

    def __init__(
        self,
        alphabet: Alphabet,
        mode: TokenizationMode,
        lexicon_or_model: WordLexicon | BpeModel | None = None,
    ) -> None:
        """Creates a Tokenizer.

        :param alphabet: The symbol inventory of the input.
        :param mode: The tokenization mode.
        :param lexicon_or_model: A WordLexicon for the word modes, a BpeModel
            for the BPE mode.
        :raise pydpparse.exceptions.ConfigurationError: When the mode is not
            compatible with the alphabet or its lexicon / model is missing.
        """
        from .bpe import BpeModel

        self.alphabet = alphabet
        self.mode = mode
        self.lexicon: WordLexicon | None = None
        self.bpe: BpeModel | None = None
        units: tuple[tuple[int, ...], ...] = ()

        match mode.kind:
            case ModeKind.CHAR if alphabet.kind is not AlphabetKind.CHARACTER:
                raise ConfigurationError("char mode needs a character alphabet")
            case ModeKind.PHONE if alphabet.kind is not AlphabetKind.PHONEME:
                raise ConfigurationError("phone mode needs a phoneme alphabet")
            case ModeKind.WORD | ModeKind.WORD_FALLBACK:
                if not isinstance(lexicon_or_model, WordLexicon):
                    raise ConfigurationError(
                        f"mode {mode.kind.value} requires a word lexicon"
                    )
                self.lexicon = lexicon_or_model
                units = tuple(lexicon_or_model.words)
            case ModeKind.BPE:
                if not isinstance(lexicon_or_model, BpeModel):
                    raise ConfigurationError("bpe mode requires a BPE model")
                if lexicon_or_model.alphabet.symbols != alphabet.symbols:
                    raise ConfigurationError(
                        "BPE model was learned on another alphabet"
                    )
                self.bpe = lexicon_or_model
                units = tuple(
                    u for u in lexicon_or_model.vocab if len(u) > 1 or u[0] < 0
                )

        self.vocab = UnitVocab(alphabet, units)
        self._bpe_ids: list[int] = []
        if self.bpe is not None:
            self._bpe_ids = [
                u[0] if len(u) == 1 and u[0] >= 0 else self._unit(u)
                for u in self.bpe.vocab
            ]

    def _unit(self, unit: Sequence[int]) -> int:
        unit_id = self.vocab.unit_id(unit)
        assert unit_id is not None
        return unit_id

    def tokenize(self, sentence: Sentence) -> list[int]:
        """Returns the unit ids of a sentence.

        :raise pydpparse.exceptions.PreconditionError: When a word mode is
            applied to a sentence with hidden boundaries.
        """
        if self.mode.needs_boundaries and not sentence.boundaries_visible:
            raise PreconditionError(
                f"mode {self.mode.kind.value} requires visible word boundaries"
            )
        return self._encode_words(sentence.words())

    def tokenize_text(
        self, text: str, boundary_marker: str = DEFAULT_BOUNDARY_MARKER
    ) -> list[int]:
        """Returns the unit ids of a line of free text.

        Symbols outside the alphabet become ``<UNK>``.

        :raise pydpparse.exceptions.DomainError: When the text is malformed.
        """
        try:
            words = split_text(text, self.alphabet.kind, boundary_marker)
        except ValueError as ex:
            raise DomainError(f"cannot tokenize {text!r}: {ex}") from ex
        return self._encode_words(
            [tuple(self.alphabet.get(s) for s in word) for word in words]
        )

    def _encode_words(self, words: Sequence[Sequence[int | None]]) -> list[int]:
        units: list[int] = []
        for k, word in enumerate(words):
            if k and self.mode.keep_space_marker and self.mode.is_symbol_mode:
                units.append(self.vocab.space)
            units.extend(self._encode_word(word))
        return units

    def _symbol_units(self, word: Sequence[int | None]) -> list[int]:
        return [self.vocab.unk if s is None else s for s in word]

    def _word_unit(self, word: Sequence[int | None]) -> int | None:
        if None in word:
            return None
        return self.vocab.unit_id(word)  # type: ignore[arg-type]

    def _encode_word(self, word: Sequence[int | None]) -> list[int]:
        match self.mode.kind:
            case ModeKind.CHAR | ModeKind.PHONE:
                return self._symbol_units(word)
            case ModeKind.WORD:
                unit_id = self._word_unit(word)
                return [self.vocab.unk if unit_id is None else unit_id]
            case ModeKind.WORD_FALLBACK:
                unit_id = self._word_unit(word)
                return self._symbol_units(word) if unit_id is None else [unit_id]
        assert self.bpe is not None
        units: list[int] = []
        run: list[int] = []
        for s in word:
            if s is None:
                encoded = self.bpe.encode(run, close=False)
                units.extend(self._bpe_ids[u] for u in encoded)
                units.append(self.vocab.unk)
                run = []
            else:
                run.append(s)
        units.extend(self._bpe_ids[u] for u in self.bpe.encode(run))
        return units

    def expand(self, units: Iterable[int]) -> list[int]:
        """Returns the symbol stream behind a unit sequence.

        Reserved units expand to nothing.
        """
        symbols: list[int] = []
        for unit in units:
            symbols.extend(self.vocab.expand(unit))
        return symbols

    def surfaces(self, units: Iterable[int]) -> list[str]:
        """Returns the printable forms of a unit sequence."""
        return [self.vocab.surface(u) for u in units]


def tokenize(
    sentence: Sentence,
    mode: TokenizationMode,
    alphabet: Alphabet,
    lexicon_or_model: WordLexicon | BpeModel | None = None,
) -> list[int]:
    """Tokenizes one sentence; see :class:`Tokenizer` for repeated use."""
    return Tokenizer(alphabet, mode, lexicon_or_model).tokenize(sentence)
