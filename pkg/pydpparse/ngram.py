"""Unigram and bigram baseline language models over any tokenization mode.

Every sentence is scored as the stream ``u_1 ... u_n <EOS>`` with a leading
``<EOS>`` that only serves as the first bigram context.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import os
from typing import Any, Iterable, Mapping, Sequence
import zipfile

import numpy as np

from .bench import EmbeddingSet
from .bpe import BpeModel
from .common import read_lines
from .exceptions import (
    ConfigurationError,
    CorpusReadError,
    DomainError,
    ParseError,
    PreconditionError,
)
from .text import (
    DEFAULT_BOUNDARY_MARKER,
    Alphabet,
    AlphabetKind,
    Corpus,
    ModeKind,
    Sentence,
    TokenizationMode,
    Tokenizer,
    WordLexicon,
    build_word_lexicon,
)

_LOGGER = logging.getLogger(__name__)
_ARCHIVE_SUFFIX = ".npz"
_FORMAT_VERSION = 1
DEFAULT_SYMBOL_K = 1.0
DEFAULT_WORD_K = 0.1
_EMBEDDING_WIDTH = 512


@dataclass(frozen=True)
class AddK:
    """Add-k smoothing."""

    k: float = DEFAULT_SYMBOL_K

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigurationError("add-k smoothing needs k > 0")


def default_smoothing(mode: TokenizationMode) -> AddK:
    """k = 1 for the symbol modes, 0.1 for word, fallback and BPE units."""
    return AddK(DEFAULT_SYMBOL_K if mode.is_symbol_mode else DEFAULT_WORD_K)


@dataclass(frozen=True)
class NGramModel:
    """Count tables of an order-1 or order-2 model."""

    order: int
    """1 for unigram, 2 for bigram."""

    tokenizer: Tokenizer
    """Maps text to the model's units."""

    unigram_counts: Mapping[int, int]
    """Count of every emitted unit."""

    bigram_counts: Mapping[tuple[int, int], int]
    """Count of every (context, unit) pair."""

    smoothing: AddK = field(default_factory=AddK)
    """Smoothing configuration."""

    total: int = field(init=False)
    """Number of emitted units."""

    context_totals: Mapping[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigurationError("only unigram and bigram models are supported")
        object.__setattr__(self, "unigram_counts", dict(self.unigram_counts))
        object.__setattr__(self, "bigram_counts", dict(self.bigram_counts))
        object.__setattr__(self, "total", sum(self.unigram_counts.values()))
        context_totals: Counter[int] = Counter()
        for (context, _), count in self.bigram_counts.items():
            context_totals[context] += count
        object.__setattr__(self, "context_totals", dict(context_totals))

    @property
    def mode(self) -> TokenizationMode:
        return self.tokenizer.mode

    @property
    def vocab_size(self) -> int:
        """Number of units, reserved markers included."""
        return self.tokenizer.vocab.size

    def _unit(self, unit: int) -> int:
        return unit if 0 <= unit < self.vocab_size else self.tokenizer.vocab.unk

    def prob(self, unit: int, context: int | None = None) -> float:
        """Returns P(unit | context); the context is ignored by unigram models."""
        unit = self._unit(unit)
        k = self.smoothing.k
        if self.order == 1 or context is None:
            return (self.unigram_counts.get(unit, 0) + k) / (
                self.total + k * self.vocab_size
            )
        context = self._unit(context)
        return (self.bigram_counts.get((context, unit), 0) + k) / (
            self.context_totals.get(context, 0) + k * self.vocab_size
        )

    def log_prob(self, units: Sequence[int]) -> float:
        """Chain-rule log probability of ``<EOS> units <EOS>``."""
        eos = self.tokenizer.vocab.eos
        total = 0.0
        context = eos
        for unit in [*units, eos]:
            unit = self._unit(unit)
            total += math.log(self.prob(unit, context if self.order == 2 else None))
            context = unit
        return total

    def score_sentence(self, sentence: Sentence) -> float:
        """Log probability of a corpus sentence."""
        return self.log_prob(self.tokenizer.tokenize(sentence))

    def score_text(
        self, text: str, boundary_marker: str = DEFAULT_BOUNDARY_MARKER
    ) -> float:
        """Log probability of a line of free text, such as a benchmark item."""
        return self.log_prob(self.tokenizer.tokenize_text(text, boundary_marker))

    def __call__(self, text: str) -> float:
        return self.score_text(text)


def _count(
    tokenizer: Tokenizer, sentences: Sequence[Sentence]
) -> tuple[Counter[int], Counter[tuple[int, int]]]:
    eos = tokenizer.vocab.eos
    unigrams: Counter[int] = Counter()
    bigrams: Counter[tuple[int, int]] = Counter()
    for sentence in sentences:
        stream = [eos, *tokenizer.tokenize(sentence), eos]
        unigrams.update(stream[1:])
        bigrams.update(zip(stream, stream[1:]))
    return unigrams, bigrams


def train(
    corpus: Corpus,
    order: int,
    mode: TokenizationMode,
    smoothing: AddK | None = None,
    bpe: BpeModel | None = None,
    threads: int = 1,
) -> NGramModel:
    """Counts units of an EOS-wrapped corpus.

    Word modes build their lexicon from the corpus, capped at ``mode.cap``;
    words outside it become ``<UNK>`` (word) or their symbols (fallback).

    :raise pydpparse.exceptions.PreconditionError: On an empty corpus.
    :raise pydpparse.exceptions.ConfigurationError: When the mode needs
        boundaries the corpus hides, or a BPE model is missing.
    """
    if not len(corpus):
        raise PreconditionError("cannot train on an empty corpus")
    if mode.needs_boundaries and not corpus.boundaries_visible:
        raise ConfigurationError(
            f"mode {mode.kind.value} needs visible word boundaries"
        )
    resource: WordLexicon | BpeModel | None = None
    if mode.kind in (ModeKind.WORD, ModeKind.WORD_FALLBACK):
        assert mode.cap is not None
        resource = build_word_lexicon(corpus, mode.cap)
    elif mode.kind is ModeKind.BPE:
        if bpe is None:
            raise ConfigurationError("bpe mode requires a BPE model")
        resource = bpe
    tokenizer = Tokenizer(corpus.alphabet, mode, resource)

    sentences = list(corpus)
    if threads > 1 and len(sentences) > threads:
        step = math.ceil(len(sentences) / threads)
        chunks = [sentences[i : i + step] for i in range(0, len(sentences), step)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda chunk: _count(tokenizer, chunk), chunks))
        unigrams: Counter[int] = Counter()
        bigrams: Counter[tuple[int, int]] = Counter()
        for u, b in parts:
            unigrams.update(u)
            bigrams.update(b)
    else:
        unigrams, bigrams = _count(tokenizer, sentences)

    model = NGramModel(
        order,
        tokenizer,
        unigrams,
        bigrams if order == 2 else {},
        smoothing or default_smoothing(mode),
    )
    _LOGGER.info(
        "trained order-%d %s model: %d units emitted, vocab %d",
        order,
        mode.kind.value,
        model.total,
        model.vocab_size,
    )
    return model


def log_prob(model: NGramModel, units: Sequence[int]) -> float:
    """Chain-rule log probability; see :meth:`NGramModel.log_prob`."""
    return model.log_prob(units)


def perplexity(model: NGramModel, corpus: Corpus) -> float:
    """Per-unit perplexity of a corpus, final ``<EOS>`` units included."""
    total, count = 0.0, 0
    for sentence in corpus:
        units = model.tokenizer.tokenize(sentence)
        total += model.log_prob(units)
        count += len(units) + 1
    if not count:
        raise PreconditionError("cannot compute perplexity of an empty corpus")
    return math.exp(-total / count)


def context_embeddings(
    model: NGramModel, words: Iterable[str], width: int = _EMBEDDING_WIDTH
) -> EmbeddingSet:
    """Represents each word by the model's next-unit predictions.

    The single layer holds, for every unit position of a word, the
    probabilities of the first ``width`` vocabulary units given that unit.
    """
    width = min(width, model.vocab_size)
    vectors: dict[str, tuple[np.ndarray, ...]] = {}
    for word in words:
        units = model.tokenizer.tokenize_text(word)
        rows = [
            [model.prob(u, context if model.order == 2 else None) for u in range(width)]
            for context in units
        ]
        vectors[word] = (np.asarray(rows, dtype=np.float64).reshape(len(units), width),)
    return EmbeddingSet(vectors, layers=1, width=width)


@dataclass
class _Records:
    """The fields shared by both model file formats."""

    header: dict[str, str] = field(default_factory=dict)
    symbols: list[str] = field(default_factory=list)
    words: list[tuple[str, str]] = field(default_factory=list)
    merges: list[tuple[str, str]] = field(default_factory=list)
    unigrams: dict[int, int] = field(default_factory=dict)
    bigrams: dict[tuple[int, int], int] = field(default_factory=dict)


def _records(model: NGramModel) -> _Records:
    tokenizer = model.tokenizer
    alphabet = tokenizer.alphabet
    mode = tokenizer.mode
    records = _Records(
        header={
            "ngram": str(_FORMAT_VERSION),
            "order": str(model.order),
            "mode": mode.kind.value,
            "cap": str(mode.cap) if mode.cap is not None else "-",
            "keep_space": str(int(mode.keep_space_marker)),
            "k": repr(model.smoothing.k),
            "kind": alphabet.kind.value,
        },
        symbols=list(alphabet.symbols),
        unigrams=dict(sorted(model.unigram_counts.items())),
        bigrams=dict(sorted(model.bigram_counts.items())),
    )
    if tokenizer.lexicon is not None:
        records.header["lexicon_cap"] = str(tokenizer.lexicon.cap)
        records.words = [
            (alphabet.join(word), str(count))
            for word, count in tokenizer.lexicon.entries
        ]
    if tokenizer.bpe is not None:
        records.header["bpe_target"] = str(tokenizer.bpe.target_size)
        records.header["bpe_end_of_word"] = str(int(tokenizer.bpe.end_of_word))
        records.merges = [
            (alphabet.join(left), alphabet.join(right))
            for left, right in tokenizer.bpe.merges
        ]
    return records


def write_model(model: NGramModel, path: str | os.PathLike[str]) -> None:
    """Writes a model: a compressed archive for ``.npz`` paths, a TSV dump otherwise."""
    records = _records(model)
    if str(path).endswith(_ARCHIVE_SUFFIX):
        with open(path, "wb") as f:
            np.savez_compressed(
                f,
                header=np.asarray(list(records.header.items()), dtype=str),
                symbols=np.asarray(records.symbols, dtype=str),
                words=np.asarray(records.words, dtype=str).reshape(-1, 2),
                merges=np.asarray(records.merges, dtype=str).reshape(-1, 2),
                unigrams=np.asarray(
                    list(records.unigrams.items()), dtype=np.int64
                ).reshape(-1, 2),
                bigrams=np.asarray(
                    [(c, u, n) for (c, u), n in records.bigrams.items()],
                    dtype=np.int64,
                ).reshape(-1, 3),
            )
        return

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in records.header.items():
            f.write(f"#{key}\t{value}\n")
        for surface in records.symbols:
            f.write(f"#symbol\t{surface}\n")
        for surface, count in records.words:
            f.write(f"#word\t{surface}\t{count}\n")
        for left, right in records.merges:
            f.write(f"#merge\t{left}\t{right}\n")
        for unit, count in records.unigrams.items():
            f.write(f"1\t{unit}\t{count}\n")
        for (context, unit), count in records.bigrams.items():
            f.write(f"2\t{context}\t{unit}\t{count}\n")


def _read_tsv(path: str | os.PathLike[str]) -> _Records:
    records = _Records()
    for lineno, line in read_lines(path):
        if not line:
            continue
        fields = line.split("\t")
        try:
            match fields:
                case ["#symbol", surface]:
                    records.symbols.append(surface)
                case ["#word", surface, count]:
                    records.words.append((surface, count))
                case ["#merge", left, right]:
                    records.merges.append((left, right))
                case [key, value] if key.startswith("#"):
                    records.header[key[1:]] = value
                case ["1", unit, count]:
                    records.unigrams[int(unit)] = int(count)
                case ["2", context, unit, count]:
                    records.bigrams[(int(context), int(unit))] = int(count)
                case _:
                    raise ValueError(f"unexpected line {line!r}")
        except ValueError as ex:
            raise ParseError(str(ex), path=str(path), line=lineno) from ex
    return records


def _read_archive(path: str | os.PathLike[str]) -> _Records:
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError as ex:
        raise CorpusReadError(f"cannot read {path}: {ex}") from ex
    except (OSError, EOFError, ValueError, zipfile.BadZipFile) as ex:
        message = f"not a pydpparse n-gram archive: {ex}"
        raise ParseError(message, path=str(path)) from ex
    if not isinstance(data, np.lib.npyio.NpzFile):
        raise ParseError("not a pydpparse n-gram archive", path=str(path))
    with data:
        try:
            return _Records(
                header={str(k): str(v) for k, v in data["header"]},
                symbols=[str(s) for s in data["symbols"]],
                words=[(str(w), str(c)) for w, c in data["words"]],
                merges=[(str(a), str(b)) for a, b in data["merges"]],
                unigrams={int(u): int(n) for u, n in data["unigrams"]},
                bigrams={(int(c), int(u)): int(n) for c, u, n in data["bigrams"]},
            )
        except (KeyError, ValueError) as ex:
            raise ParseError(f"incomplete archive: {ex}", path=str(path)) from ex


def read_model(path: str | os.PathLike[str]) -> NGramModel:
    """Reads a model written by :func:`write_model`.

    Archives are loaded without unpickling.

    :raise pydpparse.exceptions.ParseError: On malformed input.
    """
    if str(path).endswith(_ARCHIVE_SUFFIX):
        records = _read_archive(path)
    else:
        records = _read_tsv(path)
    header = records.header

    if header.get("ngram") != str(_FORMAT_VERSION):
        raise ParseError("not a pydpparse n-gram model", path=str(path), line=1)
    try:
        alphabet = Alphabet(tuple(records.symbols), AlphabetKind.parse(header["kind"]))
        cap = None if header.get("cap", "-") == "-" else int(header["cap"])
        keep_space = header.get("keep_space") == "1"
        mode = TokenizationMode(ModeKind(header["mode"]), cap, keep_space)
        order = int(header["order"])
        k = float(header["k"])
    except (KeyError, ValueError, DomainError, ConfigurationError) as ex:
        raise ParseError(f"bad header: {ex}", path=str(path), line=1) from ex

    resource: WordLexicon | BpeModel | None = None
    try:
        if mode.kind in (ModeKind.WORD, ModeKind.WORD_FALLBACK):
            entries = [(alphabet.split(w), int(c)) for w, c in records.words]
            lexicon_cap = int(header.get("lexicon_cap", str(max(len(entries), 1))))
            resource = WordLexicon(tuple(entries), lexicon_cap)
        elif mode.kind is ModeKind.BPE:
            eow = header.get("bpe_end_of_word") == "1"
            parsed = [
                (alphabet.split(left, eow), alphabet.split(right, eow))
                for left, right in records.merges
            ]
            resource = BpeModel(
                alphabet, tuple(parsed), int(header.get("bpe_target", "0")), eow
            )
    except (ValueError, DomainError) as ex:
        raise ParseError(f"bad tokenizer section: {ex}", path=str(path)) from ex

    tokenizer = Tokenizer(alphabet, mode, resource)
    return NGramModel(order, tokenizer, records.unigrams, records.bigrams, AddK(k))


def model_summary(model: NGramModel) -> dict[str, Any]:
    """Returns a JSON dict describing a model."""
    return {
        "order": model.order,
        "mode": model.mode.to_json(),
        "k": model.smoothing.k,
        "vocab_size": model.vocab_size,
        "tokens": model.total,
        "unigram_types": len(model.unigram_counts),
        "bigram_types": len(model.bigram_counts),
    }
