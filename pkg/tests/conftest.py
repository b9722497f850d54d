from __future__ import annotations

from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from pytest import fixture

from pydpparse.text import Alphabet, AlphabetKind, Corpus, Sentence, load_corpus

CHAR_LINES = ["the dog", "the cat sat", "a dog sat", "the cat"]
PHONE_LINES = ["DH AH0 | D AO1 G", "DH AH0 | K AE1 T"]


def synthetic_corpus(
    sentences: int,
    seed: int = 0,
    words: int = 20,
    symbols: int = 10,
) -> Corpus:
    """Sentences of 2-6 words drawn from a fixed lexicon of 3-6 symbol words."""
    rng = np.random.default_rng(seed)
    alphabet = Alphabet(tuple("abcdefghijklmnopqrstuvwxyz"[:symbols]))
    lexicon: list[tuple[int, ...]] = []
    while len(lexicon) < words:
        length = int(rng.integers(3, 7))
        word = tuple(int(s) for s in rng.integers(symbols, size=length))
        if word not in lexicon:
            lexicon.append(word)
    out: list[Sentence] = []
    for _ in range(sentences):
        picks = rng.integers(words, size=int(rng.integers(2, 7)))
        ids: list[int] = []
        boundaries: list[int] = []
        for i in picks:
            if ids:
                boundaries.append(len(ids))
            ids.extend(lexicon[int(i)])
        out.append(Sentence(tuple(ids), tuple(boundaries)))
    return Corpus(tuple(out), alphabet, "synthetic")


@fixture
def write_text(tmp_path: Path) -> Callable[[str, Iterable[str]], Path]:
    def write(name: str, lines: Iterable[str]) -> Path:
        path = tmp_path / name
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return path

    return write


@fixture
def char_corpus_path(write_text) -> Path:
    return write_text("gold.txt", CHAR_LINES)


@fixture
def char_corpus(char_corpus_path: Path) -> Corpus:
    return load_corpus(char_corpus_path, AlphabetKind.CHARACTER)


@fixture
def phone_corpus(write_text) -> Corpus:
    return load_corpus(write_text("phones.txt", PHONE_LINES), AlphabetKind.PHONEME)


@fixture
def small_synthetic() -> Corpus:
    return synthetic_corpus(60, seed=3)
