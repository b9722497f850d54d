"""Desk-scale studies; set DPPARSE_ACCEPTANCE=1 to run them."""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from pydpparse.balance import CandidateSet, CandidateWord, assign_strata, balance_wuggy
from pydpparse.bench import pair_accuracy, score_pairs
from pydpparse.dpparse import DpParseConfig, run
from pydpparse.ngram import train
from pydpparse.segeval import evaluate_corpus
from pydpparse.text import TokenizationMode, strip_boundaries, word_frequencies

from .conftest import synthetic_corpus

pytestmark = pytest.mark.skipif(
    os.environ.get("DPPARSE_ACCEPTANCE") != "1",
    reason="acceptance studies are opt-in",
)


@pytest.mark.timeout(600)
def test_synthetic_recovery():
    gold = synthetic_corpus(2000, seed=2024)
    segmented, stats = run(strip_boundaries(gold), DpParseConfig(max_iters=10))
    scores = evaluate_corpus(gold, segmented)
    assert len(stats) <= 10
    assert scores.token.f1 >= 0.60
    assert scores.boundary.f1 >= 0.80


@pytest.mark.timeout(900)
def test_throughput():
    # Sentences average 18 symbols.
    corpus = synthetic_corpus(56_000, seed=7)
    assert corpus.symbol_count >= 950_000
    start = time.monotonic()
    config = DpParseConfig(max_iters=10, threads=os.cpu_count() or 1)
    run(strip_boundaries(corpus), config)
    elapsed = time.monotonic() - start
    per_million = elapsed * 1_000_000 / corpus.symbol_count
    assert per_million < 600


def _mutations(word: str, rng: np.random.Generator, count: int) -> tuple[str, ...]:
    letters = "abcdefghij"
    out: list[str] = []
    while len(out) < count:
        position = int(rng.integers(len(word)))
        letter = letters[int(rng.integers(len(letters)))]
        candidate = word[:position] + letter + word[position + 1 :]
        if candidate != word:
            out.append(candidate)
    return tuple(out)


@pytest.mark.timeout(300)
def test_balancing_reaches_chance():
    corpus = synthetic_corpus(2000, seed=11)
    scorers = [
        train(corpus, order, TokenizationMode.char()).score_text for order in (1, 2)
    ]
    rng = np.random.default_rng(5)
    frequencies = {
        corpus.alphabet.join(w): c for w, c in word_frequencies(corpus).items()
    }
    words = list(frequencies)
    while len(words) < 5000:
        length = int(rng.integers(3, 9))
        word = "".join("abcdefghij"[int(i)] for i in rng.integers(10, size=length))
        if word not in words:
            words.append(word)
    strata = assign_strata(words, frequencies)
    entries = [CandidateWord(w, strata[w], _mutations(w, rng, 10)) for w in words]

    selection = balance_wuggy(CandidateSet(entries, scorers), seed=0, threads=4)
    assert len(selection.pairs) == 5000
    for scorer in scorers:
        scores = score_pairs(selection.pairs, scorer)
        accuracy, _ = pair_accuracy(selection.pairs, scores)
        assert accuracy == pytest.approx(0.5, abs=0.02)
