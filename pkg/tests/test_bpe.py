from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from pydpparse.bpe import (
    BpeModel,
    decode,
    decode_corpus,
    encode,
    encode_corpus,
    learn,
    read_bpe,
    write_bpe,
)
from pydpparse.exceptions import DomainError, ParseError, PreconditionError
from pydpparse.text import (
    END_OF_WORD,
    Alphabet,
    Corpus,
    Sentence,
    TokenizationMode,
    Tokenizer,
    load_corpus,
    strip_boundaries,
    word_frequencies,
)


def _word_corpus(count: int, seed: int) -> Corpus:
    """``count`` distinct random words, ten to a sentence."""
    rng = np.random.default_rng(seed)
    words: set[tuple[int, ...]] = set()
    while len(words) < count:
        length = int(rng.integers(1, 9))
        words.add(tuple(int(s) for s in rng.integers(10, size=length)))
    ordered = sorted(words)
    sentences = []
    for k in range(0, count, 10):
        symbols: list[int] = []
        boundaries: list[int] = []
        for word in ordered[k : k + 10]:
            if symbols:
                boundaries.append(len(symbols))
            symbols.extend(word)
        sentences.append(Sentence(tuple(symbols), tuple(boundaries)))
    return Corpus(tuple(sentences), Alphabet(tuple("abcdefghij")))


def _replay(model: BpeModel, corpus: Corpus) -> list[int]:
    """Applies the merges in order, returning each merged pair's frequency.

    Also checks that every merged pair was the most frequent one left.
    """
    words = [
        ([(s,) for s in word] + [(END_OF_WORD,)] * model.end_of_word, count)
        for word, count in word_frequencies(corpus).items()
    ]
    frequencies = []
    for left, right in model.merges:
        pairs: Counter[tuple[tuple[int, ...], tuple[int, ...]]] = Counter()
        for units, count in words:
            for pair in zip(units, units[1:]):
                pairs[pair] += count
        assert pairs[(left, right)] == max(pairs.values())
        frequencies.append(pairs[(left, right)])
        for units, _ in words:
            k = 0
            while k < len(units) - 1:
                if (units[k], units[k + 1]) == (left, right):
                    units[k : k + 2] = [left + right]
                k += 1
    return frequencies


@pytest.fixture
def aaab_corpus(write_text) -> Corpus:
    return load_corpus(write_text("aaab.txt", ["aaab aaab ab"]), "char")


class TestLearn:
    def test_most_frequent_pair_first(self, aaab_corpus: Corpus):
        model = learn(aaab_corpus, 100)
        split = aaab_corpus.alphabet.split
        assert model.merges == (
            (split("a"), split("a")),
            (split("a"), split("b")),
            (split("aa"), split("ab")),
        )
        assert [aaab_corpus.alphabet.join(u) for u in model.vocab] == [
            "a",
            "b",
            "aa",
            "ab",
            "aaab",
        ]

    def test_stops_at_target(self, aaab_corpus: Corpus):
        model = learn(aaab_corpus, 3)
        assert len(model.merges) == 1
        assert len(model.vocab) == 3
        assert model.target_size == 3

    def test_stops_without_repeated_pairs(self, write_text):
        corpus = load_corpus(write_text("c.txt", ["ab cd"]), "char")
        assert learn(corpus, 100).merges == ()

    def test_ties_go_to_the_smallest_pair(self, write_text):
        corpus = load_corpus(write_text("c.txt", ["cd ab cd ab"]), "char")
        model = learn(corpus, 5)
        # c and d were seen first, so they have the smaller ids.
        assert model.merges == (((0,), (1,)),)

    def test_merges_stay_inside_words(self, write_text):
        corpus = load_corpus(write_text("c.txt", ["a b", "a b", "a b"]), "char")
        assert learn(corpus, 100).merges == ()

    def test_end_of_word_units(self, aaab_corpus: Corpus):
        model = learn(aaab_corpus, 100, end_of_word=True)
        assert model.vocab[2] == (END_OF_WORD,)
        assert (END_OF_WORD,) in [right for _, right in model.merges]
        a, b = aaab_corpus.alphabet.split("ab")
        assert model.decode(model.encode([a, b])) == [a, b]

    def test_end_of_word_text_in_a_word(self, write_text):
        corpus = load_corpus(write_text("c.txt", ["a</w>b a</w>b"]), "char")
        assert learn(corpus, 100).merges
        with pytest.raises(DomainError, match="end-of-word"):
            learn(corpus, 100, end_of_word=True)

    @pytest.mark.parametrize("end_of_word", [False, True])
    def test_merges_are_replayable(self, end_of_word):
        corpus = _word_corpus(2000, seed=5)
        model = learn(corpus, 300, end_of_word)
        frequencies = _replay(model, corpus)
        assert len(frequencies) == len(model.merges) > 0
        assert all(f >= 2 for f in frequencies)
        assert all(b <= a for a, b in zip(frequencies, frequencies[1:]))

    def test_needs_boundaries(self, aaab_corpus: Corpus):
        with pytest.raises(PreconditionError):
            learn(strip_boundaries(aaab_corpus), 10)

    def test_phoneme_units_are_labels(self, phone_corpus: Corpus):
        model = learn(phone_corpus, 100)
        split = phone_corpus.alphabet.split
        assert model.merges[0] == (split("DH"), split("AH0"))
        assert model.surface(model.vocab.index(split("DH AH0"))) == "DH AH0"


class TestEncode:
    def test_applies_merges_in_rank_order(self, aaab_corpus: Corpus):
        model = learn(aaab_corpus, 100)
        split = aaab_corpus.alphabet.split
        assert encode(model, split("aaab")) == [4]
        assert encode(model, split("ab")) == [3]
        assert encode(model, split("ba")) == [1, 0]
        assert encode(model, split("aaa")) == [2, 0]

    def test_round_trip(self, char_corpus: Corpus):
        model = learn(char_corpus, 20)
        for sentence in char_corpus:
            for word in sentence.words():
                assert decode(model, encode(model, word)) == list(word)

    def test_corpus_round_trip(self, char_corpus: Corpus):
        model = learn(char_corpus, 20, end_of_word=True)
        encoded = encode_corpus(model, char_corpus)
        assert decode_corpus(model, encoded).sentences == char_corpus.sentences

    @pytest.mark.timeout(600)
    @pytest.mark.parametrize("end_of_word", [False, True])
    def test_round_trip_on_many_words(self, end_of_word):
        corpus = _word_corpus(10_000, seed=8)
        model = learn(corpus, 1000, end_of_word)
        for sentence in corpus:
            for word in sentence.words():
                units = encode(model, word)
                assert len(units) <= len(word) + end_of_word
                assert decode(model, units) == list(word)
        assert decode_corpus(model, encode_corpus(model, corpus)).sentences == (
            corpus.sentences
        )

    def test_empty_word(self, aaab_corpus: Corpus):
        assert learn(aaab_corpus, 10).encode([]) == []

    def test_unknown_symbol(self, aaab_corpus: Corpus):
        with pytest.raises(DomainError):
            learn(aaab_corpus, 10).encode([7])
        with pytest.raises(DomainError):
            learn(aaab_corpus, 10).decode([99])

    def test_merge_must_use_known_units(self, aaab_corpus: Corpus):
        with pytest.raises(DomainError):
            BpeModel(aaab_corpus.alphabet, (((0, 0), (1,)),))

    def test_tokenizer_mode(self, char_corpus: Corpus):
        model = learn(char_corpus, 14, end_of_word=True)
        tokenizer = Tokenizer(char_corpus.alphabet, TokenizationMode.bpe(), model)
        for sentence in char_corpus:
            units = tokenizer.tokenize(sentence)
            assert tokenizer.expand(units) == list(sentence.symbols)
        the = tokenizer.tokenize_text("the")
        assert tokenizer.surfaces(the)[-1].endswith("</w>")


class TestPersistence:
    @pytest.mark.parametrize("end_of_word", [False, True])
    def test_round_trip(self, char_corpus: Corpus, tmp_path, end_of_word):
        model = learn(char_corpus, 20, end_of_word)
        write_bpe(model, tmp_path / "bpe.tsv")
        assert read_bpe(tmp_path / "bpe.tsv") == model

    def test_phoneme_round_trip(self, phone_corpus: Corpus, tmp_path):
        model = learn(phone_corpus, 20)
        write_bpe(model, tmp_path / "bpe.tsv")
        assert read_bpe(tmp_path / "bpe.tsv") == model

    def test_missing_header(self, write_text):
        with pytest.raises(ParseError):
            read_bpe(write_text("bpe.tsv", ["a\tb"]))

    def test_unknown_merge_symbol(self, write_text):
        lines = ["#bpe\t1", "#kind\tcharacter", "#symbol\ta", "a\tz"]
        with pytest.raises(ParseError) as info:
            read_bpe(write_text("bpe.tsv", lines))
        assert info.value.line == 4
