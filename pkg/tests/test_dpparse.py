from __future__ import annotations

from dataclasses import replace
from itertools import combinations
import math

from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from pydpparse.dpparse import (
    DpParseConfig,
    FinalParse,
    IterationStats,
    Parse,
    SymbolDistribution,
    SymbolPrior,
    TokenLexicon,
    base_prob,
    init_lexicon,
    nbest_parses,
    run,
    run_with_lexicon,
    sample_parse,
    segment_corpus,
    token_log_prob,
    token_prob,
)
from pydpparse.exceptions import (
    ConfigurationError,
    DomainError,
    InitializationError,
    PreconditionError,
)
from pydpparse.segeval import evaluate_corpus
from pydpparse.text import Alphabet, Corpus, Sentence, boundary_spans, strip_boundaries

from .conftest import synthetic_corpus


def _all_parses(
    sentence: Sentence, lexicon: TokenLexicon, config: DpParseConfig, dist
) -> list[tuple[float, tuple[int, ...]]]:
    n = len(sentence)
    span = {
        (i, j): -token_log_prob(
            sentence.symbols[i:j], lexicon, config.alpha0, dist, config.p_hash
        )
        for i in range(n)
        for j in range(i + 1, n + 1)
    }
    out = []
    for k in range(n):
        for cut in combinations(range(1, n), k):
            cost = math.fsum(span[s] for s in boundary_spans(cut, n))
            out.append((cost, cut))
    return sorted(out)


def _random_case(
    rng: np.random.Generator, length: int, symbols: int
) -> tuple[Sentence, TokenLexicon]:
    sentence = Sentence(tuple(int(s) for s in rng.integers(symbols, size=length)))
    seen = [
        tuple(int(s) for s in rng.integers(symbols, size=int(rng.integers(1, 4))))
        for _ in range(int(rng.integers(0, 12)))
    ]
    return sentence, TokenLexicon.from_tokens(seen)


class TestConfig:
    def test_defaults(self):
        config = DpParseConfig()
        assert config.alpha0 == 20
        assert config.p_hash == 0.5
        assert config.beam_n == 5
        assert config.patience == 2
        assert config.leave_one_out
        assert config.final_parse is FinalParse.BEST
        assert config.max_token_len == 20
        assert config.symbol_prior is SymbolPrior.UNIGRAM

    @pytest.mark.parametrize(
        "change",
        [
            {"alpha0": 0},
            {"p_hash": 0},
            {"p_hash": 1},
            {"beam_n": 0},
            {"max_token_len": 0},
            {"patience": 0},
            {"min_nll_improvement": -1},
            {"seed": -1},
        ],
    )
    def test_rejects_invalid_values(self, change):
        with pytest.raises(ConfigurationError):
            DpParseConfig(**change)

    def test_json(self):
        config = DpParseConfig(alpha0=5, symbol_prior="uniform", invert_beam=True)
        json = config.to_json()
        assert json["symbol_prior"] == "uniform"
        assert json["final_parse"] == "best"
        assert DpParseConfig.from_json({**json, "unknown": 1}) == config

    def test_json_leaves_out_threads(self):
        config = DpParseConfig(threads=4, final_parse="sampled")
        json = config.to_json()
        assert "threads" not in json
        assert json == replace(config, threads=1).to_json()
        assert DpParseConfig.from_json(json) == replace(config, threads=1)


class TestBaseDistribution:
    def test_singleton_alphabet(self):
        assert base_prob((0,), SymbolDistribution.uniform(1), 0.5) == pytest.approx(0.5)

    def test_two_symbols(self):
        dist = SymbolDistribution.uniform(2)
        assert base_prob((0, 1), dist, 0.5) == pytest.approx(0.0625)

    def test_empty_token(self):
        with pytest.raises(DomainError):
            base_prob((), SymbolDistribution.uniform(2), 0.5)

    def test_unknown_symbol(self):
        with pytest.raises(DomainError):
            base_prob((2,), SymbolDistribution.uniform(2), 0.5)

    def test_sums_to_one_over_all_tokens(self):
        dist = SymbolDistribution((0.25, 0.75))
        total = math.fsum(
            base_prob(word, dist, 0.5)
            for length in range(1, 11)
            for word in np.ndindex(*([2] * length))
        )
        # Longer tokens hold the remaining 0.5 ** 10.
        assert total == pytest.approx(1 - 0.5**10)

    def test_distribution_must_be_normalized(self):
        with pytest.raises(DomainError):
            SymbolDistribution((0.5, 0.4))
        with pytest.raises(DomainError):
            SymbolDistribution((1.0, 0.0))

    def test_from_corpus(self, char_corpus: Corpus):
        dist = SymbolDistribution.from_corpus(char_corpus)
        # "t" occurs 7 times in 28 symbols.
        assert dist.probs[0] == pytest.approx(7 / 28)
        assert math.fsum(dist.probs) == pytest.approx(1.0)


class TestTokenProb:
    def test_seen_token(self):
        lexicon = TokenLexicon({(0, 1): 2})
        dist = SymbolDistribution.uniform(2)
        assert token_prob((0, 1), lexicon, 1.0, dist, 0.5) == pytest.approx(
            (2 + 0.0625) / 3
        )

    def test_unseen_token(self):
        lexicon = TokenLexicon({(0, 1): 2})
        dist = SymbolDistribution.uniform(2)
        assert token_prob((1, 0), lexicon, 1.0, dist, 0.5) == pytest.approx(0.0625 / 3)

    def test_empty_lexicon_is_base_distribution(self):
        dist = SymbolDistribution.uniform(2)
        assert token_prob((0,), TokenLexicon(), 3.0, dist, 0.5) == pytest.approx(0.25)

    def test_lexicon_drops_zero_counts(self):
        lexicon = TokenLexicon({(0,): 0, (1,): 3})
        assert len(lexicon) == 1
        assert lexicon.total == 3
        assert lexicon.count((0,)) == 0


class TestInitLexicon:
    def test_only_short_sentences(self):
        alphabet = Alphabet(tuple("abcdefghijklmnopqrstuvwxy"))
        long = Sentence(tuple(range(25)))
        corpus = Corpus((Sentence((0, 1)), Sentence((0, 1)), long), alphabet)
        lexicon = init_lexicon(corpus, 20)
        assert lexicon.counts == {(0, 1): 2}
        assert lexicon.total == 2

    def test_length_limit_is_exclusive(self):
        corpus = Corpus((Sentence((0, 1, 0)),), Alphabet(("a", "b")))
        with pytest.raises(InitializationError):
            init_lexicon(corpus, 3)
        assert init_lexicon(corpus, 4).total == 1

    def test_empty_corpus(self):
        with pytest.raises(PreconditionError):
            init_lexicon(Corpus((), Alphabet(("a",))), 20)


class TestNBest:
    @settings(max_examples=40, deadline=None)
    @given(
        symbols=st.lists(st.integers(0, 2), min_size=1, max_size=6),
        seen=st.lists(
            st.lists(st.integers(0, 2), min_size=1, max_size=3), max_size=5
        ),
        alpha0=st.sampled_from([0.5, 1.0, 20.0]),
    )
    def test_matches_enumeration(self, symbols, seen, alpha0):
        sentence = Sentence(tuple(symbols))
        lexicon = TokenLexicon.from_tokens(seen)
        dist = SymbolDistribution((0.2, 0.3, 0.5))
        config = DpParseConfig(
            alpha0=alpha0, beam_n=2 ** (len(symbols) - 1), max_token_len=len(symbols)
        )
        expected = _all_parses(sentence, lexicon, config, dist)
        parses = nbest_parses(sentence, lexicon, config, dist)
        assert [p.neg_log_prob for p in parses] == pytest.approx(
            [cost for cost, _ in expected]
        )
        assert {p.boundaries for p in parses} == {cut for _, cut in expected}

    def test_truncated_beam_keeps_the_best(self):
        sentence = Sentence((0, 1, 2, 0, 1))
        lexicon = TokenLexicon({(0, 1): 3, (2,): 1})
        dist = SymbolDistribution.uniform(3)
        config = DpParseConfig(alpha0=1.0, beam_n=3)
        expected = _all_parses(sentence, lexicon, replace(config, beam_n=16), dist)
        parses = nbest_parses(sentence, lexicon, config, dist)
        assert len(parses) == 3
        assert [p.neg_log_prob for p in parses] == pytest.approx(
            [cost for cost, _ in expected[:3]]
        )
        assert parses[0].boundaries == (2, 3)

    def test_max_token_len(self):
        sentence = Sentence((0, 0, 0, 0))
        config = DpParseConfig(beam_n=8, max_token_len=1)
        parses = nbest_parses(
            sentence, TokenLexicon(), config, SymbolDistribution.uniform(1)
        )
        assert [p.boundaries for p in parses] == [(1, 2, 3)]

    def test_single_symbol(self):
        parses = nbest_parses(
            Sentence((0,)), TokenLexicon(), DpParseConfig(), SymbolDistribution((1.0,))
        )
        assert [p.boundaries for p in parses] == [()]

    def test_inverted_beam_keeps_the_worst(self):
        sentence = Sentence((0, 1, 0, 1))
        lexicon = TokenLexicon({(0, 1): 5})
        dist = SymbolDistribution.uniform(2)
        config = DpParseConfig(alpha0=1.0, beam_n=8, max_token_len=4)
        best = nbest_parses(sentence, lexicon, config, dist)
        worst = nbest_parses(sentence, lexicon, replace(config, invert_beam=True), dist)
        assert sorted(p.neg_log_prob for p in worst) == pytest.approx(
            sorted(p.neg_log_prob for p in best)
        )
        one = replace(config, beam_n=1)
        [greedy] = nbest_parses(sentence, lexicon, one, dist)
        inverted_one = replace(one, invert_beam=True)
        [inverted] = nbest_parses(sentence, lexicon, inverted_one, dist)
        assert inverted.neg_log_prob >= greedy.neg_log_prob

    def test_single_best_is_viterbi(self):
        rng = np.random.default_rng(23)
        dist = SymbolDistribution((0.1, 0.2, 0.3, 0.4))
        for length in range(1, 13):
            for _ in range(3):
                sentence, lexicon = _random_case(rng, length, 4)
                config = DpParseConfig(alpha0=1.0, beam_n=1, max_token_len=12)
                [parse] = nbest_parses(sentence, lexicon, config, dist)
                expected = _all_parses(sentence, lexicon, config, dist)
                assert parse.neg_log_prob == pytest.approx(expected[0][0])
                costs = {cut: cost for cost, cut in expected}
                assert costs[parse.boundaries] == pytest.approx(parse.neg_log_prob)

    @pytest.mark.timeout(600)
    def test_full_beam_enumerates_every_parse(self):
        rng = np.random.default_rng(2)
        dist = SymbolDistribution((0.3, 0.25, 0.2, 0.15, 0.1))
        for _ in range(1000):
            length = int(rng.integers(1, 13))
            sentence, lexicon = _random_case(rng, length, 5)
            config = DpParseConfig(
                alpha0=2.0, beam_n=2 ** (length - 1), max_token_len=length
            )
            expected = _all_parses(sentence, lexicon, config, dist)
            parses = nbest_parses(sentence, lexicon, config, dist)
            assert [p.neg_log_prob for p in parses] == pytest.approx(
                [cost for cost, _ in expected], abs=1e-9
            )
            assert {p.boundaries for p in parses} == {cut for _, cut in expected}

    def test_held_out_tokens_are_uncounted(self):
        sentence = Sentence((0, 1, 2, 0, 1))
        dist = SymbolDistribution.uniform(3)
        config = DpParseConfig(alpha0=1.0, beam_n=16)
        held = nbest_parses(
            sentence, TokenLexicon({(0, 1): 3, (2,): 1}), config, dist, [(0, 1)]
        )
        reduced_lexicon = TokenLexicon({(0, 1): 2, (2,): 1})
        reduced = nbest_parses(sentence, reduced_lexicon, config, dist)
        assert held == reduced

    def test_held_out_never_goes_negative(self):
        sentence = Sentence((0, 1))
        dist = SymbolDistribution.uniform(2)
        config = DpParseConfig(alpha0=1.0, beam_n=2)
        lexicon = TokenLexicon({(0, 1): 1})
        held = nbest_parses(sentence, lexicon, config, dist, [(0, 1), (0, 1)])
        empty = nbest_parses(sentence, TokenLexicon(), config, dist)
        assert held == empty

    def test_empty_sentence(self):
        dist = SymbolDistribution((1.0,))
        with pytest.raises(PreconditionError):
            nbest_parses(Sentence(()), TokenLexicon(), DpParseConfig(), dist)


class TestSampling:
    def test_uniform_over_the_list(self):
        nbest = [Parse((k,), float(k)) for k in range(1, 5)]
        rng = np.random.default_rng(7)
        draws = [sample_parse(nbest, rng).boundaries[0] for _ in range(4000)]
        counts = np.bincount(draws, minlength=5)[1:]
        assert counts.min() > 850

    def test_empty_list(self):
        with pytest.raises(PreconditionError):
            sample_parse([], np.random.default_rng(0))

    def test_independent_of_threads(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        lexicon = init_lexicon(corpus, 40)
        dist = SymbolDistribution.from_corpus(corpus)
        config = DpParseConfig(seed=11)
        one = segment_corpus(corpus, lexicon, dist, config, iteration=2)
        four = segment_corpus(corpus, lexicon, dist, replace(config, threads=4), 2)
        assert one == four

    def test_previous_parses_are_held_out(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        lexicon = init_lexicon(corpus, 40)
        dist = SymbolDistribution.from_corpus(corpus)
        config = DpParseConfig(seed=3)
        previous = [Parse((), 0.0)] * len(corpus)
        plain = segment_corpus(corpus, lexicon, dist, config)
        held = segment_corpus(corpus, lexicon, dist, config, previous=previous)
        ignored = segment_corpus(
            corpus, lexicon, dist, replace(config, leave_one_out=False), 0, previous
        )
        assert ignored == plain
        assert held != plain

    def test_returns_the_most_probable_parse(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        lexicon = init_lexicon(corpus, 40)
        dist = SymbolDistribution.from_corpus(corpus)
        config = DpParseConfig(seed=3)
        _, best = segment_corpus(corpus, lexicon, dist, config)
        for sentence, parse in zip(corpus, best):
            assert parse == nbest_parses(sentence, lexicon, config, dist)[0]


class TestRun:
    def test_deterministic(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        config = DpParseConfig(seed=5, max_iters=4, init_max_len=40)
        first = run(corpus, config)
        second = run(corpus, replace(config, threads=3))
        assert first == second

    def test_best_nll_never_increases(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        config = DpParseConfig(max_iters=6, patience=3, init_max_len=40)
        _, stats = run(corpus, config)
        assert 1 <= len(stats) <= 6
        best = [s.best_nll for s in stats]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert best[-1] == min(s.corpus_nll for s in stats)
        assert [s.iteration for s in stats] == list(range(len(stats)))

    def test_output_keeps_the_symbols(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        segmented, _ = run(corpus, DpParseConfig(max_iters=2, init_max_len=40))
        assert segmented.boundaries_visible
        assert [s.symbols for s in segmented] == [s.symbols for s in corpus]
        assert segmented.alphabet == corpus.alphabet

    def test_lexicon_matches_the_output(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        segmented, _, lexicon = run_with_lexicon(
            corpus, DpParseConfig(max_iters=3, init_max_len=40)
        )
        words = [w for s in segmented for w in s.words()]
        assert lexicon == TokenLexicon.from_tokens(words)

    def test_sampled_final_parse(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        config = DpParseConfig(max_iters=3, init_max_len=40, final_parse="sampled")
        _, stats, lexicon = run_with_lexicon(corpus, config)
        best = min(stats, key=lambda s: s.corpus_nll)
        assert lexicon.total == best.token_count

    def test_repeated_sentence_stays_one_word(self):
        corpus = Corpus(
            tuple(Sentence((0, 1, 0, 1)) for _ in range(1000)), Alphabet(("a", "b"))
        )
        segmented, stats, lexicon = run_with_lexicon(
            corpus, DpParseConfig(max_token_len=4)
        )
        assert lexicon.counts == {(0, 1, 0, 1): 1000}
        assert all(s.boundaries == () for s in segmented)
        best = [s.best_nll for s in stats]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert best[-1] == stats[0].corpus_nll
        assert len(stats) == 3

    def test_recovers_synthetic_words(self):
        gold = synthetic_corpus(500, seed=2024)
        segmented, stats = run(strip_boundaries(gold), DpParseConfig())
        scores = evaluate_corpus(gold, segmented)
        assert len(stats) <= 10
        assert scores.token.f1 >= 0.60
        assert scores.boundary.f1 >= 0.80

    def test_stops_after_patience(self):
        corpus = Corpus((Sentence((0,)), Sentence((0,))), Alphabet(("a",)))
        _, stats = run(corpus, DpParseConfig(max_iters=10, patience=2))
        # A single-symbol corpus has one parse, so only the first iteration improves.
        assert len(stats) == 3

    def test_uniform_prior(self, small_synthetic: Corpus):
        corpus = strip_boundaries(small_synthetic)
        config = DpParseConfig(max_iters=2, init_max_len=40, symbol_prior="uniform")
        segmented, _ = run(corpus, config)
        assert len(segmented) == len(corpus)

    def test_no_short_sentences(self):
        corpus = synthetic_corpus(5, seed=1)
        with pytest.raises(InitializationError):
            run(strip_boundaries(corpus), DpParseConfig(init_max_len=2))

    def test_iteration_stats_json(self):
        stats = IterationStats(0, 10.5, 3, 7, 10.5)
        assert IterationStats.from_json(stats.to_json()) == stats
