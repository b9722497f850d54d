"""Unsupervised word segmentation with a Dirichlet-process unigram lexicon.

Each iteration freezes a token lexicon, finds the N best parses of every
sentence with a dynamic-programming beam search over all spans, samples one
of them uniformly, and rebuilds the lexicon from the sampled tokens. A
sentence is scored against the counts of the other sentences only.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
import logging
import math
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    ConfigurationError,
    DomainError,
    InitializationError,
    PreconditionError,
)
from .text import Corpus, Sentence, boundary_spans

_LOGGER = logging.getLogger(__name__)

Token = tuple[int, ...]


class SymbolPrior(str, Enum):
    """How P(x) of the base distribution is estimated."""

    UNIGRAM = "unigram"
    UNIFORM = "uniform"


class FinalParse(str, Enum):
    """Which parse of the best iteration a run returns."""

    BEST = "best"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class DpParseConfig:
    """Parameters of a segmentation run."""

    alpha0: float = 20.0
    """Concentration of the Chinese restaurant process."""

    p_hash: float = 0.5
    """Word-end probability of the base distribution."""

    beam_n: int = 5
    """Number of parses kept per lattice position and sampled from."""

    max_token_len: int = 20
    """Longest span considered as a token."""

    init_max_len: int = 20
    """Sentences shorter than this seed the initial lexicon."""

    max_iters: int = 10
    """Upper bound on iterations."""

    min_nll_improvement: float = 0.0
    """Required drop below the best corpus NLL for an iteration to count."""

    patience: int = 2
    """Consecutive non-improving iterations tolerated before stopping."""

    seed: int = 0
    """Seed of every per-sentence random stream."""

    symbol_prior: SymbolPrior = SymbolPrior.UNIGRAM
    """Empirical symbol frequencies, or a uniform distribution."""

    invert_beam: bool = False
    """Keep the least probable parses instead of the most probable ones."""

    leave_one_out: bool = True
    """Score each sentence without the tokens of its own previous parse."""

    final_parse: FinalParse = FinalParse.BEST
    """Return the most probable or the sampled parses of the best iteration."""

    threads: int = 1
    """Worker threads for the per-sentence parse pass."""

    def __post_init__(self):
        object.__setattr__(self, "symbol_prior", SymbolPrior(self.symbol_prior))
        object.__setattr__(self, "final_parse", FinalParse(self.final_parse))
        if not self.alpha0 > 0:
            raise ConfigurationError("alpha0 must be positive")
        if not 0 < self.p_hash < 1:
            raise ConfigurationError("p_hash must lie strictly between 0 and 1")
        for name in ("beam_n", "max_token_len", "init_max_len", "max_iters", "threads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.min_nll_improvement < 0:
            raise ConfigurationError("min_nll_improvement must be non-negative")
        if self.patience < 1:
            raise ConfigurationError("patience must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    def to_json(self) -> dict[str, Any]:
        """Returns a JSON dict of this config without the thread count."""
        json = asdict(self)
        del json["threads"]
        json["symbol_prior"] = self.symbol_prior.value
        json["final_parse"] = self.final_parse.value
        return json

    @classmethod
    def from_json(cls, json: Mapping[str, Any]) -> DpParseConfig:
        """Creates a config from a JSON dict, ignoring unknown keys."""
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in json.items() if k in known})


@dataclass(frozen=True)
class TokenLexicon:
    """Token counts of the current segmentation."""

    counts: Mapping[Token, int] = field(default_factory=dict)
    """Count of every token type; zero counts are never stored."""

    total: int = field(init=False)
    """Sum of all counts."""

    def __post_init__(self):
        counts = {tuple(t): n for t, n in self.counts.items() if n}
        if any(n < 0 for n in counts.values()):
            raise DomainError("token counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", sum(counts.values()))

    @classmethod
    def from_tokens(cls, tokens: Iterable[Sequence[int]]) -> TokenLexicon:
        """Counts a stream of tokens."""
        return cls(Counter(tuple(t) for t in tokens))

    def __len__(self) -> int:
        return len(self.counts)

    def count(self, token: Sequence[int]) -> int:
        """Returns n_l for a token, 0 when unseen."""
        return self.counts.get(tuple(token), 0)


@dataclass(frozen=True)
class SymbolDistribution:
    """Per-symbol probabilities P(x) used by the base distribution."""

    probs: tuple[float, ...]
    """Probability of each symbol id."""

    log_probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs or any(not p > 0 for p in probs):
            raise DomainError("symbol probabilities must be strictly positive")
        if abs(math.fsum(probs) - 1.0) > 1e-9:
            raise DomainError("symbol probabilities must sum to 1")
        log_probs = np.log(np.asarray(probs, dtype=np.float64))
        object.__setattr__(self, "log_probs", log_probs)

    @classmethod
    def uniform(cls, size: int) -> SymbolDistribution:
        """Uniform probabilities over ``size`` symbols."""
        if size < 1:
            raise DomainError("alphabet is empty")
        return cls(tuple([1.0 / size] * size))

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> SymbolDistribution:
        """Empirical unigram symbol frequencies.

        :raise pydpparse.exceptions.DomainError: When an alphabet symbol never
            occurs.
        """
        counts = np.zeros(corpus.alphabet.size, dtype=np.float64)
        for sentence in corpus:
            np.add.at(counts, np.asarray(sentence.symbols, dtype=np.int64), 1)
        if counts.sum() == 0:
            raise DomainError("corpus has no symbols")
        return cls(tuple(counts / counts.sum()))

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Parse:
    """One segmentation of a sentence."""

    boundaries: tuple[int, ...]
    """Sorted interior boundary positions."""

    neg_log_prob: float
    """Sum of the span costs."""

    def spans(self, length: int) -> list[tuple[int, int]]:
        """Returns the token spans of this parse over a sentence of ``length``."""
        return boundary_spans(self.boundaries, length)


@dataclass(frozen=True)
class IterationStats:
    """Summary of one iteration."""

    iteration: int
    corpus_nll: float
    lexicon_size: int
    token_count: int
    best_nll: float

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, json: Mapping[str, Any]) -> IterationStats:
        return cls(**json)


def _validate_token(token: Sequence[int], dist: SymbolDistribution) -> None:
    if not token:
        raise DomainError("token must not be empty")
    for s in token:
        if not 0 <= s < len(dist):
            raise DomainError(f"symbol {s} is not in the distribution")


def base_log_prob(
    token: Sequence[int], dist: SymbolDistribution, p_hash: float
) -> float:
    """Returns log P0(token) = log p# + (M-1) log(1-p#) + sum log P(x_j)."""
    _validate_token(token, dist)
    return (
        math.log(p_hash)
        + (len(token) - 1) * math.log1p(-p_hash)
        + float(dist.log_probs[list(token)].sum())
    )


def base_prob(token: Sequence[int], dist: SymbolDistribution, p_hash: float) -> float:
    """Probability of a novel token under the base distribution.

    :raise pydpparse.exceptions.DomainError: On an empty token or a symbol
        outside the distribution.
    """
    return math.exp(base_log_prob(token, dist, p_hash))


def token_log_prob(
    token: Sequence[int],
    lexicon: TokenLexicon,
    alpha0: float,
    dist: SymbolDistribution,
    p_hash: float,
) -> float:
    """Returns log((n_l + alpha0 P0) / (total + alpha0))."""
    n = lexicon.count(token)
    log_new = math.log(alpha0) + base_log_prob(token, dist, p_hash)
    log_mass = np.logaddexp(math.log(n), log_new) if n else log_new
    return float(log_mass) - math.log(lexicon.total + alpha0)


def token_prob(
    token: Sequence[int],
    lexicon: TokenLexicon,
    alpha0: float,
    dist: SymbolDistribution,
    p_hash: float,
) -> float:
    """Chinese restaurant process posterior probability of a token."""
    return math.exp(token_log_prob(token, lexicon, alpha0, dist, p_hash))


def init_lexicon(corpus: Corpus, init_max_len: int) -> TokenLexicon:
    """Seeds the lexicon with every sentence shorter than ``init_max_len``.

    :raise pydpparse.exceptions.InitializationError: When no sentence is
        short enough.
    """
    if not len(corpus):
        raise PreconditionError("corpus is empty")
    lexicon = TokenLexicon.from_tokens(
        s.symbols for s in corpus if 0 < len(s) < init_max_len
    )
    if not lexicon.total:
        raise InitializationError(
            f"no sentence is shorter than {init_max_len} symbols"
        )
    return lexicon


class _Lattice:
    """Span costs and N-best search for one frozen model."""

    def __init__(
        self, lexicon: TokenLexicon, config: DpParseConfig, dist: SymbolDistribution
    ) -> None:
        self.lexicon = lexicon
        self.config = config
        self.dist = dist
        self._log_p_hash = math.log(config.p_hash)
        self._log_continue = math.log1p(-config.p_hash)
        self._log_alpha = math.log(config.alpha0)

    def span_costs(
        self,
        symbols: tuple[int, ...],
        cum: np.ndarray,
        end: int,
        held_out: Mapping[Token, int],
        log_denominator: float,
    ) -> np.ndarray:
        """Costs of the spans ending at ``end``, by ascending start."""
        first = max(0, end - self.config.max_token_len)
        starts = np.arange(first, end)
        counts = np.fromiter(
            (self._count(symbols[i:end], held_out) for i in range(first, end)),
            dtype=np.float64,
            count=end - first,
        )
        log_new = (
            self._log_alpha
            + self._log_p_hash
            + (end - starts - 1) * self._log_continue
            + (cum[end] - cum[starts])
        )
        log_counts = np.full_like(counts, -np.inf)
        np.log(counts, out=log_counts, where=counts > 0)
        return log_denominator - np.logaddexp(log_counts, log_new)

    def _count(self, token: Token, held_out: Mapping[Token, int]) -> int:
        return max(0, self.lexicon.counts.get(token, 0) - held_out.get(token, 0))

    def nbest(
        self, sentence: Sentence, held_out: Iterable[Sequence[int]] = ()
    ) -> list[Parse]:
        symbols = sentence.symbols
        n = len(symbols)
        if not n:
            raise PreconditionError("sentence is empty")
        for s in symbols:
            if not 0 <= s < len(self.dist):
                raise DomainError(f"symbol {s} is not in the distribution")
        held = Counter(tuple(t) for t in held_out)
        remaining = max(0, self.lexicon.total - sum(held.values()))
        log_denominator = math.log(remaining + self.config.alpha0)
        beam = self.config.beam_n
        cum = np.concatenate(([0.0], np.cumsum(self.dist.log_probs[list(symbols)])))

        cost = np.full((n + 1, beam), np.inf)
        back_start = np.zeros((n + 1, beam), dtype=np.int64)
        back_rank = np.zeros((n + 1, beam), dtype=np.int64)
        cost[0, 0] = 0.0
        for end in range(1, n + 1):
            first = max(0, end - self.config.max_token_len)
            spans = self.span_costs(symbols, cum, end, held, log_denominator)
            candidates = (cost[first:end] + spans[:, None]).ravel()
            if self.config.invert_beam:
                keys = np.where(np.isfinite(candidates), -candidates, np.inf)
            else:
                keys = candidates
            order = np.argsort(keys, kind="stable")[:beam]
            order = order[np.isfinite(candidates[order])]
            k = len(order)
            cost[end, :k] = candidates[order]
            back_start[end, :k] = first + order // beam
            back_rank[end, :k] = order % beam

        parses: list[Parse] = []
        for rank in range(beam):
            total = cost[n, rank]
            if not np.isfinite(total):
                break
            boundaries: list[int] = []
            end, r = n, rank
            while end > 0:
                start = int(back_start[end, r])
                r = int(back_rank[end, r])
                if start > 0:
                    boundaries.append(start)
                end = start
            parses.append(Parse(tuple(reversed(boundaries)), float(total)))
        parses.sort(key=lambda p: p.neg_log_prob)
        return parses


def nbest_parses(
    sentence: Sentence,
    lexicon: TokenLexicon,
    config: DpParseConfig,
    dist: SymbolDistribution,
    held_out: Iterable[Sequence[int]] = (),
) -> list[Parse]:
    """Returns up to ``beam_n`` parses sorted by ascending cost.

    A span costs ``-log token_prob(span)``; spans are at most
    ``max_token_len`` symbols long. Tokens in ``held_out`` are removed from
    the lexicon counts and total before scoring.

    :raise pydpparse.exceptions.PreconditionError: On an empty sentence.
    """
    return _Lattice(lexicon, config, dist).nbest(sentence, held_out)


def sample_parse(nbest: Sequence[Parse], rng: np.random.Generator) -> Parse:
    """Draws one parse uniformly from an N-best list.

    :raise pydpparse.exceptions.PreconditionError: On an empty list.
    """
    if not nbest:
        raise PreconditionError("cannot sample from an empty n-best list")
    return nbest[int(rng.integers(len(nbest)))]


def sentence_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    """Returns the random stream of one sentence in one iteration."""
    return np.random.default_rng([seed, iteration, index])


def _spans_tokens(sentence: Sentence, parse: Parse) -> Iterable[Token]:
    for i, j in parse.spans(len(sentence)):
        if j > i:
            yield sentence.symbols[i:j]


def segment_corpus(
    corpus: Corpus,
    lexicon: TokenLexicon,
    dist: SymbolDistribution,
    config: DpParseConfig,
    iteration: int = 0,
    previous: Sequence[Parse | None] | None = None,
) -> tuple[list[Parse], list[Parse]]:
    """Parses every sentence under one frozen model.

    Returns the sampled parse and the most probable parse of each sentence.
    With ``config.leave_one_out``, the tokens of ``previous[k]`` are held
    out while sentence ``k`` is scored. Results do not depend on
    ``config.threads``.
    """
    lattice = _Lattice(lexicon, config, dist)

    def parse_one(item: tuple[int, Sentence]) -> tuple[Parse, Parse]:
        index, sentence = item
        held: Iterable[Token] = ()
        if config.leave_one_out and previous is not None:
            parse = previous[index]
            if parse is not None:
                held = _spans_tokens(sentence, parse)
        nbest = lattice.nbest(sentence, held)
        rng = sentence_rng(config.seed, iteration, index)
        return sample_parse(nbest, rng), nbest[0]

    items = [(k, s) for k, s in enumerate(corpus) if len(s)]
    if config.threads == 1:
        results = [parse_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(parse_one, items))
    sampled = [Parse((), 0.0)] * len(corpus)
    best = [Parse((), 0.0)] * len(corpus)
    for (index, _), (drawn, top) in zip(items, results):
        sampled[index] = drawn
        best[index] = top
    return sampled, best


def _tokens(corpus: Corpus, parses: Sequence[Parse]) -> Iterable[Token]:
    for sentence, parse in zip(corpus, parses):
        yield from _spans_tokens(sentence, parse)


def run_with_lexicon(
    corpus: Corpus, config: DpParseConfig
) -> tuple[Corpus, list[IterationStats], TokenLexicon]:
    """Like :func:`run`, also returning the lexicon of the returned parses."""
    if config.symbol_prior is SymbolPrior.UNIFORM:
        dist = SymbolDistribution.uniform(corpus.alphabet.size)
    else:
        dist = SymbolDistribution.from_corpus(corpus)
    lexicon = init_lexicon(corpus, config.init_max_len)
    _LOGGER.info(
        "initial lexicon: %d types, %d tokens", len(lexicon), lexicon.total
    )

    # Each seeding sentence is a single token of the initial lexicon.
    previous: list[Parse | None] = [
        Parse((), 0.0) if 0 < len(s) < config.init_max_len else None for s in corpus
    ]
    stats: list[IterationStats] = []
    best_nll = math.inf
    best_parses: list[Parse] | None = None
    stale = 0
    for iteration in range(config.max_iters):
        sampled, top = segment_corpus(
            corpus, lexicon, dist, config, iteration, previous
        )
        nll = math.fsum(p.neg_log_prob for p in top)
        new_lexicon = TokenLexicon.from_tokens(_tokens(corpus, sampled))
        if nll < best_nll - config.min_nll_improvement:
            best_nll = nll
            best_parses = top if config.final_parse is FinalParse.BEST else sampled
            stale = 0
        else:
            stale += 1
        stats.append(
            IterationStats(
                iteration=iteration,
                corpus_nll=nll,
                lexicon_size=len(new_lexicon),
                token_count=new_lexicon.total,
                best_nll=best_nll,
            )
        )
        _LOGGER.info(
            "iteration %d: nll=%.3f best=%.3f lexicon=%d tokens=%d",
            iteration,
            nll,
            best_nll,
            len(new_lexicon),
            new_lexicon.total,
        )
        if stale >= config.patience:
            _LOGGER.debug("no improvement for %d iteration(s), stopping", stale)
            break
        lexicon = new_lexicon
        previous = list(sampled)

    assert best_parses is not None
    segmented = corpus.with_sentences(
        Sentence(s.symbols, p.boundaries) for s, p in zip(corpus, best_parses)
    )
    return segmented, stats, TokenLexicon.from_tokens(_tokens(corpus, best_parses))


def run(corpus: Corpus, config: DpParseConfig) -> tuple[Corpus, list[IterationStats]]:
    """Segments a corpus, iterating until the corpus NLL stops improving.

    The corpus NLL of an iteration sums the cost of every sentence's most
    probable parse; the next lexicon is rebuilt from the sampled parses.
    Returns the segmentation of the best iteration, whose boundaries are
    visible, and the per-iteration statistics.

    :raise pydpparse.exceptions.InitializationError: When the lexicon cannot
        be seeded.
    """
    segmented, stats, _ = run_with_lexicon(corpus, config)
    return segmented, stats
