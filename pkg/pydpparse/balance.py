"""Stochastic selection of benchmark pairs that keeps baseline scorers at chance.

A scorer maps a string to a real score, typically
:meth:`pydpparse.ngram.NGramModel.score_text`. A scorer gets a pair right
when it scores the positive member higher; the objective of a selection is
the summed distance of every scorer's accuracy from 0.5.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import os
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .bench import MinimalPair
from .common import read_lines
from .exceptions import ConfigurationError, DomainError, ParseError, PreconditionError

_LOGGER = logging.getLogger(__name__)

Scorer = Callable[[str], float]
Stratum = tuple[str, str]
"""(frequency bin, length bin)."""

OOV_BIN = "oov"
FREQUENCY_BINS = ("q1", "q2", "q3", "q4")
"""Frequency quartiles, least frequent first."""

LENGTH_EDGES = (3, 5, 7)
_TOLERANCE = 1e-12


def stratum_label(stratum: Stratum) -> str:
    """Renders a stratum as ``frequency/length``."""
    return "/".join(stratum)


def parse_stratum(label: str) -> Stratum:
    """Inverse of :func:`stratum_label`.

    :raise pydpparse.exceptions.DomainError: When the label has no ``/``.
    """
    frequency, sep, length = label.partition("/")
    if not sep or not frequency or not length:
        raise DomainError(f"stratum {label!r} is not frequency/length")
    return frequency, length


@dataclass(frozen=True)
class CandidateWord:
    """A word with its stratum and matching nonword candidates."""

    word: str
    stratum: Stratum
    candidates: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise DomainError(f"word {self.word!r} has no candidates")


@dataclass(frozen=True)
class CandidateSet:
    """Words to match and the scorers to balance against."""

    words: tuple[CandidateWord, ...]
    scorers: tuple[Scorer, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "scorers", tuple(self.scorers))
        if not self.scorers:
            raise ConfigurationError("balancing needs at least one scorer")

    @property
    def strata(self) -> list[Stratum]:
        """Strata present in the set, sorted."""
        return sorted({w.stratum for w in self.words})


@dataclass(frozen=True)
class BalancedSelection:
    """The chosen pairs and how far their scorer accuracies are from chance."""

    pairs: tuple[MinimalPair, ...]
    objective: float
    stratum_objectives: dict[str, float] = field(default_factory=dict)
    """Objective of each stratum or paradigm on its own."""

    def to_json(self) -> dict[str, Any]:
        return {
            "pairs": len(self.pairs),
            "objective": self.objective,
            "stratum_objectives": dict(self.stratum_objectives),
        }


class _ScoreCache:
    """Memoizes scorer outputs per string."""

    def __init__(self, scorers: Sequence[Scorer]) -> None:
        self.scorers = scorers
        self._scores: dict[str, np.ndarray] = {}

    def __call__(self, text: str) -> np.ndarray:
        scores = self._scores.get(text)
        if scores is None:
            scores = self._scores[text] = np.array([s(text) for s in self.scorers])
        return scores

    def credit(self, positive: str, negative: str) -> np.ndarray:
        """Per-scorer credit: 1 when positive is higher, 0.5 on ties, else 0."""
        pos, neg = self(positive), self(negative)
        return np.where(pos > neg, 1.0, np.where(pos == neg, 0.5, 0.0))


def _objective(wins: np.ndarray, n: int) -> float:
    return float(np.abs(wins / n - 0.5).sum())


def objective(pairs: Sequence[MinimalPair], scorers: Sequence[Scorer]) -> float:
    """Returns the sum over scorers of ``|accuracy - 0.5|``; ties count 0.5.

    :raise pydpparse.exceptions.PreconditionError: When there are no pairs.
    """
    if not pairs:
        raise PreconditionError("the objective of an empty selection is undefined")
    cache = _ScoreCache(scorers)
    wins = np.zeros(len(scorers))
    for pair in pairs:
        wins += cache.credit(pair.positive, pair.negative)
    return _objective(wins, len(pairs))


def _balance_stratum(
    words: Sequence[tuple[int, CandidateWord]],
    cache: _ScoreCache,
    rng: np.random.Generator,
) -> tuple[dict[int, str], float]:
    wins = np.zeros(len(cache.scorers))
    chosen: dict[int, str] = {}
    current = 0.0
    for k in rng.permutation(len(words)):
        index, entry = words[k]
        pick: str | None = None
        for c in rng.permutation(len(entry.candidates)):
            candidate = entry.candidates[c]
            credit = cache.credit(entry.word, candidate)
            value = _objective(wins + credit, len(chosen) + 1)
            if not chosen or value <= current + _TOLERANCE:
                pick = candidate
                break
        if pick is None:
            pick = entry.candidates[int(rng.integers(len(entry.candidates)))]
        wins += cache.credit(entry.word, pick)
        chosen[index] = pick
        current = _objective(wins, len(chosen))
    return chosen, current


def balance_wuggy(
    candidates: CandidateSet,
    seed: int,
    strata: Iterable[Stratum] | None = None,
    threads: int = 1,
) -> BalancedSelection:
    """Chooses one nonword per word, stratum by stratum.

    Within a stratum words are visited in random order. Each word takes the
    first of its candidates, in random order, that does not increase the
    stratum objective, or a random candidate when none qualifies. Every
    stratum draws from its own generator seeded with ``(seed, stratum
    index)``, so the result does not depend on ``threads``.

    :param strata: Strata to balance; defaults to every stratum in the set.
        Requested strata without words are skipped with a warning.
    """
    all_strata = candidates.strata
    requested = all_strata if strata is None else sorted(set(strata))
    by_stratum: dict[Stratum, list[tuple[int, CandidateWord]]] = {
        s: [] for s in requested
    }
    for index, entry in enumerate(candidates.words):
        if entry.stratum in by_stratum:
            by_stratum[entry.stratum].append((index, entry))
    jobs: list[tuple[int, Stratum]] = []
    for stratum in requested:
        if not by_stratum[stratum]:
            _LOGGER.warning("stratum %s has no words, skipping", stratum_label(stratum))
            continue
        jobs.append((len(jobs), stratum))

    def run(job: tuple[int, Stratum]) -> tuple[dict[int, str], float]:
        number, stratum = job
        rng = np.random.default_rng([seed, number])
        cache = _ScoreCache(candidates.scorers)
        return _balance_stratum(by_stratum[stratum], cache, rng)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    chosen: dict[int, str] = {}
    stratum_objectives: dict[str, float] = {}
    for (_, stratum), (picks, value) in zip(jobs, results):
        chosen.update(picks)
        stratum_objectives[stratum_label(stratum)] = value
        _LOGGER.info(
            "stratum %s: %d words, objective %.4f",
            stratum_label(stratum),
            len(picks),
            value,
        )

    pairs = tuple(
        MinimalPair(
            f"wuggy-{index}",
            stratum_label(entry.stratum),
            entry.word,
            chosen[index],
            {"frequency": entry.stratum[0], "length": entry.stratum[1]},
        )
        for index, entry in enumerate(candidates.words)
        if index in chosen
    )
    total = objective(pairs, candidates.scorers) if pairs else 0.0
    return BalancedSelection(pairs, total, stratum_objectives)


def _grow(
    pool: Sequence[MinimalPair],
    k: int,
    cache: _ScoreCache,
    rng: np.random.Generator,
) -> tuple[list[MinimalPair], float]:
    credits = [cache.credit(p.positive, p.negative) for p in pool]
    unchosen = list(range(len(pool)))
    chosen: list[int] = []
    wins = np.zeros(len(cache.scorers))
    current = 0.0
    while len(chosen) < k:
        added = False
        order = [unchosen[i] for i in rng.permutation(len(unchosen))]
        for index in order:
            if len(chosen) == k:
                break
            value = _objective(wins + credits[index], len(chosen) + 1)
            if not chosen or value <= current + _TOLERANCE:
                chosen.append(index)
                wins += credits[index]
                current = value
                added = True
        if not added:
            index = order[0]
            chosen.append(index)
            wins += credits[index]
            current = _objective(wins, len(chosen))
        taken = set(chosen)
        unchosen = [i for i in unchosen if i not in taken]
    return [pool[i] for i in sorted(chosen)], current


def balance_blimp(
    pairs: Sequence[MinimalPair],
    scorers: Sequence[Scorer],
    k: int,
    seed: int,
) -> BalancedSelection:
    """Grows a subset of ``k`` pairs whose scorer accuracies stay near 0.5.

    Unchosen pairs are visited in random passes; a pair joins when it does
    not increase the objective. A pass that adds nothing adds its first pair
    anyway. The chosen pairs keep their input order.

    :raise pydpparse.exceptions.PreconditionError: When ``k`` exceeds the
        number of pairs.
    """
    if not scorers:
        raise ConfigurationError("balancing needs at least one scorer")
    if k < 1:
        raise ConfigurationError("selection size must be positive")
    if k > len(pairs):
        raise PreconditionError(f"cannot choose {k} pairs out of {len(pairs)}")
    rng = np.random.default_rng([seed])
    chosen, value = _grow(pairs, k, _ScoreCache(scorers), rng)
    return BalancedSelection(tuple(chosen), value)


def balance_blimp_by_category(
    pairs: Sequence[MinimalPair],
    scorers: Sequence[Scorer],
    k: int,
    seed: int,
) -> BalancedSelection:
    """Balances every paradigm on its own, choosing ``k`` pairs from each.

    Paradigms are seeded with ``(seed, paradigm index)`` in sorted name
    order. Some paradigms cannot be balanced; their objective is reported
    rather than enforced.
    """
    if not scorers:
        raise ConfigurationError("balancing needs at least one scorer")
    categories: dict[str, list[MinimalPair]] = {}
    for pair in pairs:
        categories.setdefault(pair.category, []).append(pair)
    chosen: list[MinimalPair] = []
    objectives: dict[str, float] = {}
    cache = _ScoreCache(scorers)
    for number, name in enumerate(sorted(categories)):
        pool = categories[name]
        if k > len(pool):
            raise PreconditionError(
                f"paradigm {name} has {len(pool)} pairs, fewer than {k}"
            )
        picks, value = _grow(pool, k, cache, np.random.default_rng([seed, number]))
        chosen.extend(picks)
        objectives[name] = value
        _LOGGER.info("paradigm %s: objective %.4f", name, value)
    total = objective(chosen, scorers) if chosen else 0.0
    return BalancedSelection(tuple(chosen), total, objectives)


def frequency_edges(counts: Iterable[int]) -> tuple[float, float, float]:
    """Quartile edges of the positive counts.

    :raise pydpparse.exceptions.PreconditionError: When no count is positive.
    """
    positive = [c for c in counts if c > 0]
    if not positive:
        raise PreconditionError("no in-vocabulary words to compute quartiles from")
    q1, q2, q3 = np.quantile(np.asarray(positive, dtype=np.float64), [0.25, 0.5, 0.75])
    return float(q1), float(q2), float(q3)


def frequency_bin(count: int, edges: Sequence[float]) -> str:
    """Returns ``oov`` for unseen words, else the quartile ``q1``..``q4``."""
    if count <= 0:
        return OOV_BIN
    return FREQUENCY_BINS[int(np.searchsorted(np.asarray(edges), count, side="left"))]


def length_bin(length: int) -> str:
    """Buckets a word length into ``1-3``, ``4-5``, ``6-7`` or ``8+``."""
    if length < 1:
        raise DomainError("word length must be positive")
    lower = 1
    for edge in LENGTH_EDGES:
        if length <= edge:
            return f"{lower}-{edge}"
        lower = edge + 1
    return f"{lower}+"


def assign_strata(
    words: Iterable[str],
    frequencies: Mapping[str, int],
    length: Callable[[str], int] = len,
) -> dict[str, Stratum]:
    """Assigns every word its (frequency quartile, length bin).

    Quartile edges come from the in-vocabulary words being assigned; words
    missing from ``frequencies`` form the ``oov`` frequency stratum.
    """
    words = list(dict.fromkeys(words))
    edges = frequency_edges(frequencies.get(w, 0) for w in words)
    return {
        w: (frequency_bin(frequencies.get(w, 0), edges), length_bin(length(w)))
        for w in words
    }


def load_candidates(
    path: str | os.PathLike[str],
    strata: Mapping[str, Stratum] | None = None,
) -> list[CandidateWord]:
    """Reads ``word<TAB>stratum<TAB>candidate1,candidate2,...`` lines.

    A ``-`` stratum is looked up in ``strata``.

    :raise pydpparse.exceptions.ParseError: On malformed lines.
    """
    entries: list[CandidateWord] = []
    for lineno, line in read_lines(path):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                "expected three tab-separated fields", path=str(path), line=lineno
            )
        word, label, raw = fields
        candidates = tuple(c for c in raw.split(",") if c)
        try:
            if label == "-":
                if strata is None or word not in strata:
                    raise DomainError(f"no stratum for {word!r}")
                stratum = strata[word]
            else:
                stratum = parse_stratum(label)
            entries.append(CandidateWord(word, stratum, candidates))
        except DomainError as ex:
            raise ParseError(str(ex), path=str(path), line=lineno) from ex
    return entries
