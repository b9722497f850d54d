"""End-to-end run: unsupervised segmentation, then language modeling on its output."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
from typing import Any, Mapping, Sequence

from .bench import (
    EmbeddingSet,
    MinimalPair,
    PsimiResult,
    SimilarityItem,
    blimp_report,
    psimi_eval,
    score_pairs,
    wuggy_report,
)
from .common import RunConfig
from .dpparse import DpParseConfig, IterationStats, run
from .exceptions import UndefinedCorrelationError
from .ngram import AddK, NGramModel, context_embeddings, default_smoothing, train
from .segeval import SegScores, evaluate_corpus
from .text import (
    DEFAULT_BOUNDARY_MARKER,
    AlphabetKind,
    Corpus,
    TokenizationMode,
    strip_boundaries,
)

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of every stage of a pipeline run."""

    kind: AlphabetKind = AlphabetKind.CHARACTER
    """Alphabet kind of the gold corpus."""

    boundary_marker: str = DEFAULT_BOUNDARY_MARKER
    """Word separator of phoneme corpora."""

    dpparse: DpParseConfig = field(default_factory=DpParseConfig)
    """Segmenter settings; seed and threads come from the RunConfig."""

    order: int = 2
    """Order of the language model trained on the segmentation."""

    mode: TokenizationMode = field(default_factory=TokenizationMode.word_fallback)
    """Units of the language model."""

    k: float | None = None
    """Add-k constant; None picks the mode default."""

    def __post_init__(self):
        object.__setattr__(self, "kind", AlphabetKind.parse(self.kind))

    @property
    def smoothing(self) -> AddK:
        return default_smoothing(self.mode) if self.k is None else AddK(self.k)

    def to_json(self) -> dict[str, Any]:
        """Returns a JSON dict of this config."""
        return {
            "kind": self.kind.value,
            "boundary_marker": self.boundary_marker,
            "dpparse": self.dpparse.to_json(),
            "order": self.order,
            "mode": self.mode.to_json(),
            "k": self.smoothing.k,
        }

    @classmethod
    def from_json(cls, json: Mapping[str, Any]) -> PipelineConfig:
        """Creates a config from a JSON dict."""
        return cls(
            kind=AlphabetKind.parse(json.get("kind", "character")),
            boundary_marker=json.get("boundary_marker", DEFAULT_BOUNDARY_MARKER),
            dpparse=DpParseConfig.from_json(json.get("dpparse", {})),
            order=json.get("order", 2),
            mode=TokenizationMode.from_json(json["mode"])
            if "mode" in json
            else TokenizationMode.word_fallback(),
            k=json.get("k"),
        )


@dataclass(frozen=True)
class PipelineResult:
    """Scores of one pipeline run."""

    segmentation: SegScores
    iterations: list[IterationStats]
    segmented: Corpus = field(repr=False)
    model: NGramModel = field(repr=False)
    wuggy: dict[str, Any] | None = None
    blimp: dict[str, Any] | None = None
    simi: PsimiResult | None = None

    def to_json(self) -> dict[str, Any]:
        """Returns a JSON dict of this result, leaving out the corpus and model."""
        return {
            "segmentation": self.segmentation.to_json(),
            "iterations": [s.to_json() for s in self.iterations],
            "wuggy": self.wuggy,
            "blimp": self.blimp,
            "simi": None if self.simi is None else self.simi.to_json(),
        }


class Pipeline:
    """Segments a corpus without its boundaries and benchmarks a model of the result."""

    def __init__(self, config: PipelineConfig, run_config: RunConfig) -> None:
        """Instantiates a Pipeline.

        :param config: Stage settings.
        :param run_config: Seed and thread count, which override the
            segmenter's own.
        """
        self.config = config
        self.run_config = run_config
        self.dpparse_config = replace(
            config.dpparse, seed=run_config.seed, threads=run_config.threads
        )

    def segment(self, gold: Corpus) -> tuple[Corpus, list[IterationStats]]:
        """Hides the gold boundaries and segments the corpus."""
        return run(strip_boundaries(gold), self.dpparse_config)

    def train(self, segmented: Corpus) -> NGramModel:
        """Trains the language model on a segmentation."""
        return train(
            segmented,
            self.config.order,
            self.config.mode,
            self.config.smoothing,
            threads=self.run_config.threads,
        )

    def run(
        self,
        gold: Corpus,
        wuggy: Sequence[MinimalPair] | None = None,
        blimp: Sequence[MinimalPair] | None = None,
        simi_dev: Sequence[SimilarityItem] | None = None,
        simi_tests: Mapping[str, Sequence[SimilarityItem]] | None = None,
        embeddings: EmbeddingSet | None = None,
    ) -> PipelineResult:
        """Runs every stage.

        Benchmarks are skipped when their items are not given. pSIMI uses
        ``embeddings`` when given, and the model's context embeddings
        otherwise.

        :raise pydpparse.exceptions.InitializationError: When the segmenter
            cannot seed its lexicon.
        :raise pydpparse.exceptions.CoverageError: When external embeddings
            miss a similarity word.
        """
        segmented, iterations = self.segment(gold)
        scores = evaluate_corpus(gold, segmented)
        _LOGGER.info(
            "segmentation token F %.4f, boundary F %.4f",
            scores.token.f1,
            scores.boundary.f1,
        )
        model = self.train(segmented)

        wuggy_result = blimp_result = None
        if wuggy:
            wuggy_result = wuggy_report(wuggy, score_pairs(wuggy, model.score_text))
        if blimp:
            blimp_result = blimp_report(blimp, score_pairs(blimp, model.score_text))

        simi_result = None
        if simi_dev:
            tests = dict(simi_tests or {})
            if embeddings is None:
                words = {
                    w
                    for items in (simi_dev, *tests.values())
                    for item in items
                    for w in (item.word_a, item.word_b)
                }
                embeddings = context_embeddings(model, sorted(words))
            try:
                simi_result = psimi_eval(
                    simi_dev, tests, embeddings, threads=self.run_config.threads
                )
            except UndefinedCorrelationError as ex:
                _LOGGER.warning("pSIMI skipped: %s", ex)

        return PipelineResult(
            scores,
            iterations,
            segmented,
            model,
            wuggy_result,
            blimp_result,
            simi_result,
        )
