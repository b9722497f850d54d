"""Unsupervised word segmentation and spoken language modeling benchmarks."""

from .dpparse import DpParseConfig, run
from .ngram import NGramModel, train
from .pipeline import Pipeline, PipelineConfig
from .segeval import evaluate_corpus
from .text import Alphabet, Corpus, Sentence, TokenizationMode, load_corpus

__all__ = (
    "Alphabet",
    "Corpus",
    "DpParseConfig",
    "NGramModel",
    "Pipeline",
    "PipelineConfig",
    "Sentence",
    "TokenizationMode",
    "evaluate_corpus",
    "load_corpus",
    "run",
    "train",
)
