"""The ``dpparse`` command line tool.

Every command prints a JSON report to stdout (or ``--report``) and a plain
table of the same result to stderr. Exit status is 0 on success, 1 on
errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Any, Callable, Sequence

from . import balance as balancing
from .bench import (
    MinimalPair,
    ScoreTable,
    blimp_report,
    load_external_embeddings,
    load_external_scores,
    load_pairs,
    load_similarity,
    pair_accuracy,
    psimi_eval,
    remove_overlap,
    restrict_to,
    score_pairs,
    write_pairs,
    wuggy_report,
)
from .bpe import learn, read_bpe, write_bpe
from .common import (
    SEED_ENV,
    THREADS_ENV,
    RunConfig,
    package_version,
    read_lines,
    sha256_file,
)
from .dpparse import DpParseConfig, FinalParse, SymbolPrior, run_with_lexicon
from .exceptions import AlignmentError, ConfigurationError, Error
from .ngram import (
    AddK,
    NGramModel,
    context_embeddings,
    model_summary,
    perplexity,
    read_model,
    train,
    write_model,
)
from .pipeline import Pipeline, PipelineConfig
from .segeval import evaluate_corpus
from .text import (
    DEFAULT_BOUNDARY_MARKER,
    END_OF_WORD,
    AlphabetKind,
    Corpus,
    ModeKind,
    TokenizationMode,
    WordLexicon,
    load_corpus,
    strip_boundaries,
    word_frequencies,
    write_corpus,
)

_LOGGER = logging.getLogger(__name__)
_INTERNAL_PREFIX = "internal:"
_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class _Context:
    """State of one command invocation: arguments, settings and inputs read."""

    def __init__(self, args: argparse.Namespace, run: RunConfig) -> None:
        self.args = args
        self.run = run
        self.inputs: dict[str, str] = {}
        self.config: dict[str, Any] = {
            k: str(v) if isinstance(v, Path) else v
            for k, v in sorted(vars(args).items())
            if k not in ("func", "threads")
        }

    def input(self, path: str) -> str:
        """Records the hash of an input file and returns its path."""
        if path not in self.inputs:
            self.inputs[path] = sha256_file(path)
        return path

    def output(self, path: str | Path) -> Path:
        """Resolves an output path against the output directory."""
        path = Path(path)
        if path.is_absolute() or self.run.output_dir is None:
            return path
        return self.run.resolve(str(path))

    def corpus(self, path: str) -> Corpus:
        return load_corpus(self.input(path), self.args.kind, self.args.boundary_marker)

    def model(self, name: str) -> NGramModel:
        """Loads an n-gram model named ``internal:PATH`` or ``PATH``."""
        path = name.removeprefix(_INTERNAL_PREFIX)
        return read_model(self.input(path))


def _kind(value: str) -> AlphabetKind:
    try:
        return AlphabetKind.parse(value)
    except ConfigurationError as ex:
        raise argparse.ArgumentTypeError(str(ex)) from ex


def _named_path(value: str) -> tuple[str, str]:
    name, sep, path = value.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {value!r}")
    return name, path


def _add_global_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("global options")
    group.add_argument(
        "--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or 0)"
    )
    group.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"worker threads (default ${THREADS_ENV} or all cores)",
    )
    group.add_argument("--log-level", default="WARNING", choices=_LOG_LEVELS)
    group.add_argument("--output-dir", type=Path, default=None)
    group.add_argument(
        "--report",
        type=Path,
        default=None,
        help="write the JSON report here, not stdout",
    )


def _add_corpus_args(
    parser: argparse.ArgumentParser, flags: Sequence[str] = ("--corpus",)
) -> None:
    if flags:
        parser.add_argument(
            *flags,
            dest="corpus",
            required=True,
            help="corpus file, one sentence per line",
        )
    parser.add_argument(
        "--kind", type=_kind, default=AlphabetKind.CHARACTER, help="char or phone"
    )
    parser.add_argument("--boundary-marker", default=DEFAULT_BOUNDARY_MARKER)


def _add_dpparse_args(parser: argparse.ArgumentParser) -> None:
    defaults = DpParseConfig()
    group = parser.add_argument_group("segmenter")
    group.add_argument("--alpha0", type=float, default=defaults.alpha0)
    group.add_argument("--p-hash", type=float, default=defaults.p_hash)
    group.add_argument(
        "--beam", "--beam-n", dest="beam_n", type=int, default=defaults.beam_n
    )
    group.add_argument("--max-token-len", type=int, default=defaults.max_token_len)
    group.add_argument("--init-max-len", type=int, default=defaults.init_max_len)
    group.add_argument(
        "--iters",
        "--max-iters",
        dest="max_iters",
        type=int,
        default=defaults.max_iters,
    )
    group.add_argument(
        "--min-nll-improvement", type=float, default=defaults.min_nll_improvement
    )
    group.add_argument("--patience", type=int, default=defaults.patience)
    group.add_argument(
        "--symbol-prior",
        choices=[p.value for p in SymbolPrior],
        default=defaults.symbol_prior.value,
    )
    group.add_argument(
        "--invert-beam",
        action="store_true",
        help="keep the least probable parses instead of the most probable",
    )
    group.add_argument(
        "--no-leave-one-out",
        dest="leave_one_out",
        action="store_false",
        help="score each sentence with its own previous tokens counted",
    )
    group.add_argument(
        "--final-parse",
        choices=[p.value for p in FinalParse],
        default=defaults.final_parse.value,
        help="return the most probable or the sampled parses",
    )


def _dpparse_config(ctx: _Context) -> DpParseConfig:
    a = ctx.args
    return DpParseConfig(
        alpha0=a.alpha0,
        p_hash=a.p_hash,
        beam_n=a.beam_n,
        max_token_len=a.max_token_len,
        init_max_len=a.init_max_len,
        max_iters=a.max_iters,
        min_nll_improvement=a.min_nll_improvement,
        patience=a.patience,
        seed=ctx.run.seed,
        symbol_prior=SymbolPrior(a.symbol_prior),
        invert_beam=a.invert_beam,
        leave_one_out=a.leave_one_out,
        final_parse=FinalParse(a.final_parse),
        threads=ctx.run.threads,
    )


def _add_model_args(parser: argparse.ArgumentParser, default_mode: str) -> None:
    group = parser.add_argument_group("language model")
    group.add_argument("--order", type=int, choices=(1, 2), default=2)
    group.add_argument(
        "--mode", choices=[m.value for m in ModeKind], default=default_mode
    )
    group.add_argument(
        "--cap", type=int, default=None, help="lexicon size of word modes"
    )
    group.add_argument(
        "--keep-space", action="store_true", help="emit <SPACE> between words"
    )
    group.add_argument(
        "--smoothing-k",
        "--k",
        dest="k",
        type=float,
        default=None,
        help="add-k constant",
    )


def _mode(ctx: _Context) -> TokenizationMode:
    a = ctx.args
    return TokenizationMode(ModeKind(a.mode), a.cap, a.keep_space)


def _cmd_segment(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    corpus = ctx.corpus(args.corpus)
    config = _dpparse_config(ctx)
    ctx.config["dpparse"] = config.to_json()
    segmented, stats, lexicon = run_with_lexicon(strip_boundaries(corpus), config)

    out = ctx.output(args.out)
    write_corpus(segmented, out, args.boundary_marker)
    if args.stats:
        stats_path = ctx.output(args.stats)
    else:
        stats_path = out.with_name(out.name + ".stats.json")
    with open(stats_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(
            {
                "config": config.to_json(),
                "iterations": [s.to_json() for s in stats],
            },
            f,
            indent=2,
        )
        f.write("\n")
    result: dict[str, Any] = {
        "output": str(out),
        "stats": str(stats_path),
        "iterations": [s.to_json() for s in stats],
        "lexicon_size": len(lexicon),
    }
    if args.lexicon:
        entries = sorted(lexicon.counts.items(), key=lambda item: (-item[1], item[0]))
        path = ctx.output(args.lexicon)
        final = WordLexicon(tuple(entries), max(len(entries), 1))
        final.write_tsv(path, corpus.alphabet)
        result["lexicon"] = str(path)
    if args.evaluate:
        result["scores"] = evaluate_corpus(corpus, segmented).to_json()
    return result


def _check_same_text(gold: Corpus, predicted: Corpus) -> None:
    for index, (g, p) in enumerate(zip(gold, predicted)):
        if gold.alphabet.join(g.symbols) != predicted.alphabet.join(p.symbols):
            raise AlignmentError("gold and predicted symbols differ", index=index)


def _cmd_eval_seg(ctx: _Context) -> dict[str, Any]:
    gold = ctx.corpus(ctx.args.gold)
    predicted = ctx.corpus(ctx.args.predicted)
    scores = evaluate_corpus(gold, predicted)
    _check_same_text(gold, predicted)
    result = scores.to_json()
    result["sentences"] = len(gold)
    return result


def _cmd_train_ngram(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    corpus = ctx.corpus(args.corpus)
    if args.strip:
        corpus = strip_boundaries(corpus)
    bpe = read_bpe(ctx.input(args.bpe)) if args.bpe else None
    smoothing = AddK(args.k) if args.k is not None else None
    model = train(
        corpus, args.order, _mode(ctx), smoothing, bpe, threads=ctx.run.threads
    )
    out = ctx.output(args.out)
    write_model(model, out)
    result = model_summary(model)
    result["perplexity"] = perplexity(model, corpus)
    result["output"] = str(out)
    return result


def _cmd_score(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    model = ctx.model(args.model)
    out = ctx.output(args.out)
    count, total = 0, 0.0
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for number, line in read_lines(ctx.input(args.input)):
            if not line:
                continue
            score = model.score_text(line, args.boundary_marker)
            f.write(f"{number}\t{score!r}\n")
            count += 1
            total += score
    return {"items": count, "total_log_prob": total, "output": str(out)}


def _cmd_learn_bpe(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    corpus = ctx.corpus(args.corpus)
    model = learn(corpus, args.target, args.end_of_word)
    out = ctx.output(args.out)
    write_bpe(model, out)
    return {
        "merges": len(model.merges),
        "vocab_size": len(model.vocab),
        "target": args.target,
        "output": str(out),
    }


def _cmd_apply_bpe(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    model = read_bpe(ctx.input(args.bpe))
    corpus = load_corpus(
        ctx.input(args.corpus), model.alphabet.kind, args.boundary_marker
    )
    alphabet = model.alphabet
    # Phoneme units join their labels with "+" so units stay space-separated.
    glue = "" if alphabet.kind is AlphabetKind.CHARACTER else "+"
    units_total = 0
    round_trip = True
    out = ctx.output(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for sentence in corpus:
            rendered: list[str] = []
            for word in sentence.words():
                symbols = [alphabet.id_of(corpus.alphabet.symbols[s]) for s in word]
                units = model.encode(symbols)
                round_trip &= model.decode(units) == symbols
                units_total += len(units)
                rendered.append(
                    " ".join(
                        glue.join(
                            "</w>" if s == END_OF_WORD else alphabet.symbols[s]
                            for s in model.vocab[u]
                        )
                        for u in units
                    )
                )
            f.write(f" {args.boundary_marker} ".join(rendered) + "\n")
    return {"units": units_total, "round_trip": round_trip, "output": str(out)}


def _pair_scores(ctx: _Context, pairs: Sequence[MinimalPair]) -> ScoreTable:
    args = ctx.args
    if args.scores:
        return load_external_scores(ctx.input(args.scores))
    return score_pairs(pairs, ctx.model(args.scorer).score_text)


def _cmd_bench_wuggy(ctx: _Context) -> dict[str, Any]:
    pairs = load_pairs(ctx.input(ctx.args.pairs))
    return wuggy_report(pairs, _pair_scores(ctx, pairs))


def _cmd_bench_blimp(ctx: _Context) -> dict[str, Any]:
    pairs = load_pairs(ctx.input(ctx.args.pairs))
    return blimp_report(pairs, _pair_scores(ctx, pairs))


def _cmd_bench_simi(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    dev = load_similarity(ctx.input(args.dev), args.scale)
    tests = {
        name: load_similarity(ctx.input(path), args.scale) for name, path in args.test
    }
    if args.vocabulary:
        vocab_corpus = ctx.corpus(args.vocabulary)
        vocabulary = {
            vocab_corpus.alphabet.join(w) for w in word_frequencies(vocab_corpus)
        }
        dev = restrict_to(dev, vocabulary)
        tests = {name: restrict_to(items, vocabulary) for name, items in tests.items()}
    if args.remove_overlap:
        tests = {name: remove_overlap(dev, items) for name, items in tests.items()}
    if args.embeddings:
        embeddings = load_external_embeddings(ctx.input(args.embeddings))
    else:
        words = sorted(
            {
                w
                for items in (dev, *tests.values())
                for item in items
                for w in (item.word_a, item.word_b)
            }
        )
        embeddings = context_embeddings(ctx.model(args.scorer), words)
    result = psimi_eval(dev, tests, embeddings, threads=ctx.run.threads).to_json()
    result["items"] = {"dev": len(dev)}
    result["items"].update((name, len(items)) for name, items in tests.items())
    return result


def _scorers(ctx: _Context) -> list[Callable[[str], float]]:
    return [ctx.model(name).score_text for name in ctx.args.scorer]


def _cmd_balance(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    scorers = _scorers(ctx)
    if args.candidates:
        path = ctx.input(args.candidates)
        strata = None
        if args.corpus:
            corpus = ctx.corpus(args.corpus)
            frequencies = {
                corpus.alphabet.join(w): c for w, c in word_frequencies(corpus).items()
            }
            words = [line.split("\t", 1)[0] for _, line in read_lines(path) if line]
            length: Callable[[str], int] = (
                len if args.kind is AlphabetKind.CHARACTER else lambda w: len(w.split())
            )
            strata = balancing.assign_strata(words, frequencies, length)
        candidates = balancing.CandidateSet(
            tuple(balancing.load_candidates(path, strata)), tuple(scorers)
        )
        selection = balancing.balance_wuggy(
            candidates, ctx.run.seed, threads=ctx.run.threads
        )
    else:
        if args.size is None:
            raise ConfigurationError("--pairs needs --size")
        pairs = load_pairs(ctx.input(args.pairs))
        balance = (
            balancing.balance_blimp_by_category
            if args.per_category
            else balancing.balance_blimp
        )
        selection = balance(pairs, scorers, args.size, ctx.run.seed)

    out = ctx.output(args.out)
    write_pairs(selection.pairs, out)
    result = selection.to_json()
    if selection.pairs:
        result["accuracy"] = {
            name: pair_accuracy(
                selection.pairs, score_pairs(selection.pairs, scorer)
            )[0]
            for name, scorer in zip(args.scorer, scorers)
        }
    result["output"] = str(out)
    return result


def _cmd_pipeline(ctx: _Context) -> dict[str, Any]:
    args = ctx.args
    gold = ctx.corpus(args.corpus)
    config = PipelineConfig(
        kind=args.kind,
        boundary_marker=args.boundary_marker,
        dpparse=_dpparse_config(ctx),
        order=args.order,
        mode=_mode(ctx),
        k=args.k,
    )
    ctx.config["pipeline"] = config.to_json()
    wuggy = load_pairs(ctx.input(args.wuggy)) if args.wuggy else None
    blimp = load_pairs(ctx.input(args.blimp)) if args.blimp else None
    dev = tests = embeddings = None
    if args.simi_dev:
        dev = load_similarity(ctx.input(args.simi_dev), args.scale)
        tests = {
            name: load_similarity(ctx.input(path), args.scale)
            for name, path in args.simi_test
        }
    if args.embeddings:
        embeddings = load_external_embeddings(ctx.input(args.embeddings))

    result = Pipeline(config, ctx.run).run(gold, wuggy, blimp, dev, tests, embeddings)
    out = ctx.output(args.segmented)
    write_corpus(result.segmented, out, args.boundary_marker)
    report = result.to_json()
    report["segmented"] = str(out)
    if args.model_out:
        model_path = ctx.output(args.model_out)
        write_model(result.model, model_path)
        report["model"] = str(model_path)
    return report


def build_parser() -> argparse.ArgumentParser:
    """Returns the argument parser of the ``dpparse`` tool."""
    parser = argparse.ArgumentParser(
        prog="dpparse",
        allow_abbrev=False,
        description="Unsupervised word segmentation and spoken language benchmarks.",
    )
    parser.add_argument("--version", action="version", version=package_version())
    sub = parser.add_subparsers(dest="command", required=True)

    def command(
        name: str, func: Callable[[_Context], dict[str, Any]], summary: str
    ) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=summary, allow_abbrev=False)
        _add_global_args(p)
        p.set_defaults(func=func)
        return p

    p = command("segment", _cmd_segment, "segment a corpus without its boundaries")
    _add_corpus_args(p, ("--input", "--corpus"))
    _add_dpparse_args(p)
    p.add_argument(
        "--output", "--out", dest="out", required=True, help="segmented corpus"
    )
    p.add_argument("--stats", help="iteration statistics (default OUT.stats.json)")
    p.add_argument("--lexicon", help="write the final token lexicon as TSV")
    p.add_argument(
        "--evaluate", action="store_true", help="score against the input boundaries"
    )

    p = command("eval-seg", _cmd_eval_seg, "score a segmentation against gold")
    _add_corpus_args(p, flags=())
    p.add_argument("--gold", required=True)
    p.add_argument("--predicted", required=True)

    p = command("train-ngram", _cmd_train_ngram, "train a unigram or bigram model")
    _add_corpus_args(p)
    _add_model_args(p, ModeKind.CHAR.value)
    p.add_argument("--bpe", help="BPE model for --mode bpe")
    p.add_argument("--strip", action="store_true", help="hide the corpus boundaries")
    p.add_argument("--out", required=True, help="model file; .npz writes an archive")

    p = command("score", _cmd_score, "score lines of text with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--boundary-marker", default=DEFAULT_BOUNDARY_MARKER)

    p = command("learn-bpe", _cmd_learn_bpe, "learn BPE merges")
    _add_corpus_args(p)
    p.add_argument("--target", type=int, required=True, help="vocabulary size")
    p.add_argument("--end-of-word", action="store_true")
    p.add_argument("--out", required=True)

    p = command("apply-bpe", _cmd_apply_bpe, "encode a corpus with BPE merges")
    p.add_argument("--bpe", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--boundary-marker", default=DEFAULT_BOUNDARY_MARKER)
    p.add_argument("--out", required=True)

    for name, func, what in (
        ("bench-wuggy", _cmd_bench_wuggy, "spot-the-word"),
        ("bench-blimp", _cmd_bench_blimp, "acceptability"),
    ):
        p = command(name, func, f"{what} accuracy")
        p.add_argument("--pairs", required=True)
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument("--scorer", help="internal:MODEL")
        source.add_argument("--scores", help="external score file")

    p = command("bench-simi", _cmd_bench_simi, "similarity correlation")
    _add_corpus_args(p, flags=())
    p.add_argument("--dev", required=True)
    p.add_argument(
        "--test", type=_named_path, action="append", default=[], metavar="NAME=PATH"
    )
    p.add_argument("--scale", type=float, help="maximum of the human rating scale")
    p.add_argument("--vocabulary", help="corpus whose words the items must use")
    p.add_argument("--remove-overlap", action="store_true")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--scorer", help="internal:MODEL")
    source.add_argument("--embeddings", help="external embedding file")

    p = command("balance", _cmd_balance, "choose pairs that keep scorers at chance")
    _add_corpus_args(p, flags=())
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--candidates", help="word<TAB>stratum<TAB>candidates file")
    source.add_argument("--pairs", help="pair pool to subsample")
    p.add_argument("--scorer", action="append", required=True, help="n-gram model file")
    p.add_argument("--corpus", help="corpus giving frequencies for '-' strata")
    p.add_argument(
        "--size", type=int, help="pairs to choose (per category with --per-category)"
    )
    p.add_argument("--per-category", action="store_true")
    p.add_argument("--out", required=True)

    p = command("pipeline", _cmd_pipeline, "segment, train and benchmark end to end")
    _add_corpus_args(p)
    _add_dpparse_args(p)
    _add_model_args(p, ModeKind.WORD_FALLBACK.value)
    p.add_argument("--wuggy", help="spot-the-word pairs")
    p.add_argument("--blimp", help="acceptability pairs")
    p.add_argument("--simi-dev")
    p.add_argument(
        "--simi-test",
        type=_named_path,
        action="append",
        default=[],
        metavar="NAME=PATH",
    )
    p.add_argument("--scale", type=float)
    p.add_argument("--embeddings", help="external embeddings for pSIMI")
    p.add_argument("--segmented", default="segmented.txt")
    p.add_argument("--model-out")
    return parser


def _rows(value: Any, prefix: str = "") -> list[tuple[str, str]]:
    if isinstance(value, dict):
        rows: list[tuple[str, str]] = []
        for key, item in value.items():
            rows.extend(_rows(item, f"{prefix}.{key}" if prefix else str(key)))
        return rows
    if isinstance(value, list):
        return [(prefix, f"[{len(value)} items]")]
    if isinstance(value, float):
        return [(prefix, f"{value:.4f}")]
    return [(prefix, str(value))]


def format_table(result: dict[str, Any]) -> str:
    """Renders a result as two aligned columns."""
    rows = _rows(result)
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def main(argv: Sequence[str] | None = None) -> int:
    """Runs the tool and returns its exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        run = RunConfig.from_env(
            seed=args.seed,
            threads=args.threads,
            log_level=args.log_level,
            output_dir=args.output_dir,
        )
        if run.output_dir is not None:
            run.output_dir.mkdir(parents=True, exist_ok=True)
        _LOGGER.info("seed %d, %d thread(s)", run.seed, run.threads)
        ctx = _Context(args, run)
        result = args.func(ctx)
        report = {
            "command": args.command,
            "version": package_version(),
            "seed": run.seed,
            "config": ctx.config,
            "inputs": ctx.inputs,
            "result": result,
        }
        text = json.dumps(report, indent=2) + "\n"
        if args.report is not None:
            ctx.output(args.report).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        print(format_table(result), file=sys.stderr)
    except (Error, OSError) as ex:
        _LOGGER.debug("%s failed", args.command, exc_info=True)
        print(f"dpparse {args.command}: error: {ex}", file=sys.stderr)
        return 1
    return 0
