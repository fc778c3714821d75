"""Command line front end: ``paramine <command> [options]``.

Every command accepts ``--config FILE`` with flat ``key=value`` lines (keys
are the long option names with dashes or underscores); explicit flags win
over the file. Each run writes ``<out>.manifest.json`` next to its main
output. Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .checkpoint import CheckpointError
from .corpus import CorpusFormatError, TokenizerConfig, load_pairs, save_pairs
from .evaluation import StsDataset, read_sts, sts_evaluate, write_sts
from .filters import (METRICS, FilterConfig, FilterConfigError, ScoredCorpus, SizeError, TuningGrid,
                      apply_filters, score_pairs, tune_filter)
from .lm import NgramLM
from .refclass import (ReferenceClassifier, classifier_report_table, format_correlations,
                       format_report_table, metric_correlations)
from .synthgen import gen_mt_like, gen_paraphrase_corpus, kbest_lists, labeled_sentences
from .textstats import IdfTable, build_idf, corpus_diff_report, format_diff_report
from .trainer import ParaphraseEmbedder

log = logging.getLogger("paramine")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DATA_ERRORS = (CorpusFormatError, CheckpointError, FilterConfigError, SizeError, ValueError, OSError,
               KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# -- config files and manifests ------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment line."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _convert(action, raw: str):
    if action.nargs == 0:  # store_true / store_false
        return raw.lower() in ("1", "true", "yes", "on")
    conv = action.type or str
    if action.nargs in ("+", "*") or isinstance(action.nargs, int):
        vals = [conv(x) for x in raw.replace(",", " ").split()]
        if isinstance(action.nargs, int) and len(vals) != action.nargs:
            raise UsageError(f"config key {action.dest} needs {action.nargs} values")
        return vals
    return conv(raw)


def apply_config(parser: argparse.ArgumentParser, kv: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for k, raw in kv.items():
        if k not in actions or k in ("help", "config"):
            raise UsageError(f"unknown config key {k!r}")
        try:
            defaults[k] = _convert(actions[k], raw)
        except ValueError as exc:
            raise UsageError(f"bad value for config key {k!r}: {exc}") from None
    parser.set_defaults(**defaults)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects what a command read and wrote, then writes the manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()

    def read(self, path):
        if path and os.path.exists(path):
            self.inputs[str(path)] = file_digest(path)
        return path

    def wrote(self, path):
        self.outputs.append(str(path))
        return path

    def write_text(self, path, text: str):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return self.wrote(path)

    def finish(self, primary) -> str:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func",)}
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": config,
            "seed": getattr(self.args, "seed", None),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            **self.extra,
        }
        path = f"{primary}.manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


# -- shared helpers ----------------------------------------------------------

def _tok(args) -> TokenizerConfig:
    return TokenizerConfig(lowercase=args.lowercase)


def _load(run: Run, path, args):
    corpus, report = load_pairs(run.read(path), tok=_tok(args), strict=args.strict)
    run.extra.setdefault("load_reports", {})[str(path)] = json.loads(report.to_json())
    if report.skipped:
        log.warning("%s: skipped %d malformed records", path, report.skipped)
    return corpus


def _load_sts(run: Run, paths, args) -> list[StsDataset]:
    return [read_sts(run.read(p), _tok(args)) for p in paths]


def _embedder_from_args(args) -> ParaphraseEmbedder:
    return ParaphraseEmbedder(model=args.model, dim=args.dim, hidden_size=args.hidden_size,
                              batch_size=args.batch_size, margin=args.margin, lambda_c=args.lambda_c,
                              lambda_w=args.lambda_w, learning_rate=args.lr, epochs=args.epochs,
                              min_count=args.min_count, embeddings=args.embeddings,
                              init_scale=args.init_scale, random_state=args.seed)


def _filter_from_args(args) -> FilterConfig:
    return FilterConfig(
        length_range=tuple(args.length_range) if args.length_range else None,
        length_side=args.length_side,
        cost_max=args.cost_max,
        ppl_max=args.ppl_max,
        pr_min=args.pr_min,
        overlap=(int(args.overlap[0]), args.overlap[1], args.overlap[2]) if args.overlap else None,
        bleu_range=tuple(args.bleu_range) if args.bleu_range else None,
        target_size=args.target_size,
        seed=args.seed,
    )


def read_scores(path, corpus) -> ScoredCorpus:
    """Read a metric table written by ``paramine score``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "index" or set(header[1:]) - set(METRICS):
            raise ValueError(f"{path}: not a score table")
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    if len(rows) != len(corpus):
        raise ValueError(f"{path}: {len(rows)} score rows for {len(corpus)} pairs")
    cols = np.array([[float(x) for x in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)
    return ScoredCorpus(corpus, {m: cols[:, j].copy() for j, m in enumerate(header[1:])})


def _scored(run: Run, corpus, args, needed: set[str]) -> ScoredCorpus:
    if args.scores:
        return read_scores(run.read(args.scores), corpus)
    lm = NgramLM.load(run.read(args.lm)) if args.lm else None
    clf = ReferenceClassifier.load(run.read(args.classifier)) if args.classifier else None
    metrics = [m for m in METRICS if m in needed or m in ("length", "ref_length", "cost")]
    return score_pairs(corpus, lm=lm, classifier=clf, metrics=metrics, n_jobs=args.threads)


# -- commands ----------------------------------------------------------------

def cmd_stats(run, args):
    corpus = _load(run, args.input, args)
    rows = corpus_diff_report(corpus)
    run.write_text(args.out, format_diff_report(rows, args.format))


def cmd_idf(run, args):
    corpus = _load(run, args.input, args)
    docs = []
    if args.side in ("reference", "both"):
        docs += corpus.references()
    if args.side in ("translation", "both"):
        docs += corpus.translations()
    build_idf(docs).save(args.out)
    run.wrote(args.out)


def cmd_lm_train(run, args):
    corpus = _load(run, args.input, args)
    sents = corpus.references() if args.side == "reference" else corpus.translations()
    lm = NgramLM(order=args.order, discount=args.discount, min_count=args.min_count).fit(sents)
    lm.save(args.out)
    run.wrote(args.out)


def cmd_lm_score(run, args):
    corpus = _load(run, args.input, args)
    lm = NgramLM.load(run.read(args.lm))
    sents = corpus.translations() if args.side == "translation" else corpus.references()
    ppl = [lm.perplexity(s) for s in sents]
    lines = ["index\tperplexity"] + [f"{i}\t{p!r}" for i, p in enumerate(ppl)]
    run.write_text(args.out, "\n".join(lines) + "\n")
    run.extra["corpus_perplexity"] = lm.score(sents) if sents else None


def cmd_score(run, args):
    corpus = _load(run, args.input, args)
    lm = NgramLM.load(run.read(args.lm)) if args.lm else None
    clf = ReferenceClassifier.load(run.read(args.classifier)) if args.classifier else None
    scored = score_pairs(corpus, lm=lm, classifier=clf, n_jobs=args.threads)
    run.write_text(args.out, scored.to_tsv())


def cmd_filter(run, args):
    corpus = _load(run, args.input, args)
    cfg = _filter_from_args(args)
    kept = apply_filters(_scored(run, corpus, args, cfg.required_metrics()), cfg)
    save_pairs(kept, args.out)
    run.wrote(args.out)
    run.extra["filter"] = cfg.to_kv()
    run.extra["survivors"] = len(kept)


def cmd_tune(run, args):
    corpus = _load(run, args.input, args)
    grid = TuningGrid()
    family_needs = {"length": {"length", "ref_length"}, "cost": {"cost"}, "ppl": {"ppl"}, "pr": {"pr"},
                    "overlap": {"overlap1", "overlap2", "overlap3"}, "bleu": {"bleu"}}
    scored = _scored(run, corpus, args, family_needs[args.family])
    dev = _load_sts(run, args.dev, args)
    base = FilterConfig(length_side=args.length_side)
    result = tune_filter(grid, args.family, scored, dev, _embedder_from_args(args),
                         target_size=args.target_size, seed=args.seed, n_jobs=args.threads, base=base)
    run.write_text(args.out, result.to_tsv())
    if args.best_config:
        kv = result.best.to_kv()
        run.write_text(args.best_config, "".join(f"{k}={v}\n" for k, v in kv.items()))
    run.extra["best"] = result.best.to_kv()
    run.extra["skipped"] = [[c.describe(), n] for c, n in result.skipped]


def cmd_train(run, args):
    corpus = _load(run, args.input, args)
    est = _embedder_from_args(args)
    dev = _load_sts(run, args.dev, args) if args.dev else None
    dev_eval = (lambda m: sts_evaluate(m, dev).average) if dev else None
    on_epoch = None
    if args.checkpoint_every_epoch:
        def on_epoch(epoch, model, opt):
            model.save(run.wrote(f"{args.out}.epoch{epoch}"), epoch=epoch, optimizer=opt)
    est.fit(corpus, dev_eval=dev_eval, on_epoch=on_epoch)
    est.save(args.out)
    run.wrote(args.out)
    res = est.train_result_
    run.extra["training"] = {"best_epoch": res.best_epoch, "losses": res.losses,
                             "dev_scores": res.dev_scores, "initial_dev_score": res.initial_dev_score}


def cmd_eval(run, args):
    model = ParaphraseEmbedder.load(run.read(args.model))
    report = sts_evaluate(model, _load_sts(run, args.files, args))
    run.write_text(args.out, report.format(args.format))


def cmd_clf_train(run, args):
    corpus = _load(run, args.input, args)
    clf = ReferenceClassifier(encoder=args.encoder, dim=args.dim, hidden_size=args.hidden_size, l2=args.l2,
                              negative_mode=args.negatives, epochs=args.epochs, learning_rate=args.lr,
                              batch_size=args.batch_size, min_count=args.min_count,
                              embeddings=args.embeddings, init_scale=args.init_scale, random_state=args.seed)
    lists = kbest_lists(corpus)
    if args.val:
        Xv, yv = labeled_sentences(_load(run, args.val, args))
        train_lists = lists
    else:
        n_val = int(round(args.val_fraction * len(lists)))
        train_lists = lists[:len(lists) - n_val]
        val_lists = lists[len(lists) - n_val:]
        Xv = [s for r, ts in val_lists for s in (r, ts[0])]
        yv = [1, 0] * len(val_lists)
    if not train_lists:
        raise ValueError("no training data left after the validation split")
    clf.fit_kbest(train_lists, Xv or None, yv or None)
    clf.save(args.out)
    run.wrote(args.out)
    run.extra["training"] = {"best_epoch": clf.best_epoch_, "history": clf.history_}


def cmd_clf_report(run, args):
    clf = ReferenceClassifier.load(run.read(args.classifier))
    corpus = _load(run, args.input, args)
    run.write_text(args.out, format_report_table(classifier_report_table(clf, corpus), args.format))


def cmd_clf_corr(run, args):
    clf = ReferenceClassifier.load(run.read(args.classifier))
    corpus = _load(run, args.input, args)
    idf = IdfTable.load(run.read(args.idf)) if args.idf else build_idf(corpus.references())
    run.write_text(args.out, format_correlations(metric_correlations(clf, corpus, idf), args.format))


def cmd_synth_para(run, args):
    data = gen_paraphrase_corpus(args.clusters, args.per_cluster, args.vocab, args.noise, seed=args.seed)
    save_pairs(data.corpus, args.out)
    run.wrote(args.out)
    for ds, path in ((data.dev, args.dev_out), (data.test, args.test_out)):
        if path:
            write_sts(path, ds.items)
            run.wrote(path)


def cmd_synth_mt(run, args):
    corpus = gen_mt_like(args.pairs, args.repeat_rate, args.vocab_shrink, seed=args.seed, kbest=args.kbest)
    save_pairs(corpus, args.out)
    run.wrote(args.out)


# -- parser ------------------------------------------------------------------

def _common(p, seed=True):
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--out", required=True, help="main output path (manifest goes to OUT.manifest.json)")
    p.add_argument("--lowercase", action="store_true", help="lowercase tokens when reading text")
    p.add_argument("--strict", action="store_true", help="fail on the first malformed record")
    p.add_argument("--threads", type=int, default=1)
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _model_opts(p):
    p.add_argument("--model", choices=["avg", "gran"], default="avg")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--margin", type=float, default=0.4)
    p.add_argument("--lambda-c", type=float, default=0.0)
    p.add_argument("--lambda-w", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--embeddings", help="word vector text file for initialisation")
    p.add_argument("--init-scale", type=float, default=0.1)


def _score_sources(p):
    p.add_argument("--scores", help="metric table from 'paramine score'")
    p.add_argument("--lm", help="language model file (for perplexity)")
    p.add_argument("--classifier", help="classifier checkpoint (for P(R))")


def _filter_opts(p):
    p.add_argument("--length-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--length-side", choices=["translation", "reference"], default="translation")
    p.add_argument("--cost-max", type=float)
    p.add_argument("--ppl-max", type=float)
    p.add_argument("--pr-min", type=float)
    p.add_argument("--overlap", type=float, nargs=3, metavar=("N", "LO", "HI"))
    p.add_argument("--bleu-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--target-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="paramine", description="Paraphrase mining and filtering toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, func, help, seed=True):
        p = sub.add_parser(name, help=help, description=help)
        _common(p, seed)
        p.set_defaults(func=func)
        return p

    p = add("stats", cmd_stats, "entropy / repetition differences per language and source", seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")

    p = add("idf", cmd_idf, "build an IDF table", seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--side", choices=["reference", "translation", "both"], default="reference")

    p = add("lm-train", cmd_lm_train, "train an n-gram language model", seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--side", choices=["reference", "translation"], default="reference")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--min-count", type=int, default=2)

    p = add("lm-score", cmd_lm_score, "per-sentence perplexity", seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--side", choices=["reference", "translation"], default="translation")

    p = add("score", cmd_score, "compute filter metrics for every pair", seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--lm")
    p.add_argument("--classifier")

    p = add("filter", cmd_filter, "apply length / quality / diversity filters")
    p.add_argument("--input", required=True)
    _score_sources(p)
    _filter_opts(p)

    p = add("tune", cmd_tune, "grid-search one filter family on dev STS data")
    p.add_argument("--input", required=True)
    p.add_argument("--family", choices=list(TuningGrid.FAMILIES), required=True)
    p.add_argument("--dev", nargs="+", required=True, help="STS-format dev files")
    p.add_argument("--target-size", type=int, default=24000)
    p.add_argument("--length-side", choices=["translation", "reference"], default="translation")
    p.add_argument("--best-config", help="write the winning filter as key=value here")
    _score_sources(p)
    _model_opts(p)

    p = add("train", cmd_train, "train a paraphrastic sentence encoder")
    p.add_argument("--input", required=True)
    p.add_argument("--dev", nargs="+", help="STS-format dev files (select the stopping epoch)")
    p.add_argument("--checkpoint-every-epoch", action="store_true")
    _model_opts(p)

    p = add("eval", cmd_eval, "Pearson r on STS-format files", seed=False)
    p.add_argument("--model", required=True)
    p.add_argument("--files", nargs="+", required=True)
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")

    p = add("clf-train", cmd_clf_train, "train a reference-vs-translation classifier")
    p.add_argument("--input", required=True, help="pairs; consecutive beam ranks form k-best lists")
    p.add_argument("--val", help="validation pairs (default: hold out --val-fraction)")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--encoder", choices=["avg", "lstm"], default="avg")
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--negatives", choices=["random", "hardest"], default="random")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--embeddings")
    p.add_argument("--init-scale", type=float, default=0.1)

    p = add("clf-report", cmd_clf_report, "classifier accuracy per language and source", seed=False)
    p.add_argument("--classifier", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")

    p = add("clf-corr", cmd_clf_corr, "Spearman rho of P(R) against text measures", seed=False)
    p.add_argument("--classifier", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--idf", help="IDF table (default: built from the input references)")
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")

    p = add("synth-para", cmd_synth_para, "generate a synthetic paraphrase corpus and STS files")
    p.add_argument("--clusters", type=int, default=20)
    p.add_argument("--per-cluster", type=int, default=50)
    p.add_argument("--vocab", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--dev-out")
    p.add_argument("--test-out")

    p = add("synth-mt", cmd_synth_mt, "generate MT-like reference/translation pairs")
    p.add_argument("--pairs", type=int, default=5000)
    p.add_argument("--repeat-rate", type=float, default=0.3)
    p.add_argument("--vocab-shrink", type=float, default=0.3)
    p.add_argument("--kbest", type=int, default=1)
    return parser


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_help())
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            kv = read_config(cfg_path)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        apply_config(sub, kv)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args.command, args)
    try:
        args.func(run, args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"paramine {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    run.finish(args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
