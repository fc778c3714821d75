"""Length, quality and diversity filters over pair corpora, and their tuning loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone

from .corpus import PairCorpus, sample_fixed
from .evaluation import StsDataset, sts_evaluate
from .textstats import ngram_overlap, smoothed_bleu

log = logging.getLogger(__name__)

DEFAULT_TARGET_SIZE = 24000
METRICS = ("length", "ref_length", "cost", "ppl", "pr", "overlap1", "overlap2", "overlap3", "bleu")


class FilterConfigError(ValueError):
    """A filter needs a metric or resource that is not available."""


class SizeError(ValueError):
    def __init__(self, requested: int, survivors: int):
        super().__init__(f"target_size {requested} exceeds the {survivors} surviving pairs")
        self.requested = requested
        self.survivors = survivors


def _check_range(name, r):
    if r is None:
        return None
    lo, hi = (float(v) for v in r)
    if lo > hi:
        raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


@dataclass(frozen=True)
class FilterConfig:
    """Active filters; ``None`` means the filter is off. All bounds are inclusive."""

    length_range: tuple[float, float] | None = None
    length_side: str = "translation"
    cost_max: float | None = None
    ppl_max: float | None = None
    pr_min: float | None = None
    overlap: tuple[int, float, float] | None = None
    bleu_range: tuple[float, float] | None = None
    target_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "length_range", _check_range("length_range", self.length_range))
        object.__setattr__(self, "bleu_range", _check_range("bleu_range", self.bleu_range))
        if self.length_side not in ("translation", "reference"):
            raise ValueError("length_side must be 'translation' or 'reference'")
        if self.ppl_max is not None and math.isinf(self.ppl_max):
            object.__setattr__(self, "ppl_max", None)
        if self.pr_min is not None and not 0.0 <= self.pr_min <= 1.0:
            raise ValueError("pr_min must lie in [0, 1]")
        if self.overlap is not None:
            n, lo, hi = self.overlap
            if int(n) not in (1, 2, 3):
                raise ValueError("overlap order must be 1, 2 or 3")
            object.__setattr__(self, "overlap", (int(n),) + _check_range("overlap", (lo, hi)))
        if self.target_size is not None and self.target_size < 0:
            raise ValueError("target_size must be nonnegative")

    def required_metrics(self) -> set[str]:
        need = set()
        if self.length_range is not None:
            need.add("length" if self.length_side == "translation" else "ref_length")
        if self.cost_max is not None:
            need.add("cost")
        if self.ppl_max is not None:
            need.add("ppl")
        if self.pr_min is not None:
            need.add("pr")
        if self.overlap is not None:
            need.add(f"overlap{self.overlap[0]}")
        if self.bleu_range is not None:
            need.add("bleu")
        return need

    # flat key=value form -------------------------------------------------------

    def to_kv(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out[f.name] = " ".join(repr(x) for x in v) if isinstance(v, tuple) else str(v)
        return out

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "FilterConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(kv) - known
        if unknown:
            raise ValueError(f"unknown filter keys: {sorted(unknown)}")
        args = {}
        for k, v in kv.items():
            v = str(v).strip()
            if v.lower() in ("", "none"):
                continue
            if k in ("length_range", "bleu_range", "overlap"):
                args[k] = tuple(float(x) for x in v.replace(",", " ").split())
            elif k in ("target_size", "seed"):
                args[k] = int(v)
            elif k == "length_side":
                args[k] = v
            else:
                args[k] = float(v)
        return cls(**args)

    def describe(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.to_kv().items() if k != "seed") or "none"


@dataclass
class ScoredCorpus:
    """A corpus with cached per-pair metric columns."""

    corpus: PairCorpus
    metrics: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.corpus)

    def take(self, indices) -> "ScoredCorpus":
        idx = np.asarray(list(indices), dtype=np.int64)
        return ScoredCorpus(self.corpus.take(idx.tolist()), {k: v[idx] for k, v in self.metrics.items()})

    def to_tsv(self) -> str:
        cols = [m for m in METRICS if m in self.metrics]
        lines = ["\t".join(["index"] + cols)]
        for i in range(len(self.corpus)):
            lines.append("\t".join([str(i)] + [repr(float(self.metrics[c][i])) for c in cols]))
        return "\n".join(lines) + "\n"


def _text_metrics(pairs, lm, want):
    rows = []
    for p in pairs:
        row = {}
        if "ppl" in want:
            row["ppl"] = lm.perplexity(p.translation)
        for n in (1, 2, 3):
            if f"overlap{n}" in want:
                row[f"overlap{n}"] = ngram_overlap(p.reference, p.translation, n)
        if "bleu" in want:
            row["bleu"] = smoothed_bleu(p.reference, p.translation)
        rows.append(row)
    return rows


def score_pairs(corpus: PairCorpus, lm=None, classifier=None, metrics: Sequence[str] | None = None,
                n_jobs: int = 1) -> ScoredCorpus:
    """Compute the filter metrics once for every pair.

    By default every metric whose resource is available is computed:
    ``ppl`` needs ``lm`` (an :class:`~paramine.lm.NgramLM`) and ``pr`` needs
    ``classifier`` (a :class:`~paramine.refclass.ReferenceClassifier`).
    ``cost`` comes from the input and is NaN where absent.
    """
    if metrics is None:
        want = [m for m in METRICS if not (m == "ppl" and lm is None) and not (m == "pr" and classifier is None)]
    else:
        want = list(metrics)
        bad = set(want) - set(METRICS)
        if bad:
            raise FilterConfigError(f"unknown metrics {sorted(bad)}")
    if "ppl" in want and lm is None:
        raise FilterConfigError("perplexity requested but no language model given")
    if "pr" in want and classifier is None:
        raise FilterConfigError("P(R) requested but no classifier given")
    out: dict[str, np.ndarray] = {}
    pairs = list(corpus)
    if "length" in want:
        out["length"] = np.array([len(p.translation) for p in pairs], dtype=np.float64)
    if "ref_length" in want:
        out["ref_length"] = np.array([len(p.reference) for p in pairs], dtype=np.float64)
    if "cost" in want:
        out["cost"] = np.array([np.nan if p.cost is None else p.cost for p in pairs], dtype=np.float64)
    text = [m for m in want if m == "ppl" or m.startswith("overlap") or m == "bleu"]
    if text and pairs:
        n_chunks = max(1, min(len(pairs), 4 * max(1, n_jobs)))
        bounds = np.linspace(0, len(pairs), n_chunks + 1).astype(int)
        chunks = [pairs[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
        if n_jobs == 1:
            parts = [_text_metrics(c, lm, text) for c in chunks]
        else:
            parts = Parallel(n_jobs=n_jobs)(delayed(_text_metrics)(c, lm, text) for c in chunks)
        rows = [r for part in parts for r in part]
        for m in text:
            out[m] = np.array([r[m] for r in rows], dtype=np.float64)
    elif text:
        for m in text:
            out[m] = np.zeros(0)
    if "pr" in want:
        trans = corpus.translations()
        out["pr"] = classifier.reference_probability(trans) if trans else np.zeros(0)
    return ScoredCorpus(corpus, out)


def _column(scored: ScoredCorpus, name: str) -> np.ndarray:
    if name not in scored.metrics:
        raise FilterConfigError(f"metric {name!r} has not been scored")
    col = scored.metrics[name]
    if name == "cost" and np.isnan(col).any():
        raise FilterConfigError("cost filter active but some pairs have no cost")
    return col


def survivor_mask(scored: ScoredCorpus, cfg: FilterConfig) -> np.ndarray:
    """Boolean mask of pairs satisfying every active predicate."""
    keep = np.ones(len(scored), dtype=bool)
    if cfg.length_range is not None:
        col = _column(scored, "length" if cfg.length_side == "translation" else "ref_length")
        keep &= (col >= cfg.length_range[0]) & (col <= cfg.length_range[1])
    if cfg.cost_max is not None:
        keep &= _column(scored, "cost") <= cfg.cost_max
    if cfg.ppl_max is not None:
        keep &= _column(scored, "ppl") <= cfg.ppl_max
    if cfg.pr_min is not None:
        keep &= _column(scored, "pr") >= cfg.pr_min
    if cfg.overlap is not None:
        n, lo, hi = cfg.overlap
        col = _column(scored, f"overlap{n}")
        keep &= (col >= lo) & (col <= hi)
    if cfg.bleu_range is not None:
        col = _column(scored, "bleu")
        keep &= (col >= cfg.bleu_range[0]) & (col <= cfg.bleu_range[1])
    return keep


def apply_filters(scored: ScoredCorpus, cfg: FilterConfig) -> PairCorpus:
    """Keep the pairs passing all active filters, then subsample to ``target_size`` if set."""
    survivors = scored.corpus.take(np.flatnonzero(survivor_mask(scored, cfg)).tolist())
    if cfg.target_size is None:
        return survivors
    if cfg.target_size > len(survivors):
        raise SizeError(cfg.target_size, len(survivors))
    return sample_fixed(survivors, cfg.target_size, seed=cfg.seed)


def _frange(lo, hi, step):
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]


LENGTH_RANGES = ((0, 10), (0, 15), (0, 20), (0, 30), (0, 100), (10, 20), (10, 30), (10, 100),
                 (15, 25), (15, 30), (15, 100), (20, 30), (20, 100), (30, 100))


@dataclass
class TuningGrid:
    lengths: list = field(default_factory=lambda: list(LENGTH_RANGES))
    costs: list = field(default_factory=lambda: _frange(0.2, 1.0, 0.1))
    ppls: list = field(default_factory=lambda: [25, 50, 75, 100, 150, 200, math.inf])
    prs: list = field(default_factory=lambda: _frange(0.0, 0.9, 0.1))
    overlap_ns: list = field(default_factory=lambda: [1, 2, 3])
    lows: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3])
    highs: list = field(default_factory=lambda: [0.6, 0.7, 0.8, 0.9, 1.0])

    FAMILIES = ("length", "cost", "ppl", "pr", "overlap", "bleu")

    def __post_init__(self):
        for name in ("lengths", "costs", "ppls", "prs", "overlap_ns", "lows", "highs"):
            if not getattr(self, name):
                raise ValueError(f"grid {name} is empty")

    def points(self, family: str, base: FilterConfig | None = None) -> list[FilterConfig]:
        """Grid points of one filter family, each layered on ``base``."""
        base = base or FilterConfig()
        if family == "length":
            return [replace(base, length_range=tuple(r)) for r in self.lengths]
        if family == "cost":
            return [replace(base, cost_max=c) for c in self.costs]
        if family == "ppl":
            return [replace(base, ppl_max=p) for p in self.ppls]
        if family == "pr":
            return [replace(base, pr_min=p) for p in self.prs]
        if family == "overlap":
            return [replace(base, overlap=(n, lo, hi)) for n in self.overlap_ns
                    for lo in self.lows for hi in self.highs]
        if family == "bleu":
            return [replace(base, bleu_range=(lo, hi)) for lo in self.lows for hi in self.highs]
        raise ValueError(f"unknown filter family {family!r}; choose from {self.FAMILIES}")


@dataclass
class TuneRow:
    config: FilterConfig
    survivors: int
    score: float


@dataclass
class TuneResult:
    best: FilterConfig
    best_score: float
    table: list[TuneRow]
    skipped: list[tuple[FilterConfig, int]]

    def to_tsv(self) -> str:
        lines = ["config\tsurvivors\tdev_r100"]
        for r in self.table:
            lines.append(f"{r.config.describe()}\t{r.survivors}\t{100 * r.score:.1f}")
        return "\n".join(lines) + "\n"


def _dev_scorer(dev) -> Callable:
    if callable(dev):
        return dev
    files = list(dev)
    if not files:
        raise ValueError("tuning needs at least one dev STS file")
    return lambda model: sts_evaluate(model, files).average


def _run_point(estimator, data: PairCorpus, dev):
    score = _dev_scorer(dev)
    model = clone(estimator).fit(data, dev_eval=score)
    return score(model)


def tune_filter(grid: TuningGrid, family: str, scored: ScoredCorpus, dev, estimator,
                target_size: int = DEFAULT_TARGET_SIZE, seed: int = 0, n_jobs: int = 1,
                base: FilterConfig | None = None) -> TuneResult:
    """Pick the best bounds of one filter family by dev-set Pearson r.

    For every grid point the corpus is filtered, ``target_size`` pairs are
    sampled, a fresh clone of ``estimator`` (e.g. a
    :class:`~paramine.trainer.ParaphraseEmbedder`) is trained on them and
    scored on ``dev``: STS datasets/paths (average Pearson r) or a
    ``callable(model) -> float``. Points with too few survivors are skipped.
    Ties go to the earliest grid point.
    """
    jobs, skipped = [], []
    for cfg in grid.points(family, base):
        cfg = replace(cfg, target_size=target_size, seed=seed)
        n = int(survivor_mask(scored, cfg).sum())
        if n < target_size:
            log.info("skipping %s: %d survivors < %d", cfg.describe(), n, target_size)
            skipped.append((cfg, n))
            continue
        jobs.append((cfg, n, apply_filters(scored, cfg)))
    if not jobs:
        raise SizeError(target_size, max((n for _, n in skipped), default=0))
    if n_jobs == 1:
        scores = [_run_point(estimator, data, dev) for _, _, data in jobs]
    else:
        scores = Parallel(n_jobs=n_jobs)(delayed(_run_point)(estimator, data, dev) for _, _, data in jobs)
    table = [TuneRow(cfg, n, float(s)) for (cfg, n, _), s in zip(jobs, scores)]
    best = max(range(len(table)), key=lambda i: (table[i].score, -i))
    return TuneResult(table[best].config, table[best].score, table, skipped)
