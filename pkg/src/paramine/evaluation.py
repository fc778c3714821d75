"""Correlation statistics and the STS evaluation harness."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import TokenizerConfig, tokenize
from .validation import check_same_length

log = logging.getLogger(__name__)


class UndefinedCorrelationError(ValueError):
    """Raised when one of the inputs has zero variance."""


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    check_same_length(x, y)
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    check_same_length(xs, ys)
    return pearson(rankdata(xs, method="average"), rankdata(ys, method="average"))


@dataclass(frozen=True)
class StsItem:
    sentence1: tuple[str, ...]
    sentence2: tuple[str, ...]
    gold: float

    def __post_init__(self):
        if not 0.0 <= self.gold <= 5.0:
            raise ValueError(f"gold score {self.gold} outside [0, 5]")


@dataclass
class StsDataset:
    name: str
    items: list[StsItem]

    @property
    def golds(self) -> np.ndarray:
        return np.array([it.gold for it in self.items])


def read_sts(path, tok: TokenizerConfig | None = None, name: str | None = None) -> StsDataset:
    """Read a ``sentence1<TAB>sentence2<TAB>gold`` file."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns")
            a, b = tokenize(cols[0], tok), tokenize(cols[1], tok)
            if not a or not b:
                raise ValueError(f"{path}:{lineno}: empty sentence")
            items.append(StsItem(tuple(a), tuple(b), float(cols[2])))
    if not items:
        raise ValueError(f"{path}: no items")
    return StsDataset(name or os.path.basename(str(path)), items)


def write_sts(path, items: Sequence[StsItem]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for it in items:
            fh.write(f"{' '.join(it.sentence1)}\t{' '.join(it.sentence2)}\t{it.gold!r}\n")


@dataclass
class StsReport:
    per_file: dict[str, float]
    excluded: list[str]

    @property
    def average(self) -> float:
        if not self.per_file:
            return float("nan")
        return float(np.mean(list(self.per_file.values())))

    def rows(self) -> list[tuple[str, float]]:
        return list(self.per_file.items()) + [("AVERAGE", self.average)]

    def format(self, fmt: str = "tsv") -> str:
        """Values are r x 100, one decimal, as in STS result tables."""
        rows = [(name, round(100.0 * r, 1)) for name, r in self.rows()]
        if fmt == "json":
            return json.dumps({"rows": [{"file": n, "r100": v} for n, v in rows],
                               "excluded": self.excluded}, indent=2) + "\n"
        return "file\tr100\n" + "".join(f"{n}\t{v:.1f}\n" for n, v in rows)


def sts_evaluate(model, files, tok: TokenizerConfig | None = None) -> StsReport:
    """Pearson r between model cosine similarity and gold, per file, plus the unweighted mean.

    ``model`` needs a ``similarity(X1, X2)`` method (e.g. a fitted
    :class:`~paramine.trainer.ParaphraseEmbedder`). ``files`` are paths or
    :class:`StsDataset` objects. Files whose gold scores are constant are
    excluded with a warning.
    """
    per_file: dict[str, float] = {}
    excluded = []
    for f in files:
        ds = f if isinstance(f, StsDataset) else read_sts(f, tok)
        pred = model.similarity([it.sentence1 for it in ds.items], [it.sentence2 for it in ds.items])
        try:
            per_file[ds.name] = pearson(pred, ds.golds)
        except UndefinedCorrelationError:
            if np.ptp(ds.golds) == 0:
                log.warning("%s: gold scores have zero variance; excluded", ds.name)
                excluded.append(ds.name)
            else:
                # constant predictions carry no ranking information
                per_file[ds.name] = 0.0
    return StsReport(per_file, excluded)
