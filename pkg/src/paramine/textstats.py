"""N-gram statistics over token sequences.

Entropy, repetition, IDF, n-gram overlap and a smoothed sentence-level
BLEU, plus a per-group reference-vs-translation difference report.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

Tokens = Sequence[str]

BLEU_MAX_ORDER = 4


@dataclass
class NgramCounts:
    order: int
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def update(self, other: "NgramCounts") -> None:
        if other.order != self.order:
            raise ValueError("cannot pool counts of different orders")
        self.counts.update(other.counts)


def ngrams(tokens: Tokens, n: int) -> list[tuple[str, ...]]:
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def ngram_counts(tokens: Tokens, n: int) -> NgramCounts:
    return NgramCounts(n, Counter(ngrams(tokens, n)))


def entropy(counts: NgramCounts) -> float:
    """Shannon entropy (bits) of the empirical n-gram distribution."""
    total = counts.total
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts.counts.values():
        p = c / total
        h -= p * math.log2(p)
    return max(h, 0.0)


def repetition_rate(tokens: Tokens, n: int = 1, min_chars: int | None = None) -> float:
    """Fraction of n-gram occurrences that already appeared earlier in the sentence.

    For unigrams only words of at least ``min_chars`` characters (default 3)
    are considered; higher orders use every n-gram.
    """
    if n == 1:
        floor = 3 if min_chars is None else min_chars
        items = [(t,) for t in tokens if len(t) >= floor]
    else:
        items = ngrams(tokens, n)
    if not items:
        return 0.0
    seen = set()
    repeats = 0
    for g in items:
        if g in seen:
            repeats += 1
        else:
            seen.add(g)
    return repeats / len(items)


@dataclass
class IdfTable:
    idf: dict[str, float]
    n_documents: int

    @property
    def default(self) -> float:
        return math.log(self.n_documents + 1)

    def __getitem__(self, token: str) -> float:
        return self.idf.get(token.lower(), self.default)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#documents\t{self.n_documents}\n")
            for tok in sorted(self.idf):
                fh.write(f"{tok}\t{self.idf[tok]!r}\n")

    @classmethod
    def load(cls, path) -> "IdfTable":
        idf = {}
        n_docs = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                key, value = line.rstrip("\n").split("\t")
                if key == "#documents" and n_docs is None:
                    n_docs = int(value)
                else:
                    idf[key] = float(value)
        if n_docs is None:
            raise ValueError(f"{path}: missing '#documents' header")
        return cls(idf, n_docs)


def build_idf(documents: Iterable[Tokens]) -> IdfTable:
    """idf(w) = ln((N + 1) / (df(w) + 1)) over lowercased tokens."""
    df: Counter = Counter()
    n = 0
    for doc in documents:
        n += 1
        df.update({t.lower() for t in doc})
    if n == 0:
        raise ValueError("need at least one document to build an IDF table")
    return IdfTable({w: math.log((n + 1) / (c + 1)) for w, c in df.items()}, n)


def avg_idf(tokens: Tokens, idf: IdfTable) -> float:
    if len(tokens) == 0:
        raise ValueError("average IDF of an empty sentence is undefined")
    return sum(idf[t] for t in tokens) / len(tokens)


def ngram_overlap(ref: Tokens, trans: Tokens, n: int) -> float:
    """Clipped shared n-grams over the smaller side's n-gram total."""
    a = Counter(ngrams(ref, n))
    b = Counter(ngrams(trans, n))
    denom = min(sum(a.values()), sum(b.values()))
    if denom == 0:
        return 0.0
    shared = sum((a & b).values())
    return shared / denom


def smoothed_bleu(ref: Tokens, trans: Tokens) -> float:
    """Sentence BLEU with add-one smoothing on every precision and on the brevity penalty.

    p_n = (matches_n + 1) / (candidate_n + 1), n = 1..4, and
    BP = min(1, exp(1 - (|ref| + 1) / (|trans| + 1))).
    """
    if len(ref) == 0 or len(trans) == 0:
        raise ValueError("BLEU needs two nonempty sentences")
    log_p = 0.0
    for n in range(1, BLEU_MAX_ORDER + 1):
        cand = Counter(ngrams(trans, n))
        matches = sum((cand & Counter(ngrams(ref, n))).values())
        log_p += math.log((matches + 1) / (sum(cand.values()) + 1))
    bp = min(1.0, math.exp(1.0 - (len(ref) + 1) / (len(trans) + 1)))
    return bp * math.exp(log_p / BLEU_MAX_ORDER)


# -- corpus-level comparison ---------------------------------------------------

DIFF_COLUMNS = ("lang", "source", "ent_uni", "ent_tri", "rep_uni", "rep_tri")


@dataclass
class SideStats:
    ent_uni: float
    ent_tri: float
    rep_uni: float
    rep_tri: float


def side_stats(sentences: Sequence[Tokens]) -> SideStats:
    uni, tri = NgramCounts(1), NgramCounts(3)
    for s in sentences:
        uni.update(ngram_counts(s, 1))
        tri.update(ngram_counts(s, 3))
    n = len(sentences)
    return SideStats(
        ent_uni=entropy(uni),
        ent_tri=entropy(tri),
        rep_uni=sum(repetition_rate(s, 1) for s in sentences) / n,
        rep_tri=sum(repetition_rate(s, 3) for s in sentences) / n,
    )


@dataclass
class DiffRow:
    lang: str
    source: str
    ent_uni: float
    ent_tri: float
    rep_uni: float
    rep_tri: float

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in DIFF_COLUMNS}


def _diff(lang, source, pairs) -> DiffRow:
    r = side_stats([p.reference for p in pairs])
    t = side_stats([p.translation for p in pairs])
    return DiffRow(lang, source, r.ent_uni - t.ent_uni, r.ent_tri - t.ent_tri,
                   r.rep_uni - t.rep_uni, r.rep_tri - t.rep_tri)


def corpus_diff_report(corpus, include_all: bool = True) -> list[DiffRow]:
    """Reference-minus-translation entropy and repetition per (lang, source) group.

    Entropies pool n-gram counts over the group; repetition rates are
    per-sentence means. Negative repetition deltas mean the translations
    repeat more. A trailing ``ALL`` row covers the whole corpus.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    rows = [_diff(lang, source, list(group)) for (lang, source), group in corpus.groups().items()]
    if include_all:
        rows.append(_diff("ALL", "ALL", list(corpus)))
    return rows


def format_diff_report(rows: Sequence[DiffRow], fmt: str = "tsv") -> str:
    if fmt == "json":
        return json.dumps([r.as_dict() for r in rows], indent=2) + "\n"
    lines = ["\t".join(DIFF_COLUMNS)]
    for r in rows:
        lines.append("\t".join([r.lang, r.source] + [f"{getattr(r, c):.6f}" for c in DIFF_COLUMNS[2:]]))
    return "\n".join(lines) + "\n"
