"""Sentence-pair corpora: tokenization, (de)serialization, vocabularies, sampling."""

from __future__ import annotations

import io
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

UNK = "<unk>"

FORMATS = ("jsonl", "tsv")
_TSV_FIELDS = ("reference", "translation", "cost", "lang_pair", "source", "beam_rank")
_KEY_ALIASES = {"ref": "reference", "trans": "translation"}


class CorpusFormatError(ValueError):
    """Malformed record in a corpus file (raised in strict mode)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = False
    mode: str = "whitespace"

    def __post_init__(self):
        if self.mode not in ("whitespace", "pretokenized"):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")


def tokenize(text: str, tok: TokenizerConfig | None = None) -> list[str]:
    """Split ``text`` into tokens.

    ``whitespace`` splits on runs of Unicode whitespace; ``pretokenized``
    trusts the input to be single-space separated.
    """
    tok = tok or TokenizerConfig()
    if tok.lowercase:
        text = text.lower()
    if tok.mode == "whitespace":
        return text.split()
    return [t for t in text.split(" ") if t]


@dataclass(frozen=True)
class SentencePair:
    reference: tuple[str, ...]
    translation: tuple[str, ...]
    cost: float | None = None
    lang_pair: str = ""
    source: str = ""
    beam_rank: int | None = None

    def __post_init__(self):
        # tolerate lists from callers, store tuples so pairs stay hashable
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "translation", tuple(self.translation))
        if not self.reference or not self.translation:
            raise ValueError("both sides of a pair need at least one token")
        if self.cost is not None:
            cost = float(self.cost)
            if not math.isfinite(cost) or cost < 0:
                raise ValueError(f"cost must be finite and >= 0, got {self.cost!r}")
            object.__setattr__(self, "cost", cost)
        if self.beam_rank is not None:
            if int(self.beam_rank) != self.beam_rank or self.beam_rank < 0:
                raise ValueError(f"beam_rank must be a nonnegative integer, got {self.beam_rank!r}")
            object.__setattr__(self, "beam_rank", int(self.beam_rank))

    @property
    def group(self) -> tuple[str, str]:
        return (self.lang_pair, self.source)

    def to_record(self) -> dict:
        rec = {"reference": " ".join(self.reference), "translation": " ".join(self.translation)}
        if self.cost is not None:
            rec["cost"] = self.cost
        if self.lang_pair:
            rec["lang_pair"] = self.lang_pair
        if self.source:
            rec["source"] = self.source
        if self.beam_rank is not None:
            rec["beam_rank"] = self.beam_rank
        return rec


class PairCorpus(Sequence[SentencePair]):
    """Immutable ordered collection of :class:`SentencePair`."""

    def __init__(self, pairs: Iterable[SentencePair] = ()):
        self._pairs = tuple(pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PairCorpus(self._pairs[i])
        return self._pairs[i]

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self._pairs)

    def __eq__(self, other) -> bool:
        if isinstance(other, PairCorpus):
            return self._pairs == other._pairs
        return NotImplemented

    def __hash__(self):
        return hash(self._pairs)

    def __repr__(self) -> str:
        return f"PairCorpus(n={len(self)})"

    def take(self, indices: Iterable[int]) -> "PairCorpus":
        return PairCorpus(self._pairs[i] for i in indices)

    def references(self) -> list[tuple[str, ...]]:
        return [p.reference for p in self._pairs]

    def translations(self) -> list[tuple[str, ...]]:
        return [p.translation for p in self._pairs]

    def groups(self) -> dict[tuple[str, str], "PairCorpus"]:
        """Split by (lang_pair, source), preserving first-seen group order."""
        out: dict[tuple[str, str], list[SentencePair]] = {}
        for p in self._pairs:
            out.setdefault(p.group, []).append(p)
        return {k: PairCorpus(v) for k, v in out.items()}


@dataclass
class LoadReport:
    kept: int = 0
    skipped: int = 0
    reasons: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    def to_json(self) -> str:
        return json.dumps({"kept": self.kept, "skipped": self.skipped,
                           "reasons": dict(sorted(self.reasons.items()))}, sort_keys=True)


def _guess_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    return "tsv" if ext in (".tsv", ".txt") else "jsonl"


def _parse_jsonl(line: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"invalid JSON ({e.msg})") from None
    if not isinstance(rec, dict):
        raise CorpusFormatError("record is not a JSON object")
    return {_KEY_ALIASES.get(k, k): v for k, v in rec.items()}


def _parse_tsv(line: str) -> dict:
    cols = line.split("\t")
    if len(cols) < 2 or len(cols) > len(_TSV_FIELDS):
        raise CorpusFormatError(f"expected 2-{len(_TSV_FIELDS)} tab-separated columns, got {len(cols)}")
    rec = {}
    for name, value in zip(_TSV_FIELDS, cols):
        if name in ("reference", "translation") or value != "":
            rec[name] = value
    return rec


def _coerce(rec: dict, tok: TokenizerConfig) -> SentencePair:
    if "reference" not in rec or "translation" not in rec:
        raise CorpusFormatError("record lacks reference/translation fields")
    cost = rec.get("cost")
    beam_rank = rec.get("beam_rank")
    try:
        cost = None if cost is None else float(cost)
        beam_rank = None if beam_rank is None else int(beam_rank)
    except (TypeError, ValueError):
        raise CorpusFormatError("non-numeric cost or beam_rank") from None
    return SentencePair(
        reference=tokenize(str(rec["reference"]), tok),
        translation=tokenize(str(rec["translation"]), tok),
        cost=cost,
        lang_pair=str(rec.get("lang_pair", "")),
        source=str(rec.get("source", "")),
        beam_rank=beam_rank,
    )


def read_pairs(lines: Iterable[str], format: str = "jsonl", tok: TokenizerConfig | None = None,
               strict: bool = False) -> tuple[PairCorpus, LoadReport]:
    if format not in FORMATS:
        raise ValueError(f"unknown corpus format {format!r}")
    tok = tok or TokenizerConfig()
    parse = _parse_jsonl if format == "jsonl" else _parse_tsv
    report = LoadReport()
    pairs = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        try:
            rec = parse(line)
            pair = _coerce(rec, tok)
        except CorpusFormatError as e:
            if strict:
                raise CorpusFormatError(str(e), lineno) from None
            report.skip("malformed")
            continue
        except ValueError as e:
            msg = str(e)
            report.skip("empty side" if "token" in msg else "invalid field")
            continue
        pairs.append(pair)
        report.kept += 1
    return PairCorpus(pairs), report


def load_pairs(path, format: str | None = None, tok: TokenizerConfig | None = None,
               strict: bool = False) -> tuple[PairCorpus, LoadReport]:
    """Load a JSONL or TSV pair file.

    Records that violate pair invariants (an empty side, a negative cost)
    are skipped and counted in the returned :class:`LoadReport`; records
    that cannot be parsed at all raise :class:`CorpusFormatError` when
    ``strict`` is set.
    """
    format = format or _guess_format(path)
    with open(path, encoding="utf-8") as fh:
        return read_pairs(fh, format, tok, strict)


def dump_pairs(corpus: Iterable[SentencePair], fh: io.TextIOBase, format: str = "jsonl") -> None:
    if format not in FORMATS:
        raise ValueError(f"unknown corpus format {format!r}")
    for p in corpus:
        if format == "jsonl":
            fh.write(json.dumps(p.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
            continue
        cols = [" ".join(p.reference), " ".join(p.translation),
                "" if p.cost is None else repr(p.cost), p.lang_pair, p.source,
                "" if p.beam_rank is None else str(p.beam_rank)]
        while len(cols) > 2 and cols[-1] == "":
            cols.pop()
        fh.write("\t".join(cols) + "\n")


def save_pairs(corpus: Iterable[SentencePair], path, format: str | None = None) -> None:
    format = format or _guess_format(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        dump_pairs(corpus, fh, format)


class Vocabulary:
    """Token/index bijection with ``<unk>`` reserved at index 0."""

    unk = UNK
    unk_index = 0

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos = [UNK]
        self._stoi = {UNK: 0}
        for t in tokens:
            if t not in self._stoi:
                self._stoi[t] = len(self._itos)
                self._itos.append(t)

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    def index(self, token: str) -> int:
        return self._stoi.get(token, 0)

    def token(self, index: int) -> str:
        return self._itos[index]

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        get = self._stoi.get
        return np.fromiter((get(t, 0) for t in tokens), dtype=np.int64)

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)


def build_vocab(corpus: Iterable[SentencePair], min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times on either side.

    Indices follow descending count, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    for p in corpus:
        counts.update(p.reference)
        counts.update(p.translation)
    counts.pop(UNK, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def vocab_from_sentences(sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    counts: Counter = Counter()
    for s in sentences:
        counts.update(s)
    counts.pop(UNK, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def sample_fixed(corpus: PairCorpus, n: int, seed: int = 0) -> PairCorpus:
    """Uniform sample of ``n`` pairs without replacement, fixed by ``seed``."""
    if n < 0 or n > len(corpus):
        raise ValueError(f"cannot sample {n} pairs from a corpus of {len(corpus)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(corpus), size=n, replace=False)
    return corpus.take(int(i) for i in idx)
