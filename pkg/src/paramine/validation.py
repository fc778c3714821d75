"""Input checking shared by the estimators."""

from __future__ import annotations

from typing import Iterable, Sequence

from .corpus import PairCorpus, SentencePair, TokenizerConfig, tokenize


def check_sentences(X, tok: TokenizerConfig | None = None, allow_empty: bool = False) -> list[list[str]]:
    """Coerce ``X`` to a list of token lists.

    Strings are tokenized on whitespace; anything else must be a sequence of
    string tokens.
    """
    if isinstance(X, str):
        raise TypeError("expected a collection of sentences, got a single string")
    out = []
    for i, s in enumerate(X):
        if isinstance(s, str):
            toks = tokenize(s, tok)
        else:
            toks = list(s)
            if not all(isinstance(t, str) for t in toks):
                raise TypeError(f"sentence {i} contains non-string tokens")
        if not toks and not allow_empty:
            raise ValueError(f"sentence {i} is empty")
        out.append(toks)
    return out


def check_pairs(X, tok: TokenizerConfig | None = None) -> list[tuple[list[str], list[str]]]:
    """Coerce a :class:`PairCorpus` or an iterable of 2-tuples to token-list pairs."""
    if isinstance(X, PairCorpus):
        return [(list(p.reference), list(p.translation)) for p in X]
    out = []
    for i, item in enumerate(X):
        if isinstance(item, SentencePair):
            out.append((list(item.reference), list(item.translation)))
            continue
        if len(item) != 2:
            raise ValueError(f"item {i} is not a sentence pair")
        a, b = check_sentences(item, tok)
        out.append((a, b))
    return out


def check_labels(y: Iterable, n: int) -> list[int]:
    labels = [int(v) for v in y]
    if len(labels) != n:
        raise ValueError(f"got {len(labels)} labels for {n} sentences")
    bad = set(labels) - {0, 1}
    if bad:
        raise ValueError(f"labels must be 0 or 1, found {sorted(bad)}")
    return labels


def check_same_length(xs: Sequence, ys: Sequence) -> None:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
