"""Order-n language model with interpolated absolute discounting.

The fitted model is stored as back-off tables: for every n-gram seen in
training the interpolated probability, and for every seen context the weight
``d * N1+(h) / c(h)`` that multiplies the lower-order estimate of unseen
continuations. This is an exact rewrite of the interpolated recursion

    p_k(w | h) = max(c(h, w) - d, 0) / c(h) + d * N1+(h) / c(h) * p_{k-1}(w | h')

and is what the ARPA-style text format persists. The unigram level is
interpolated with a uniform distribution over the vocabulary (which
includes ``</s>``) plus ``<unk>``.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import UNK

BOS = "<s>"
EOS = "</s>"


def _events(tokens: Sequence[str], order: int):
    """(context, token) for every predicted position, contexts padded with <s>."""
    padded = [BOS] * (order - 1) + list(tokens) + [EOS]
    for i in range(order - 1, len(padded)):
        yield tuple(padded[i - order + 1:i]), padded[i]


class NgramLM(BaseEstimator):
    """Back-off n-gram language model.

    Parameters
    ----------
    order : int, default=3
        Largest n-gram order.
    discount : float, default=0.75
        Absolute discount ``d``, strictly between 0 and 1.
    min_count : int, default=2
        Training tokens seen fewer times are mapped to ``<unk>``.

    Attributes
    ----------
    vocab_ : frozenset of str
        Known tokens, including ``</s>`` but not ``<unk>``.
    probs_ : list of dict
        ``probs_[k - 1]`` maps seen k-grams to ``p(w | h)``.
    backoff_ : list of dict
        ``backoff_[k - 1]`` maps seen k-gram contexts (length k - 1) to
        their back-off weight.
    """

    def __init__(self, order: int = 3, discount: float = 0.75, min_count: int = 2):
        self.order = order
        self.discount = discount
        self.min_count = min_count

    def _validate_params(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order!r}")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount!r}")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")

    def fit(self, X: Iterable[Sequence[str]], y=None):
        self._validate_params()
        sentences = [list(s) for s in X]
        if not sentences:
            raise ValueError("cannot train a language model on zero sentences")
        freq = Counter(t for s in sentences for t in s)
        known = {t for t, c in freq.items() if c >= self.min_count and t not in (UNK, BOS, EOS)}
        self.vocab_ = frozenset(known | {EOS})

        n, d = self.order, self.discount
        counts = [defaultdict(Counter) for _ in range(n)]
        for s in sentences:
            mapped = [t if t in known else UNK for t in s]
            for ctx, w in _events(mapped, n):
                for k in range(1, n + 1):
                    counts[k - 1][ctx[len(ctx) - k + 1:]][w] += 1

        outcomes = sorted(self.vocab_) + [UNK]
        uniform = 1.0 / len(outcomes)
        uni = counts[0][()]
        total = sum(uni.values())
        lam = d * len(uni) / total
        probs = [{(w,): max(uni[w] - d, 0.0) / total + lam * uniform for w in outcomes}]
        backoff = [{(): lam}]
        for k in range(2, n + 1):
            pk, bk = {}, {}
            for ctx, nxt in counts[k - 1].items():
                c_h = sum(nxt.values())
                bow = d * len(nxt) / c_h
                for w, c in nxt.items():
                    pk[ctx + (w,)] = (c - d) / c_h + bow * self._lower(probs, backoff, ctx[1:], w)
                bk[ctx] = bow
            probs.append(pk)
            backoff.append(bk)
        self.probs_ = probs
        self.backoff_ = backoff
        self.n_train_sentences_ = len(sentences)
        return self

    @staticmethod
    def _lower(probs, backoff, ctx, w):
        """p(w | ctx) using tables of orders 1..len(ctx)+1 (all must exist)."""
        k = len(ctx) + 1
        p = probs[k - 1].get(ctx + (w,))
        if p is not None:
            return p
        if k == 1:
            return probs[0][(UNK,)]
        return backoff[k - 1].get(ctx, 1.0) * NgramLM._lower(probs, backoff, ctx[1:], w)

    def _map(self, token: str) -> str:
        return token if token in self.vocab_ else UNK

    def prob(self, token: str, context: Sequence[str] = ()) -> float:
        """p(token | context); context is truncated to the model order and mapped to <unk>."""
        check_is_fitted(self, "probs_")
        n = len(self.probs_)
        ctx = [c if c == BOS else self._map(c) for c in context][-(n - 1):] if n > 1 else []
        ctx = tuple([BOS] * (n - 1 - len(ctx)) + ctx)
        return self._lower(self.probs_, self.backoff_, ctx, self._map(token))

    def outcomes(self) -> list[str]:
        check_is_fitted(self, "probs_")
        return sorted(self.vocab_) + [UNK]

    def contexts(self) -> list[tuple[str, ...]]:
        """Every context with a stored back-off weight (the seen contexts)."""
        check_is_fitted(self, "probs_")
        out = []
        for bk in self.backoff_:
            out.extend(bk)
        return out

    def log_prob(self, tokens: Sequence[str]) -> float:
        """Natural-log probability of a sentence, including the ``</s>`` transition."""
        check_is_fitted(self, "probs_")
        n = len(self.probs_)
        mapped = [self._map(t) for t in tokens]
        return sum(math.log(self._lower(self.probs_, self.backoff_, ctx, w))
                   for ctx, w in _events(mapped, n))

    def perplexity(self, tokens: Sequence[str]) -> float:
        if len(tokens) == 0:
            raise ValueError("perplexity of an empty sentence is undefined")
        return math.exp(-self.log_prob(tokens) / (len(tokens) + 1))

    def score(self, X, y=None) -> float:
        """Mean negative per-sentence perplexity (higher is better)."""
        return -float(np.mean([self.perplexity(s) for s in X]))

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        """Write an ARPA-style table.

        Each order section lists ``log10 p<TAB>n-gram[<TAB>log10 backoff]``.
        Contexts that were never themselves predicted (``<s>``-padded
        prefixes) are listed with probability ``-99`` so their back-off
        weight has a home, as ARPA does for ``<s>``.
        """
        check_is_fitted(self, "probs_")
        n = len(self.probs_)
        sections = []
        for k in range(1, n + 1):
            entries = {g: p for g, p in self.probs_[k - 1].items()}
            bows = self.backoff_[k] if k < n else {}
            for ctx in bows:
                entries.setdefault(ctx, None)
            lines = []
            for g in sorted(entries):
                p = entries[g]
                lp = "-99" if p is None else repr(math.log10(p))
                line = f"{lp}\t{' '.join(g)}"
                if g in bows:
                    line += f"\t{math.log10(bows[g])!r}"
                lines.append(line)
            sections.append(lines)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# paramine n-gram LM: order={n} discount={self.discount!r} "
                     f"min_count={self.min_count}\n")
            fh.write(f"# unigram-backoff\t{math.log10(self.backoff_[0][()])!r}\n\n")
            fh.write("\\data\\\n")
            for k, lines in enumerate(sections, 1):
                fh.write(f"ngram {k}={len(lines)}\n")
            for k, lines in enumerate(sections, 1):
                fh.write(f"\n\\{k}-grams:\n")
                fh.write("\n".join(lines) + "\n")
            fh.write("\n\\end\\\n")

    @classmethod
    def load(cls, path) -> "NgramLM":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        header = dict(kv.split("=") for kv in lines[0].split(":", 1)[1].split())
        lm = cls(order=int(header["order"]), discount=float(header["discount"]),
                 min_count=int(header["min_count"]))
        uni_bow = 10 ** float(lines[1].split("\t")[1])
        n = lm.order
        probs = [dict() for _ in range(n)]
        backoff = [dict() for _ in range(n)]
        backoff[0][()] = uni_bow
        k = None
        for line in lines[2:]:
            if line.startswith("\\") and line.endswith("-grams:"):
                k = int(line[1:].split("-")[0])
                continue
            if k is None or not line or line.startswith("\\"):
                continue
            cols = line.split("\t")
            gram = tuple(cols[1].split(" "))
            if cols[0] != "-99":
                probs[k - 1][gram] = 10 ** float(cols[0])
            if len(cols) > 2:
                backoff[k][gram] = 10 ** float(cols[2])
        lm.probs_ = probs
        lm.backoff_ = backoff
        lm.vocab_ = frozenset(g[0] for g in probs[0] if g[0] != UNK)
        return lm


def train_lm(sentences: Iterable[Sequence[str]], order: int = 3, discount: float = 0.75,
             min_count: int = 2) -> NgramLM:
    return NgramLM(order=order, discount=discount, min_count=min_count).fit(sentences)


def perplexity(lm: NgramLM, tokens: Sequence[str]) -> float:
    return lm.perplexity(tokens)
