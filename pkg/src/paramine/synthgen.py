"""Seeded synthetic corpora that reproduce, at desk scale, the phenomena the
toolkit is built to measure: paraphrase clusters with graded STS files, and
MT-like "translations" that repeat common words and avoid rare ones.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import PairCorpus, SentencePair
from .evaluation import StsDataset, StsItem


@dataclass
class SyntheticParaphrases:
    corpus: PairCorpus
    dev: StsDataset
    test: StsDataset
    word_cluster: dict[str, int]

    def shared_core_fraction(self, a, b) -> float:
        """Multiset overlap of the cluster labels of two sentences, over the longer length."""
        ca = Counter(self.word_cluster[w] for w in a)
        cb = Counter(self.word_cluster[w] for w in b)
        return sum((ca & cb).values()) / max(len(a), len(b))


def _cluster_words(clusters: int, vocab: int) -> list[list[str]]:
    per = vocab // clusters
    return [[f"c{c:03d}w{j:04d}" for j in range(per)] for c in range(clusters)]


def gen_paraphrase_corpus(clusters: int, per_cluster: int, vocab: int, noise: float, seed: int = 0,
                          length: tuple[int, int] = (5, 10), sts_items: int = 200,
                          sts_length: int = 8) -> SyntheticParaphrases:
    """Paraphrase pairs over a vocabulary of synonym clusters.

    The vocabulary is split into ``clusters`` groups of ``vocab // clusters``
    interchangeable words (one concept each). A pair shares a core word
    multiset; each side then independently swaps a ``noise`` fraction of its
    positions for another word of the same cluster and is shuffled. Cluster
    ``c`` anchors ``per_cluster`` pairs (its concept is always in the core).

    STS items are built from cluster labels with independently drawn
    surface words, so the gold ``5 * shared-core fraction`` is only weakly
    visible on the surface and has to be learned from the substitutions.
    """
    if clusters < 2 or per_cluster < 1 or vocab // clusters < 2:
        raise ValueError("need clusters >= 2, per_cluster >= 1 and at least 2 words per cluster")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    lo, hi = length
    if lo < 1 or hi < lo or sts_length < 1:
        raise ValueError("invalid sentence length range")
    rng = np.random.default_rng(seed)
    words = _cluster_words(clusters, vocab)
    word_cluster = {w: c for c, ws in enumerate(words) for w in ws}

    def synonym(w):
        group = words[word_cluster[w]]
        j = int(rng.integers(len(group) - 1))
        return group[j] if group[j] != w else group[-1]

    def noisy(core):
        out = list(core)
        n_sub = int(round(noise * len(out)))
        for j in rng.choice(len(out), size=n_sub, replace=False):
            out[j] = synonym(out[j])
        rng.shuffle(out)
        return out

    pairs = []
    for c in range(clusters):
        for _ in range(per_cluster):
            L = int(rng.integers(lo, hi + 1))
            labels = [c] + list(rng.integers(clusters, size=L - 1))
            core = [words[l][rng.integers(len(words[l]))] for l in labels]
            pairs.append(SentencePair(noisy(core), noisy(core), lang_pair="syn-en", source=f"C{c:03d}"))
    order = rng.permutation(len(pairs))
    corpus = PairCorpus(pairs[i] for i in order)

    def sts(name):
        items = []
        half = max(1, clusters // 2)
        for _ in range(sts_items):
            perm = rng.permutation(clusters)
            mine, other = perm[:half], perm[half:]
            labels_a = list(rng.choice(mine, size=sts_length))
            k = int(rng.integers(0, sts_length + 1))
            shared = [labels_a[j] for j in rng.choice(sts_length, size=k, replace=False)]
            labels_b = shared + list(rng.choice(other, size=sts_length - k))
            a = [words[l][rng.integers(len(words[l]))] for l in labels_a]
            b = [words[l][rng.integers(len(words[l]))] for l in labels_b]
            rng.shuffle(b)
            items.append(StsItem(tuple(a), tuple(b), 5.0 * k / sts_length))
        return StsDataset(name, items)

    return SyntheticParaphrases(corpus, sts("synthetic-dev"), sts("synthetic-test"), word_cluster)


@dataclass
class MtLikeVocab:
    words: list[str]
    probs: np.ndarray
    banned: dict[str, str]  # rare word -> frequent substitute


def _zipf_vocab(vocab: int, exponent: float, n_frequent: int, vocab_shrink: float, rng) -> MtLikeVocab:
    words = [f"w{r:05d}" for r in range(1, vocab + 1)]
    p = 1.0 / np.arange(1, vocab + 1) ** exponent
    p /= p.sum()
    rare = np.arange(n_frequent, vocab)
    n_banned = int(round(vocab_shrink * len(rare)))
    banned_idx = np.sort(rng.choice(rare, size=n_banned, replace=False)) if n_banned else []
    freq_p = p[:n_frequent] / p[:n_frequent].sum()
    subs = rng.choice(n_frequent, size=len(banned_idx), p=freq_p) if n_banned else []
    return MtLikeVocab(words, p, {words[i]: words[s] for i, s in zip(banned_idx, subs)})


def gen_mt_like(pairs: int, repeat_rate: float, vocab_shrink: float, seed: int = 0,
                vocab: int = 2000, exponent: float = 1.0, n_frequent: int = 50,
                length: tuple[int, int] = (10, 25), kbest: int = 1) -> PairCorpus:
    """References sampled from a Zipfian vocabulary, paired with MT-like translations.

    Translations are derived from their reference in two steps:

    * restricted vocabulary: a ``vocab_shrink`` fraction of the rare word
      types (rank beyond ``n_frequent``) are unknown to the "MT system";
      each is always replaced by a fixed frequent substitute;
    * repetition: ``round(repeat_rate * length)`` tokens are copied to a
      random later position, picking tokens in proportion to their corpus
      frequency, so common words get repeated.

    With ``kbest > 1`` every reference gets that many independently
    repeated variants (``beam_rank`` 0..kbest-1), stored consecutively.
    """
    if not (0.0 <= repeat_rate <= 1.0 and 0.0 <= vocab_shrink <= 1.0):
        raise ValueError("rates must lie in [0, 1]")
    if pairs < 0 or kbest < 1 or not 0 < n_frequent < vocab:
        raise ValueError("invalid generator sizes")
    rng = np.random.default_rng(seed)
    voc = _zipf_vocab(vocab, exponent, n_frequent, vocab_shrink, rng)
    rank = {w: i for i, w in enumerate(voc.words)}
    lo, hi = length
    out = []
    for _ in range(pairs):
        L = int(rng.integers(lo, hi + 1))
        ref = [voc.words[i] for i in rng.choice(vocab, size=L, p=voc.probs)]
        mapped = [voc.banned.get(w, w) for w in ref]
        for beam in range(kbest):
            trans = _repeat(mapped, repeat_rate, voc.probs, rank, rng)
            out.append(SentencePair(ref, trans, lang_pair="syn-en", source="MT",
                                    beam_rank=beam if kbest > 1 else None))
    return PairCorpus(out)


def _repeat(tokens, rate, probs, rank, rng):
    L = len(tokens)
    m = int(round(rate * L))
    if m == 0:
        return list(tokens)
    w = np.array([probs[rank[t]] for t in tokens])
    src = rng.choice(L, size=m, replace=False, p=w / w.sum())
    inserts: dict[int, list[str]] = {}
    for j in sorted(src):
        slot = int(rng.integers(j + 1, L + 1))
        inserts.setdefault(slot, []).append(tokens[j])
    out = []
    for pos in range(L + 1):
        out.extend(inserts.get(pos, ()))
        if pos < L:
            out.append(tokens[pos])
    return out


def labeled_sentences(corpus: PairCorpus) -> tuple[list[tuple[str, ...]], list[int]]:
    """Flatten pairs into (sentences, labels): reference -> 1, translation -> 0."""
    X, y = [], []
    for p in corpus:
        X.extend([p.reference, p.translation])
        y.extend([1, 0])
    return X, y


def kbest_lists(corpus: PairCorpus) -> list[tuple[tuple[str, ...], list[tuple[str, ...]]]]:
    """Group consecutive pairs that share a reference into (reference, k-best translations)."""
    out: list[tuple[tuple[str, ...], list[tuple[str, ...]]]] = []
    for p in corpus:
        if out and out[-1][0] == p.reference and p.beam_rank not in (None, 0):
            out[-1][1].append(p.translation)
        else:
            out.append((p.reference, [p.translation]))
    return out
