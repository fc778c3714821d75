"""Reference-vs-translation classifiers and the analyses built on them."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import checkpoint as ckpt
from .corpus import PairCorpus, Vocabulary, vocab_from_sentences
from .embedder import AvgEncoder, EmbeddingMatrix, LstmEncoder, LstmParams, pad_batch
from .evaluation import UndefinedCorrelationError, spearman
from .textstats import IdfTable, avg_idf, repetition_rate
from .trainer import Adam
from .validation import check_labels, check_sentences

log = logging.getLogger(__name__)

L2_GRID = (1e-5, 1e-6, 1e-7, 1e-8, 0.0)
REFERENCE, TRANSLATION = 1, 0


@dataclass
class ClassifierConfig:
    encoder: str = "avg"
    l2: float = 0.0
    negative_mode: str = "random"
    epochs: int = 10
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.encoder not in ("avg", "lstm"):
            raise ValueError(f"encoder must be 'avg' or 'lstm', got {self.encoder!r}")
        if self.negative_mode not in ("random", "hardest"):
            raise ValueError(f"negative_mode must be 'random' or 'hardest', got {self.negative_mode!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")


class ReferenceClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier: human reference (1) vs machine translation (0).

    A word-averaging or LSTM encoder (mean of hidden states) feeds an affine
    map to two logits followed by a softmax. Training minimises mean cross
    entropy plus ``l2 * ||W_w||^2`` with Adam and keeps the epoch with the
    best validation accuracy.

    Parameters
    ----------
    encoder : {"avg", "lstm"}, default="avg"
    dim : int, default=50
    hidden_size : int or None, default=None
        LSTM size, defaults to ``dim``.
    l2 : float, default=0.0
        Weight of the L2 penalty on the word embeddings.
    negative_mode : {"random", "hardest"}, default="random"
        How :meth:`fit_kbest` picks the translation of each k-best list.
    epochs : int, default=10
    learning_rate : float, default=0.001
    batch_size : int, default=32
    min_count : int, default=1
    embeddings : str or None
        Optional text embedding file for initialisation.
    init_scale : float, default=0.1
    random_state : int, default=0
    """

    def __init__(self, encoder="avg", dim=50, hidden_size=None, l2=0.0, negative_mode="random",
                 epochs=10, learning_rate=0.001, batch_size=32, min_count=1, embeddings=None,
                 init_scale=0.1, random_state=0):
        self.encoder = encoder
        self.dim = dim
        self.hidden_size = hidden_size
        self.l2 = l2
        self.negative_mode = negative_mode
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.min_count = min_count
        self.embeddings = embeddings
        self.init_scale = init_scale
        self.random_state = random_state

    def config(self) -> ClassifierConfig:
        return ClassifierConfig(self.encoder, self.l2, self.negative_mode, self.epochs,
                                self.learning_rate, self.random_state)

    # -- model plumbing --------------------------------------------------------

    def _init(self, vocab: Vocabulary):
        emb_ss, comp_ss, self._shuffle_ss = np.random.SeedSequence(self.random_state).spawn(3)
        emb_rng, comp_rng = np.random.default_rng(emb_ss), np.random.default_rng(comp_ss)
        if self.embeddings:
            emb = EmbeddingMatrix.from_file(self.embeddings, vocab, seed=int(emb_rng.integers(2**31)),
                                            scale=self.init_scale)
        else:
            s = self.init_scale
            emb = EmbeddingMatrix(vocab, emb_rng.uniform(-s, s, size=(len(vocab), self.dim)))
        if self.encoder == "lstm":
            H = self.hidden_size or emb.dim
            self.encoder_ = LstmEncoder(emb, LstmParams.init(emb.dim, H, comp_rng))
        else:
            self.encoder_ = AvgEncoder(emb)
        self.W_out_ = comp_rng.uniform(-0.05, 0.05, size=(self.encoder_.dim, 2))
        self.b_out_ = np.zeros(2)

    def params(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder_.params())
        out["out.W"] = self.W_out_
        out["out.b"] = self.b_out_
        return out

    def _logits(self, idx, mask):
        E, cache = self.encoder_.forward(idx, mask)
        return E @ self.W_out_ + self.b_out_, (E, cache)

    def loss_and_grads(self, seqs: Sequence[np.ndarray], y: np.ndarray):
        """Mean cross entropy plus L2 penalty, and its gradients."""
        idx, mask = pad_batch(seqs)
        logits, (E, cache) = self._logits(idx, mask)
        P = softmax(logits, axis=1)
        n = len(y)
        W = self.encoder_.emb.W
        loss = -float(np.mean(np.log(np.maximum(P[np.arange(n), y], 1e-300)))) + self.l2 * float(np.sum(W * W))
        dlogits = P.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grads = self.encoder_.backward(dlogits @ self.W_out_.T, cache)
        grads["out.W"] = E.T @ dlogits
        grads["out.b"] = dlogits.sum(axis=0)
        if self.l2:
            grads["W_w"] = grads["W_w"] + 2.0 * self.l2 * W
        return loss, grads

    def _encode(self, X) -> list[np.ndarray]:
        vocab = self.encoder_.emb.vocab
        return [vocab.encode(s) for s in X]

    def _proba_encoded(self, seqs, batch_size=512) -> np.ndarray:
        out = np.empty((len(seqs), 2))
        for start in range(0, len(seqs), batch_size):
            idx, mask = pad_batch(seqs[start:start + batch_size])
            out[start:start + batch_size] = softmax(self._logits(idx, mask)[0], axis=1)
        return out

    # -- sklearn surface -------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None):
        self.config()
        X = check_sentences(X)
        y = np.asarray(check_labels(y, len(X)), dtype=np.int64)
        if len(set(y.tolist())) < 2:
            raise ValueError("training data must contain both references and translations")
        self.classes_ = np.array([TRANSLATION, REFERENCE])
        self.vocab_ = vocab_from_sentences(X, self.min_count)
        self._init(self.vocab_)
        seqs = self._encode(X)
        self._train(lambda epoch: (seqs, y), X_val, y_val)
        return self

    def fit_kbest(self, kbest: Sequence[tuple[Sequence[str], Sequence[Sequence[str]]]],
                  X_val=None, y_val=None):
        """Train from (reference, k-best translations) lists.

        Each epoch uses one reference (label 1) and one translation (label
        0) per list. In ``random`` mode the translation is drawn at random
        every epoch; in ``hardest`` mode the first epoch draws at random and
        later epochs take the candidate the current model finds most
        reference-like.
        """
        self.config()
        refs = [list(r) for r, _ in kbest]
        cands = [[list(t) for t in ts] for _, ts in kbest]
        if any(len(ts) == 0 for ts in cands):
            raise ValueError("every k-best list needs at least one translation")
        all_sents = refs + [t for ts in cands for t in ts]
        self.classes_ = np.array([TRANSLATION, REFERENCE])
        self.vocab_ = vocab_from_sentences(all_sents, self.min_count)
        self._init(self.vocab_)
        sel_rng = np.random.default_rng(self._shuffle_ss.spawn(1)[0])

        def data(epoch):
            scorer = self if (self.negative_mode == "hardest" and epoch > 1) else None
            X, y = make_training_set(list(zip(refs, cands)), "hardest" if scorer else "random",
                                     scorer=scorer, rng=sel_rng)
            return self._encode(X), np.asarray(y, dtype=np.int64)

        self._train(data, X_val, y_val)
        return self

    def _train(self, data_for_epoch, X_val, y_val):
        rng = np.random.default_rng(self._shuffle_ss)
        opt = Adam(lr=self.learning_rate)
        params = self.params()
        val = None
        if X_val is not None:
            Xv = check_sentences(X_val)
            val = (self._encode(Xv), np.asarray(check_labels(y_val, len(Xv))))
        best = None
        self.history_ = []
        for epoch in range(1, self.epochs + 1):
            seqs, y = data_for_epoch(epoch)
            order = rng.permutation(len(seqs))
            losses = []
            for start in range(0, len(order), self.batch_size):
                chunk = order[start:start + self.batch_size]
                loss, grads = self.loss_and_grads([seqs[i] for i in chunk], y[chunk])
                opt.step(params, grads)
                losses.append(loss)
            entry = {"epoch": epoch, "loss": float(np.mean(losses))}
            if val is not None:
                acc = float(np.mean(self._proba_encoded(val[0]).argmax(axis=1) == val[1]))
                entry["val_accuracy"] = acc
                if best is None or acc > best[0]:
                    best = (acc, epoch, {k: v.copy() for k, v in params.items()})
            self.history_.append(entry)
            log.info("classifier epoch %s", entry)
        self.best_epoch_ = self.epochs
        if best is not None:
            self.best_epoch_ = best[1]
            for k, v in params.items():
                v[...] = best[2][k]

    def predict_proba(self, X) -> np.ndarray:
        """Columns follow ``classes_``: P(translation), P(reference)."""
        check_is_fitted(self, "encoder_")
        return self._proba_encoded(self._encode(check_sentences(X)))

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def reference_probability(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "encoder_")
        meta = {"kind": "classifier", "config": self.get_params(), "vocab": self.vocab_.tokens,
                "epoch": self.best_epoch_,
                "W_w_initial_sha256": ckpt.array_digest(self.encoder_.emb.W_initial)}
        ckpt.save_container(path, meta, self.params())

    @classmethod
    def load(cls, path) -> "ReferenceClassifier":
        meta, arrays = ckpt.load_container(path)
        if meta.get("kind") != "classifier":
            raise ckpt.CheckpointError(f"{path}: not a classifier checkpoint")
        clf = cls(**meta["config"])
        clf.vocab_ = Vocabulary(meta["vocab"][1:])
        emb = EmbeddingMatrix(clf.vocab_, arrays["W_w"])
        if clf.encoder == "lstm":
            clf.encoder_ = LstmEncoder(emb, LstmParams(arrays["lstm.W"], arrays["lstm.U"], arrays["lstm.b"]))
        else:
            clf.encoder_ = AvgEncoder(emb)
        clf.W_out_ = arrays["out.W"]
        clf.b_out_ = arrays["out.b"]
        clf.classes_ = np.array([TRANSLATION, REFERENCE])
        clf.best_epoch_ = meta["epoch"]
        return clf


def make_training_set(kbest, mode: str = "random", scorer=None, seed: int = 0, rng=None):
    """One labelled reference and one labelled translation per k-best list.

    ``hardest`` picks the candidate with the highest reference probability
    under ``scorer`` (ties to the lowest index); ``random`` picks uniformly.
    Returns ``(sentences, labels)`` of length ``2 * len(kbest)``.
    """
    if mode not in ("random", "hardest"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "hardest" and scorer is None:
        raise ValueError("hardest mode needs a scorer")
    rng = rng if rng is not None else np.random.default_rng(seed)
    X, y = [], []
    for ref, cands in kbest:
        if len(cands) == 0:
            raise ValueError("empty k-best list")
        if len(cands) == 1:
            pick = 0
        elif mode == "random":
            pick = int(rng.integers(len(cands)))
        else:
            pick = int(np.argmax(scorer.reference_probability(cands)))
        X.extend([ref, cands[pick]])
        y.extend([REFERENCE, TRANSLATION])
    return X, y


@dataclass
class ClassifierReport:
    accuracy: float
    pos_accuracy: float
    neg_accuracy: float
    n_pos: int
    n_neg: int


def classifier_report(clf, X, y, threshold: float = 0.5) -> ClassifierReport:
    """Overall, reference-class and translation-class accuracy at P(R) >= threshold."""
    X = check_sentences(X)
    y = np.asarray(check_labels(y, len(X)))
    if len(y) == 0:
        raise ValueError("empty test set")
    pred = (clf.reference_probability(X) >= threshold).astype(int)
    pos, neg = y == REFERENCE, y == TRANSLATION
    acc_pos = float(np.mean(pred[pos] == 1)) if pos.any() else float("nan")
    acc_neg = float(np.mean(pred[neg] == 0)) if neg.any() else float("nan")
    return ClassifierReport(float(np.mean(pred == y)), acc_pos, acc_neg, int(pos.sum()), int(neg.sum()))


REPORT_COLUMNS = ("lang", "source", "acc", "pos_acc", "neg_acc")


def classifier_report_table(clf, corpus: PairCorpus) -> list[dict]:
    """Per-(lang, source) accuracies on a pair corpus, references labelled 1, translations 0."""
    rows = []
    for (lang, source), group in corpus.groups().items():
        X = [p.reference for p in group] + [p.translation for p in group]
        y = [REFERENCE] * len(group) + [TRANSLATION] * len(group)
        r = classifier_report(clf, X, y)
        rows.append({"lang": lang, "source": source, "acc": r.accuracy,
                     "pos_acc": r.pos_accuracy, "neg_acc": r.neg_accuracy})
    return rows


def format_report_table(rows, fmt="tsv") -> str:
    """Accuracies x 100 with one decimal."""
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append("\t".join([r["lang"], r["source"]] + [f"{100 * r[c]:.1f}" for c in REPORT_COLUMNS[2:]]))
    return "\n".join(lines) + "\n"


CORRELATION_METRICS = ("Unigram repetition rate", "Trigram repetition rate", "Average IDF", "Length")


@dataclass
class Correlation:
    metric: str
    rho: float
    defined: bool = True


def metric_correlations(clf, corpus: PairCorpus, idf: IdfTable) -> list[Correlation]:
    """Spearman rho between P(R) of each translation and per-sentence measures.

    A constant measure leaves rho undefined; it is reported as 0 with
    ``defined=False``.
    """
    if len(corpus) < 3:
        raise ValueError("need at least 3 pairs to correlate")
    trans = corpus.translations()
    pr = clf.reference_probability(trans)
    measures = {
        "Unigram repetition rate": [repetition_rate(t, 1) for t in trans],
        "Trigram repetition rate": [repetition_rate(t, 3) for t in trans],
        "Average IDF": [avg_idf(t, idf) for t in trans],
        "Length": [len(t) for t in trans],
    }
    return correlate(pr, measures)


def correlate(scores, measures: dict[str, Sequence[float]]) -> list[Correlation]:
    out = []
    for name, values in measures.items():
        try:
            out.append(Correlation(name, spearman(scores, values)))
        except UndefinedCorrelationError:
            out.append(Correlation(name, 0.0, defined=False))
    return out


def format_correlations(rows: Sequence[Correlation], fmt="tsv") -> str:
    """Spearman rho x 100, one decimal."""
    if fmt == "json":
        return json.dumps([{"metric": c.metric, "rho": c.rho, "defined": c.defined} for c in rows],
                          indent=2) + "\n"
    lines = ["metric\tspearman_rho100\tdefined"]
    for c in rows:
        lines.append(f"{c.metric}\t{100 * c.rho:.1f}\t{str(c.defined).lower()}")
    return "\n".join(lines) + "\n"
