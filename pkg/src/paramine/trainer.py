"""Margin-loss training of paraphrastic sentence encoders.

For each pair <s1, s2> in a mini-batch the loss is

    max(0, margin - cos(g(s1), g(s2)) + cos(g(s1), g(t1)))
  + max(0, margin - cos(g(s1), g(s2)) + cos(g(s2), g(t2)))

averaged over the batch, plus optional L2 terms on the compositional
weights and on the drift of the word embeddings from their initial values.
``t1`` is the first element of another pair in the batch most similar to
``s1`` under the current model (``t2`` likewise among second elements).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import checkpoint as ckpt
from .corpus import Vocabulary, vocab_from_sentences
from .embedder import (AvgEncoder, EmbeddingMatrix, GranEncoder, GranParams, LstmParams,
                       cosine_matrix, encode, pad_batch, rowwise_cosine, rowwise_cosine_grad)
from .validation import check_pairs, check_same_length, check_sentences

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = {"avg": 20, "gran": 3}


@dataclass
class TrainConfig:
    model: str = "avg"
    batch_size: int = 100
    margin: float = 0.4
    lambda_c: float = 0.0
    lambda_w: float = 0.0
    learning_rate: float = 0.001
    epochs: int | None = None
    seed: int = 0
    checkpoint_every_epoch: bool = False

    def __post_init__(self):
        if self.model not in DEFAULT_EPOCHS:
            raise ValueError(f"model must be one of {sorted(DEFAULT_EPOCHS)}, got {self.model!r}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 so every pair has a negative candidate")
        if self.margin < 0 or self.lambda_c < 0 or self.lambda_w < 0:
            raise ValueError("margin and regularization weights must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs is not None and self.epochs < 0:
            raise ValueError("epochs must be nonnegative")

    @property
    def n_epochs(self) -> int:
        return DEFAULT_EPOCHS[self.model] if self.epochs is None else self.epochs


class Adam:
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update of every array in ``params`` that has a gradient."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for k in sorted(self.m):
            out["adam.m." + k] = self.m[k]
            out["adam.v." + k] = self.v[k]
        return out

    def load_state(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for name, a in arrays.items():
            if name.startswith("adam.m."):
                self.m[name[7:]] = a.copy()
            elif name.startswith("adam.v."):
                self.v[name[7:]] = a.copy()


def select_negatives(E1: np.ndarray, E2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the most similar other pair for each first and each second element.

    Candidates for ``t1[i]`` are the first elements of the other pairs,
    candidates for ``t2[i]`` the second elements. Ties go to the lowest index.
    """
    if len(E1) < 2 or len(E1) != len(E2):
        raise ValueError("negative selection needs a batch of at least 2 pairs")
    out = []
    for E in (E1, E2):
        C = cosine_matrix(E, E)
        np.fill_diagonal(C, -np.inf)
        out.append(np.argmax(C, axis=1))
    return out[0], out[1]


@dataclass
class BatchLoss:
    loss: float
    grads: dict[str, np.ndarray] | None
    negatives: tuple[np.ndarray, np.ndarray]
    hinge: float = 0.0
    active: int = 0


def _encode_batch(encoder, batch):
    seqs = [a for a, _ in batch] + [b for _, b in batch]
    idx, mask = pad_batch(seqs)
    return encoder.forward(idx, mask)


def regularizer(encoder, cfg: TrainConfig) -> float:
    total = 0.0
    if cfg.lambda_c:
        total += cfg.lambda_c * sum(float(np.sum(a * a)) for a in encoder.compositional().values())
    if cfg.lambda_w:
        diff = encoder.emb.W - encoder.emb.W_initial
        total += cfg.lambda_w * float(np.sum(diff * diff))
    return total


def batch_loss(encoder, batch: Sequence[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
               negatives=None, need_grad: bool = True) -> BatchLoss:
    """Loss and exact gradients for one batch of index-encoded pairs.

    Negatives are chosen with the current parameters unless given; either
    way they are held fixed by index while differentiating.
    """
    B = len(batch)
    if B < 2:
        raise ValueError("a batch needs at least 2 pairs")
    E, cache = _encode_batch(encoder, batch)
    E1, E2 = E[:B], E[B:]
    if negatives is None:
        negatives = select_negatives(E1, E2)
    t1, t2 = negatives
    pos, pos_c = rowwise_cosine(E1, E2)
    neg1, neg1_c = rowwise_cosine(E1, E1[t1])
    neg2, neg2_c = rowwise_cosine(E2, E2[t2])
    l1 = cfg.margin - pos + neg1
    l2 = cfg.margin - pos + neg2
    a1 = (l1 > 0).astype(np.float64)
    a2 = (l2 > 0).astype(np.float64)
    hinge = float(np.sum(np.maximum(l1, 0.0) + np.maximum(l2, 0.0)) / B)
    loss = hinge + regularizer(encoder, cfg)
    result = BatchLoss(loss, None, (t1, t2), hinge, int(a1.sum() + a2.sum()))
    if not need_grad:
        return result

    dE1 = np.zeros_like(E1)
    dE2 = np.zeros_like(E2)
    dp1, dp2 = rowwise_cosine_grad(-(a1 + a2) / B, pos_c)
    dE1 += dp1
    dE2 += dp2
    du, dn = rowwise_cosine_grad(a1 / B, neg1_c)
    dE1 += du
    np.add.at(dE1, t1, dn)
    du, dn = rowwise_cosine_grad(a2 / B, neg2_c)
    dE2 += du
    np.add.at(dE2, t2, dn)
    grads = encoder.backward(np.concatenate([dE1, dE2]), cache)

    if cfg.lambda_c:
        for k, a in encoder.compositional().items():
            grads[k] = grads[k] + 2.0 * cfg.lambda_c * a
    if cfg.lambda_w:
        grads["W_w"] = grads["W_w"] + 2.0 * cfg.lambda_w * (encoder.emb.W - encoder.emb.W_initial)
    result.grads = grads
    return result


def grad_check(encoder, batch, cfg: TrainConfig, eps: float = 1e-5, n_coords: int = 200,
               seed: int = 0) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Coordinates are sampled uniformly without replacement from all
    parameters (all of them if there are fewer than ``n_coords``).
    Relative error is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    res = batch_loss(encoder, batch, cfg)
    params = encoder.params()
    names = sorted(params)
    sizes = [params[k].size for k in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in np.sort(picks):
        j = int(np.searchsorted(bounds, flat, side="right") - 1)
        name = names[j]
        arr = params[name].reshape(-1)
        k = int(flat - bounds[j])
        orig = arr[k]
        arr[k] = orig + eps
        f_plus = batch_loss(encoder, batch, cfg, res.negatives, need_grad=False).loss
        arr[k] = orig - eps
        f_minus = batch_loss(encoder, batch, cfg, res.negatives, need_grad=False).loss
        arr[k] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        analytic = res.grads[name].reshape(-1)[k]
        err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, err)
    return worst


@dataclass
class TrainResult:
    best_epoch: int
    epochs_run: int
    losses: list[float] = field(default_factory=list)
    dev_scores: list[float] = field(default_factory=list)
    initial_dev_score: float | None = None


def _snapshot(encoder, opt: Adam):
    return ({k: v.copy() for k, v in encoder.params().items()}, copy.deepcopy(opt))


def _restore(encoder, snap):
    params, opt = snap
    for k, v in encoder.params().items():
        v[...] = params[k]
    return opt


def train(encoder, pairs: Sequence[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
          dev_eval: Callable[[object], float] | None = None,
          on_epoch: Callable[[int, object, Adam], None] | None = None,
          optimizer: Adam | None = None) -> tuple[TrainResult, Adam]:
    """Run the epoch loop in place on ``encoder``.

    ``pairs`` are index-encoded. With ``dev_eval`` the parameters of the
    epoch with the best dev score are restored at the end (the stopping
    epoch); otherwise the final parameters are kept.
    """
    if len(pairs) < cfg.batch_size:
        raise ValueError(f"corpus of {len(pairs)} pairs is smaller than one batch ({cfg.batch_size})")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2])
    opt = optimizer or Adam(lr=cfg.learning_rate)
    params = encoder.params()
    result = TrainResult(best_epoch=0, epochs_run=0)
    best = None
    if dev_eval is not None:
        result.initial_dev_score = float(dev_eval(encoder))
    B = cfg.batch_size
    for epoch in range(1, cfg.n_epochs + 1):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(order), B):
            chunk = order[start:start + B]
            if len(chunk) < 2:
                continue
            res = batch_loss(encoder, [pairs[i] for i in chunk], cfg)
            opt.step(params, res.grads)
            losses.append(res.loss)
        result.losses.append(float(np.mean(losses)))
        result.epochs_run = epoch
        if dev_eval is not None:
            score = float(dev_eval(encoder))
            result.dev_scores.append(score)
            if best is None or score > best[0]:
                best = (score, epoch, _snapshot(encoder, opt))
            log.info("epoch %d loss %.4f dev %.4f", epoch, result.losses[-1], score)
        else:
            log.info("epoch %d loss %.4f", epoch, result.losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, encoder, opt)
    result.best_epoch = result.epochs_run
    if best is not None:
        result.best_epoch = best[1]
        opt = _restore(encoder, best[2])
    return result, opt


# -- estimator -----------------------------------------------------------------

def _seeds(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)[:2]]


def build_encoder(kind: str, emb: EmbeddingMatrix, hidden_size: int | None, rng):
    if kind == "avg":
        return AvgEncoder(emb)
    if kind == "gran":
        return GranEncoder(emb, GranParams.init(emb.dim, hidden_size, rng))
    raise ValueError(f"unknown model {kind!r}")


class ParaphraseEmbedder(TransformerMixin, BaseEstimator):
    """Paraphrastic sentence embeddings trained on sentence pairs.

    Parameters
    ----------
    model : {"avg", "gran"}, default="avg"
    dim : int, default=50
        Word vector size when no ``embeddings`` file is given.
    hidden_size : int or None, default=None
        GRAN LSTM size; defaults to ``dim``.
    batch_size, margin, lambda_c, lambda_w, learning_rate, epochs
        See :class:`TrainConfig`. ``epochs=None`` means 20 for AVG and 3
        for GRAN.
    min_count : int, default=1
        Vocabulary threshold over the training pairs.
    embeddings : str or None
        Text embedding file used to initialise the word vectors.
    init_scale : float, default=0.1
        Word vectors not taken from ``embeddings`` start uniform in
        ``[-init_scale, init_scale]``.
    random_state : int, default=0
        Seeds initialisation and shuffling.

    Attributes
    ----------
    encoder_ : AvgEncoder or GranEncoder
    vocab_ : Vocabulary
    train_result_ : TrainResult
    """

    def __init__(self, model="avg", dim=50, hidden_size=None, batch_size=100, margin=0.4,
                 lambda_c=0.0, lambda_w=0.0, learning_rate=0.001, epochs=None, min_count=1,
                 embeddings=None, init_scale=0.1, random_state=0):
        self.model = model
        self.dim = dim
        self.hidden_size = hidden_size
        self.batch_size = batch_size
        self.margin = margin
        self.lambda_c = lambda_c
        self.lambda_w = lambda_w
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.min_count = min_count
        self.embeddings = embeddings
        self.init_scale = init_scale
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(model=self.model, batch_size=self.batch_size, margin=self.margin,
                           lambda_c=self.lambda_c, lambda_w=self.lambda_w,
                           learning_rate=self.learning_rate, epochs=self.epochs,
                           seed=self.random_state)

    def init_encoder(self, vocab: Vocabulary):
        emb_rng, comp_rng = _seeds(self.random_state)
        if self.embeddings:
            emb = EmbeddingMatrix.from_file(self.embeddings, vocab, seed=int(emb_rng.integers(2**31)),
                                            scale=self.init_scale)
        else:
            s = self.init_scale
            emb = EmbeddingMatrix(vocab, emb_rng.uniform(-s, s, size=(len(vocab), self.dim)))
        return build_encoder(self.model, emb, self.hidden_size, comp_rng)

    def fit(self, X, y=None, dev_eval=None, on_epoch=None):
        """Train on sentence pairs.

        ``X`` is a :class:`PairCorpus` or an iterable of (tokens, tokens).
        ``dev_eval`` maps the fitted estimator to a score (e.g. average
        Pearson r on STS files) and selects the stopping epoch.
        """
        cfg = self.train_config()
        pairs = check_pairs(X)
        self.vocab_ = vocab_from_sentences((s for p in pairs for s in p), self.min_count)
        self.encoder_ = self.init_encoder(self.vocab_)
        encoded = [(self.vocab_.encode(a), self.vocab_.encode(b)) for a, b in pairs]
        wrapped = None if dev_eval is None else (lambda enc: dev_eval(self))
        hook = None if on_epoch is None else (lambda ep, enc, opt: on_epoch(ep, self, opt))
        self.train_result_, self.optimizer_ = train(self.encoder_, encoded, cfg, wrapped, hook)
        self.epoch_ = self.train_result_.best_epoch
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "encoder_")
        return encode(self.encoder_, check_sentences(X))

    def similarity(self, X1, X2) -> np.ndarray:
        """Cosine similarity of matching sentences in ``X1`` and ``X2``."""
        X1, X2 = check_sentences(X1), check_sentences(X2)
        check_same_length(X1, X2)
        E1, E2 = self.transform(X1), self.transform(X2)
        return rowwise_cosine(E1, E2)[0]

    # -- checkpoints -----------------------------------------------------------

    def save(self, path, epoch: int | None = None, optimizer: Adam | None = None) -> None:
        """Write config echo, vocabulary, parameters and Adam state to a checkpoint."""
        check_is_fitted(self, "encoder_")
        opt = optimizer if optimizer is not None else getattr(self, "optimizer_", None)
        arrays = dict(self.encoder_.params())
        meta = {
            "kind": "embedder",
            "config": self.get_params(),
            "vocab": self.vocab_.tokens,
            "epoch": self.epoch_ if epoch is None else epoch,
            "W_w_initial_sha256": ckpt.array_digest(self.encoder_.emb.W_initial),
            "adam_t": 0 if opt is None else opt.t,
        }
        if opt is not None:
            arrays.update(opt.state())
        ckpt.save_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "ParaphraseEmbedder":
        meta, arrays = ckpt.load_container(path)
        if meta.get("kind") != "embedder":
            raise ckpt.CheckpointError(f"{path}: not an embedder checkpoint")
        est = cls(**meta["config"])
        est.vocab_ = Vocabulary(meta["vocab"][1:])
        W = arrays["W_w"]
        emb = EmbeddingMatrix(est.vocab_, W)
        if est.model == "gran":
            lstm = LstmParams(arrays["lstm.W"], arrays["lstm.U"], arrays["lstm.b"])
            est.encoder_ = GranEncoder(emb, GranParams(lstm, arrays["gate.W_x"], arrays["gate.W_h"],
                                                       arrays["gate.b"]))
        else:
            est.encoder_ = AvgEncoder(emb)
        est.epoch_ = meta["epoch"]
        opt = Adam(lr=est.learning_rate)
        opt.load_state(arrays, meta["adam_t"])
        est.optimizer_ = opt
        est.W_w_initial_sha256_ = meta["W_w_initial_sha256"]
        return est

    def config_dict(self) -> dict:
        return asdict(self.train_config())
