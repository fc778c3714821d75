"""Sentence encoders: word averaging (AVG), LSTM, and the gated recurrent
averaging network (GRAN), with hand-written reverse-mode gradients.

Everything operates on right-padded index batches so one numpy call handles
a whole mini-batch per time step. Padding positions are masked out of the
outputs, which makes their gradient contributions exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .corpus import Vocabulary

NORM_EPS = 1e-12


class EmbeddingMatrix:
    """Vocabulary-indexed word vectors plus a frozen copy of their initial values."""

    def __init__(self, vocab: Vocabulary, W: np.ndarray):
        W = np.array(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != len(vocab):
            raise ValueError(f"embedding matrix shape {W.shape} does not match vocabulary of {len(vocab)}")
        if not np.all(np.isfinite(W)):
            raise ValueError("embedding matrix has non-finite entries")
        self.vocab = vocab
        self.W = W
        self.W_initial = W.copy()
        self.W_initial.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def __len__(self) -> int:
        return self.W.shape[0]

    def row(self, token: str) -> np.ndarray:
        return self.W[self.vocab.index(token)]

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return self.vocab.encode(tokens)

    @classmethod
    def random(cls, vocab: Vocabulary, dim: int, seed: int = 0, scale: float = 0.1) -> "EmbeddingMatrix":
        rng = np.random.default_rng(seed)
        return cls(vocab, rng.uniform(-scale, scale, size=(len(vocab), dim)))

    @classmethod
    def from_file(cls, path, vocab: Vocabulary, seed: int = 0, scale: float = 0.1) -> "EmbeddingMatrix":
        """Initialise from a text embedding file; tokens missing from the file get uniform noise."""
        vectors = read_embedding_file(path)
        if not vectors:
            raise ValueError(f"{path}: no vectors found")
        dim = len(next(iter(vectors.values())))
        rng = np.random.default_rng(seed)
        W = rng.uniform(-scale, scale, size=(len(vocab), dim))
        for i, tok in enumerate(vocab.tokens):
            v = vectors.get(tok)
            if v is not None:
                W[i] = v
        return cls(vocab, W)


def read_embedding_file(path) -> dict[str, np.ndarray]:
    """Parse ``token v1 ... vd`` lines; an optional leading ``V d`` header is skipped."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            vec = np.asarray(parts[1:], dtype=np.float64)
            if dim is None:
                dim = len(vec)
            if len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            vectors[parts[0]] = vec
    return vectors


def write_embedding_file(path, emb: EmbeddingMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(emb)} {emb.dim}\n")
        for tok, row in zip(emb.vocab.tokens, emb.W):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")


# -- parameters ----------------------------------------------------------------

@dataclass
class LstmParams:
    """Gate blocks are stacked in the order input, forget, output, candidate."""

    W: np.ndarray  # input -> gates, (d, 4H)
    U: np.ndarray  # hidden -> gates, (H, 4H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        d, h4 = self.W.shape
        if h4 % 4 or self.U.shape != (h4 // 4, h4) or self.b.shape != (h4,):
            raise ValueError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @classmethod
    def init(cls, d: int, H: int, rng: np.random.Generator, scale: float = 0.05) -> "LstmParams":
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        return cls(rng.uniform(-scale, scale, (d, 4 * H)), rng.uniform(-scale, scale, (H, 4 * H)), b)

    def arrays(self, prefix: str = "lstm.") -> dict[str, np.ndarray]:
        return {prefix + "W": self.W, prefix + "U": self.U, prefix + "b": self.b}


@dataclass
class GranParams:
    lstm: LstmParams
    W_x: np.ndarray  # (d, d)
    W_h: np.ndarray  # (H, d)
    b: np.ndarray  # (d,)

    def __post_init__(self):
        d, H = self.lstm.input_size, self.lstm.hidden_size
        if self.W_x.shape != (d, d) or self.W_h.shape != (H, d) or self.b.shape != (d,):
            raise ValueError("inconsistent GRAN gate shapes")

    @classmethod
    def init(cls, d: int, H: int | None, rng: np.random.Generator, scale: float = 0.05) -> "GranParams":
        H = d if H is None else H
        lstm = LstmParams.init(d, H, rng, scale)
        return cls(lstm, rng.uniform(-scale, scale, (d, d)), rng.uniform(-scale, scale, (H, d)), np.zeros(d))

    def arrays(self) -> dict[str, np.ndarray]:
        out = self.lstm.arrays()
        out.update({"gate.W_x": self.W_x, "gate.W_h": self.W_h, "gate.b": self.b})
        return out


# -- batching ------------------------------------------------------------------

def pad_batch(seqs: Sequence[np.ndarray], pad: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad index sequences; returns (indices (n, T), mask (n, T))."""
    lengths = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
    if len(seqs) == 0 or lengths.min() == 0:
        raise ValueError("cannot embed an empty sentence")
    T = int(lengths.max())
    idx = np.full((len(seqs), T), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for i, s in enumerate(seqs):
        idx[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return idx, mask


# -- LSTM ----------------------------------------------------------------------

def lstm_forward_batch(p: LstmParams, X: np.ndarray):
    """Run the LSTM over (n, T, d) inputs from zero state; returns hidden states (n, T, H) and a cache."""
    n, T, d = X.shape
    if d != p.input_size:
        raise ValueError(f"input size {d} does not match LSTM input size {p.input_size}")
    H = p.hidden_size
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    hs = np.empty((n, T, H))
    cs = np.empty((n, T, H))
    gates = np.empty((n, T, 4 * H))
    XW = X @ p.W + p.b
    for t in range(T):
        z = XW[:, t] + h @ p.U
        g = gates[:, t]
        g[:, :3 * H] = expit(z[:, :3 * H])
        g[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 3 * H:]
        h = g[:, 2 * H:3 * H] * np.tanh(c)
        hs[:, t] = h
        cs[:, t] = c
    return hs, (X, hs, cs, gates)


def lstm_backward_batch(p: LstmParams, dHs: np.ndarray, cache):
    X, hs, cs, gates = cache
    n, T, H = hs.shape
    dX = np.empty_like(X)
    dZ = np.empty((n, T, 4 * H))
    dh_next = np.zeros((n, H))
    dc_next = np.zeros((n, H))
    zeros = np.zeros((n, H))
    for t in range(T - 1, -1, -1):
        g = gates[:, t]
        i, f, o, cand = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        c_prev = cs[:, t - 1] if t > 0 else zeros
        tc = np.tanh(cs[:, t])
        dh = dHs[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dZ[:, t]
        dz[:, :H] = dc * cand * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - cand * cand)
        dc_next = dc * f
        dh_next = dz @ p.U.T
    h_prev = np.concatenate([np.zeros((n, 1, H)), hs[:, :-1]], axis=1)
    flat = dZ.reshape(-1, 4 * H)
    grads = {
        "W": X.reshape(-1, X.shape[2]).T @ flat,
        "U": h_prev.reshape(-1, H).T @ flat,
        "b": flat.sum(axis=0),
    }
    dX[:] = dZ @ p.W.T
    return dX, grads


def lstm_forward(p: LstmParams, xs: np.ndarray) -> np.ndarray:
    """Hidden states h_1..h_T for a single (T, d) input sequence."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or len(xs) == 0:
        raise ValueError("expected a nonempty (T, d) input sequence")
    hs, _ = lstm_forward_batch(p, xs[None])
    return hs[0]


# -- encoders ------------------------------------------------------------------

def _scatter_rows(n_rows: int, idx: np.ndarray, dX: np.ndarray) -> np.ndarray:
    dW = np.zeros((n_rows, dX.shape[-1]))
    np.add.at(dW, idx.ravel(), dX.reshape(-1, dX.shape[-1]))
    return dW


class AvgEncoder:
    """Mean of word vectors. The only parameters are the word embeddings."""

    kind = "avg"

    def __init__(self, emb: EmbeddingMatrix):
        self.emb = emb

    @property
    def dim(self) -> int:
        return self.emb.dim

    def params(self) -> dict[str, np.ndarray]:
        return {"W_w": self.emb.W}

    def compositional(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, idx, mask):
        lengths = mask.sum(axis=1, keepdims=True)
        E = np.einsum("nt,ntd->nd", mask, self.emb.W[idx]) / lengths
        return E, (idx, mask, lengths)

    def backward(self, dE, cache):
        idx, mask, lengths = cache
        dX = (dE / lengths)[:, None, :] * mask[:, :, None]
        return {"W_w": _scatter_rows(len(self.emb), idx, dX)}


class GranEncoder:
    """Gated recurrent averaging: mean over t of x_t * sigmoid(W_x x_t + W_h h_t + b)."""

    kind = "gran"

    def __init__(self, emb: EmbeddingMatrix, gran: GranParams):
        if gran.lstm.input_size != emb.dim:
            raise ValueError("GRAN input size must equal the embedding dimension")
        self.emb = emb
        self.gran = gran

    @property
    def dim(self) -> int:
        return self.emb.dim

    def params(self) -> dict[str, np.ndarray]:
        out = {"W_w": self.emb.W}
        out.update(self.gran.arrays())
        return out

    def compositional(self) -> dict[str, np.ndarray]:
        return self.gran.arrays()

    def forward(self, idx, mask):
        g = self.gran
        X = self.emb.W[idx]
        hs, lstm_cache = lstm_forward_batch(g.lstm, X)
        S = expit(X @ g.W_x + hs @ g.W_h + g.b)
        lengths = mask.sum(axis=1, keepdims=True)
        E = np.einsum("nt,ntd->nd", mask, X * S) / lengths
        return E, (idx, mask, lengths, X, hs, S, lstm_cache)

    def backward(self, dE, cache):
        g = self.gran
        idx, mask, lengths, X, hs, S, lstm_cache = cache
        d = X.shape[2]
        dA = (dE / lengths)[:, None, :] * mask[:, :, None]
        dX = dA * S
        dZ = dA * X * S * (1.0 - S)
        flat = dZ.reshape(-1, d)
        grads = {
            "gate.W_x": X.reshape(-1, d).T @ flat,
            "gate.W_h": hs.reshape(-1, hs.shape[2]).T @ flat,
            "gate.b": flat.sum(axis=0),
        }
        dX += dZ @ g.W_x.T
        dX_lstm, lstm_grads = lstm_backward_batch(g.lstm, dZ @ g.W_h.T, lstm_cache)
        dX += dX_lstm
        grads.update({"lstm." + k: v for k, v in lstm_grads.items()})
        grads["W_w"] = _scatter_rows(len(self.emb), idx, dX)
        return grads


class LstmEncoder:
    """Mean of LSTM hidden states (used by the reference classifier)."""

    kind = "lstm"

    def __init__(self, emb: EmbeddingMatrix, lstm: LstmParams):
        if lstm.input_size != emb.dim:
            raise ValueError("LSTM input size must equal the embedding dimension")
        self.emb = emb
        self.lstm = lstm

    @property
    def dim(self) -> int:
        return self.lstm.hidden_size

    def params(self) -> dict[str, np.ndarray]:
        out = {"W_w": self.emb.W}
        out.update(self.lstm.arrays())
        return out

    def compositional(self) -> dict[str, np.ndarray]:
        return self.lstm.arrays()

    def forward(self, idx, mask):
        hs, lstm_cache = lstm_forward_batch(self.lstm, self.emb.W[idx])
        lengths = mask.sum(axis=1, keepdims=True)
        E = np.einsum("nt,nth->nh", mask, hs) / lengths
        return E, (idx, mask, lengths, lstm_cache)

    def backward(self, dE, cache):
        idx, mask, lengths, lstm_cache = cache
        dHs = (dE / lengths)[:, None, :] * mask[:, :, None]
        dX, lstm_grads = lstm_backward_batch(self.lstm, dHs, lstm_cache)
        grads = {"lstm." + k: v for k, v in lstm_grads.items()}
        grads["W_w"] = _scatter_rows(len(self.emb), idx, dX)
        return grads


def encode(encoder, sentences: Sequence[Sequence[str]], batch_size: int = 512) -> np.ndarray:
    """Embed token sequences with any encoder; returns (n, dim)."""
    vocab = encoder.emb.vocab
    seqs = [vocab.encode(s) for s in sentences]
    out = np.empty((len(seqs), encoder.dim))
    for start in range(0, len(seqs), batch_size):
        idx, mask = pad_batch(seqs[start:start + batch_size])
        out[start:start + batch_size] = encoder.forward(idx, mask)[0]
    return out


def embed_avg(emb: EmbeddingMatrix, tokens: Sequence[str]) -> np.ndarray:
    if len(tokens) == 0:
        raise ValueError("cannot embed an empty sentence")
    return emb.W[emb.encode(tokens)].mean(axis=0)


def embed_gran(p: GranParams, emb: EmbeddingMatrix, tokens: Sequence[str]) -> np.ndarray:
    if len(tokens) == 0:
        raise ValueError("cannot embed an empty sentence")
    idx, mask = pad_batch([emb.encode(tokens)])
    return GranEncoder(emb, p).forward(idx, mask)[0][0]


# -- cosine --------------------------------------------------------------------

def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < NORM_EPS or nv < NORM_EPS:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def rowwise_cosine(U: np.ndarray, V: np.ndarray):
    """Cosine of matching rows plus the pieces needed for its gradient."""
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    ok = (nu >= NORM_EPS) & (nv >= NORM_EPS)
    su = np.where(ok, nu, 1.0)
    sv = np.where(ok, nv, 1.0)
    cos = np.where(ok, np.einsum("nd,nd->n", U, V) / (su * sv), 0.0)
    return cos, (U, V, su, sv, ok, cos)


def rowwise_cosine_grad(dcos: np.ndarray, cache):
    U, V, su, sv, ok, cos = cache
    w = np.where(ok, dcos, 0.0)[:, None]
    dU = w * (V / (su * sv)[:, None] - cos[:, None] * U / (su * su)[:, None])
    dV = w * (U / (su * sv)[:, None] - cos[:, None] * V / (sv * sv)[:, None])
    return dU, dV


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    An = A / np.where(na < NORM_EPS, 1.0, na)[:, None]
    Bn = B / np.where(nb < NORM_EPS, 1.0, nb)[:, None]
    C = An @ Bn.T
    C[na < NORM_EPS, :] = 0.0
    C[:, nb < NORM_EPS] = 0.0
    return C
