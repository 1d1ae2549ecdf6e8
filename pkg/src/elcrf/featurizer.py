"""Window-embedding featurizer producing the local latent-state scores.

Each token is represented by the concatenation of the embeddings in a
``2w+1`` window around it; an affine map turns that into one score per
latent state. Positions outside the sequence use a padding row.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1

_DIGIT = re.compile(r"\d")


class EmbeddingFormatError(ValueError):
    pass


def normalize_digits(token: str) -> str:
    """Replace every decimal digit with ``0``."""
    return _DIGIT.sub("0", token)


def build_vocab(token_seqs: Iterable[Sequence[str]], min_count: int = 1) -> tuple[dict[str, int], Counter]:
    counts = Counter(tok for seq in token_seqs for tok in seq)
    vocab = {PAD: PAD_ID, UNK: UNK_ID}
    # sorted so the index assignment does not depend on corpus order
    for tok in sorted(counts):
        if counts[tok] >= min_count and tok not in vocab:
            vocab[tok] = len(vocab)
    return vocab, counts


@dataclass
class FeaturizerParams:
    vocab: dict[str, int]
    E: np.ndarray
    W: np.ndarray
    b: np.ndarray
    window: int = 2
    dropout_p: float = 0.5
    singletons: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.window < 0:
            raise ValueError("window half-width must be >= 0")
        if self.E.shape[0] != len(self.vocab):
            raise ValueError("embedding rows must match vocabulary size")
        if self.W.shape != (self.b.shape[0], self.feature_dim):
            raise ValueError(f"W must be M x {self.feature_dim}, got {self.W.shape}")

    @property
    def d_emb(self) -> int:
        return self.E.shape[1]

    @property
    def feature_dim(self) -> int:
        return (2 * self.window + 1) * self.E.shape[1]

    @property
    def M(self) -> int:
        return self.b.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"E": self.E, "W": self.W, "b": self.b}

    def copy(self) -> "FeaturizerParams":
        return FeaturizerParams(dict(self.vocab), self.E.copy(), self.W.copy(), self.b.copy(),
                                self.window, self.dropout_p, self.singletons)

    def token_ids(self, tokens: Sequence[str]) -> np.ndarray:
        get = self.vocab.get
        return np.fromiter((get(t, UNK_ID) for t in tokens), dtype=np.intp, count=len(tokens))

    @classmethod
    def init_random(cls, vocab: dict[str, int], M: int, d_emb: int = 100, window: int = 2,
                    dropout_p: float = 0.5, rng: Optional[np.random.Generator] = None,
                    singletons: Iterable[str] = ()) -> "FeaturizerParams":
        rng = np.random.default_rng() if rng is None else rng
        E = rng.uniform(-0.5 / d_emb, 0.5 / d_emb, size=(len(vocab), d_emb))
        D = (2 * window + 1) * d_emb
        bound = np.sqrt(6.0 / (D + M))
        W = rng.uniform(-bound, bound, size=(M, D))
        return cls(vocab, E, W, np.zeros(M), window, dropout_p,
                   frozenset(vocab[t] for t in singletons if t in vocab))


@dataclass
class FeatureCache:
    """What the backward pass needs from a forward featurization."""

    padded_ids: np.ndarray
    features: np.ndarray
    dropout_scale: Optional[np.ndarray]


def featurize_ids(ids: np.ndarray, params: FeaturizerParams,
                  dropout_rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, FeatureCache]:
    """Scores for already-indexed tokens. Dropout is applied iff
    ``dropout_rng`` is given and ``params.dropout_p > 0``."""
    w = params.window
    T = len(ids)
    if T == 0:
        raise ValueError("cannot featurize an empty sequence")
    padded = np.concatenate([np.full(w, PAD_ID, dtype=np.intp), ids, np.full(w, PAD_ID, dtype=np.intp)])
    emb = params.E[padded]
    scale = None
    if dropout_rng is not None and params.dropout_p > 0:
        keep = dropout_rng.random(emb.shape) >= params.dropout_p
        scale = keep / (1.0 - params.dropout_p)
        emb = emb * scale
    feats = sliding_window_view(emb, (2 * w + 1, params.d_emb))[:, 0].reshape(T, -1)
    psi = feats @ params.W.T + params.b
    return psi, FeatureCache(padded, feats, scale)


def featurize(tokens: Sequence[str], params: FeaturizerParams, training_mode: bool = False,
              rng_seed: Optional[int] = None) -> np.ndarray:
    """``T x M`` local log-potentials for a token sequence.

    In training mode, inverted dropout is applied to the embedding components
    with a generator seeded by ``rng_seed``; evaluation mode is deterministic.
    """
    rng = np.random.default_rng(rng_seed) if training_mode else None
    psi, _ = featurize_ids(params.token_ids(tokens), params, rng)
    return psi


def featurizer_backward(grad_psi: np.ndarray, cache: FeatureCache,
                        params: FeaturizerParams) -> dict[str, np.ndarray]:
    """Push ``dL/dpsi`` back to ``E``, ``W`` and ``b``."""
    w = params.window
    T = grad_psi.shape[0]
    gW = grad_psi.T @ cache.features
    gb = grad_psi.sum(axis=0)
    gf = (grad_psi @ params.W).reshape(T, 2 * w + 1, params.d_emb)
    g_emb = np.zeros((T + 2 * w, params.d_emb))
    for o in range(2 * w + 1):
        g_emb[o:o + T] += gf[:, o]
    if cache.dropout_scale is not None:
        g_emb *= cache.dropout_scale
    gE = np.zeros_like(params.E)
    np.add.at(gE, cache.padded_ids, g_emb)
    return {"E": gE, "W": gW, "b": gb}


def load_pretrained_embeddings(source: TextIO, params: FeaturizerParams) -> tuple[FeaturizerParams, int]:
    """Overwrite embedding rows for vocabulary tokens found in a
    whitespace-separated ``token v1 ... vd`` text stream.

    Returns a new parameter set and the number of vocabulary rows replaced.
    """
    out = params.copy()
    d = params.d_emb
    matched = set()
    for lineno, line in enumerate(source, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != d + 1:
            raise EmbeddingFormatError(
                f"line {lineno}: expected token and {d} values, got {len(parts) - 1} values")
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError as exc:
            raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
        idx = out.vocab.get(parts[0])
        if idx is not None and idx not in (PAD_ID, UNK_ID):
            out.E[idx] = vec
            matched.add(idx)
    return out, len(matched)
