"""Instance-level image and caption encoders.

Everything here is batched: region features arrive as (B, M, F) arrays and
captions as padded (B, T) index arrays with a boolean mask marking real
tokens.  The gated recurrent cell follows

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    c = tanh(x Wh + (r * h) Uh + bh)
    h' = (1 - z) * h + z * c

with the three gate blocks stored side by side in ``W`` (in x 3d),
``U`` (d x 3d) and ``b`` (3d,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import numeric as nm
from .errors import DegenerateInputError, ShapeError

UNK = "<unk>"


@dataclass
class WordIndex:
    """Token -> row of the word-embedding table.  Row 0 is the UNK row."""

    tokens: list[str]

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNK:
            self.tokens = [UNK] + [t for t in self.tokens if t != UNK]
        self._ids = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, 0) for t in tokens]

    def encode_batch(self, token_lists: Sequence[Sequence[str]]) -> tuple[np.ndarray, np.ndarray]:
        """Right-padded id matrix and boolean mask.  Empty captions are rejected."""
        if any(len(t) == 0 for t in token_lists):
            raise DegenerateInputError("cannot encode an empty caption")
        T = max(len(t) for t in token_lists)
        ids = np.zeros((len(token_lists), T), dtype=np.int64)
        mask = np.zeros((len(token_lists), T), dtype=bool)
        for i, toks in enumerate(token_lists):
            ids[i, :len(toks)] = self.ids(toks)
            mask[i, :len(toks)] = True
        return ids, mask


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_encoder_params(rng: np.random.Generator, feature_dim: int, d: int,
                        embedding: np.ndarray) -> dict[str, np.ndarray]:
    """Fresh encoder parameters; ``embedding`` seeds the word table (copied)."""
    word_dim = embedding.shape[1]
    p = {"img.fc.W": _glorot(rng, feature_dim, d), "img.fc.b": np.zeros(d)}
    for branch in ("img", "txt"):
        for k in ("Wq", "Wk", "Wv"):
            p[f"{branch}.attn.{k}"] = _glorot(rng, d, d)
    p["txt.embed"] = np.array(embedding, dtype=float)
    for direction in ("gru_f", "gru_b"):
        p[f"txt.{direction}.W"] = _glorot(rng, word_dim, 3 * d)
        p[f"txt.{direction}.U"] = np.concatenate([_glorot(rng, d, d) for _ in range(3)], axis=1)
        p[f"txt.{direction}.b"] = np.zeros(3 * d)
    return p


def project_regions(O, W, b):
    """Row-wise affine map of (B, M, F) region features to (B, M, d)."""
    if nm.value(O).shape[-1] != nm.value(W).shape[0]:
        raise ShapeError(f"region features {nm.value(O).shape} do not match projection {nm.value(W).shape}")
    return nm.matmul(O, W) + b


def gru_pass(x, mask, W, U, b, reverse: bool = False):
    """Run one direction of the recurrence over (B, T, in) inputs.

    Padded steps leave the state untouched and emit zeros.  Returns the
    per-step hidden states stacked to (B, T, d).
    """
    B, T = mask.shape
    d = nm.value(U).shape[0]
    xw = nm.matmul(x, W) + b
    m = mask.astype(nm.value(xw).dtype)[:, :, None]
    h = np.zeros((B, d), dtype=nm.value(xw).dtype)
    U_zr, U_h = U[:, :2 * d], U[:, 2 * d:]
    outs = [None] * T
    for t in (range(T - 1, -1, -1) if reverse else range(T)):
        xt = xw[:, t]
        zr = nm.sigmoid(xt[:, :2 * d] + nm.matmul(h, U_zr))
        z, r = zr[:, :d], zr[:, d:]
        cand = nm.tanh(xt[:, 2 * d:] + nm.matmul(r * h, U_h))
        h_new = h + z * (cand - h)
        mt = m[:, t]
        h = h + mt * (h_new - h)
        outs[t] = h * mt
    return nm.stack(outs, axis=1)


def encode_words(ids, mask, params, prefix: str = "txt"):
    """Word-level features: mean of forward and backward hidden states per step."""
    if mask.shape[1] == 0 or not mask.any(axis=1).all():
        raise DegenerateInputError("cannot encode an empty caption")
    x = nm.getitem(params[f"{prefix}.embed"], ids)
    fwd = gru_pass(x, mask, *(params[f"{prefix}.gru_f.{k}"] for k in "WUb"))
    bwd = gru_pass(x, mask, *(params[f"{prefix}.gru_b.{k}"] for k in "WUb"), reverse=True)
    return (fwd + bwd) * 0.5


def attention_pool(fragments, Wq, Wk, Wv, mask=None, return_weights: bool = False):
    """Single-head scaled dot-product attention with the fragment mean as query.

    ``fragments`` is (B, K, d); ``mask`` (B, K) marks valid fragments.
    Returns (B, d), plus the (B, K) attention weights when requested.
    """
    fv = nm.value(fragments)
    if fv.ndim != 3 or fv.shape[1] == 0:
        raise DegenerateInputError(f"attention pooling needs >= 1 fragment, got shape {fv.shape}")
    d_k = nm.value(Wk).shape[1]
    if mask is None:
        query = fragments.mean(axis=1)
    else:
        m = mask.astype(fv.dtype)
        query = (fragments * m[:, :, None]).sum(axis=1) / m.sum(axis=1, keepdims=True)
    q = nm.matmul(query, Wq)
    k = nm.matmul(fragments, Wk)
    v = nm.matmul(fragments, Wv)
    scores = nm.matmul(k, q[:, :, None])[:, :, 0] * (1.0 / math.sqrt(d_k))
    weights = nm.softmax(scores, axis=-1, mask=mask)
    pooled = (weights[:, :, None] * v).sum(axis=1)
    return (pooled, weights) if return_weights else pooled


Dropout = Callable[[object], object]


def _identity(x):
    return x


def encode_image_instance(O, params, dropout: Dropout = _identity):
    """(B, M, F) region features -> (B, d) unit-norm instance embeddings."""
    regions = dropout(project_regions(O, params["img.fc.W"], params["img.fc.b"]))
    pooled = attention_pool(regions, params["img.attn.Wq"], params["img.attn.Wk"],
                            params["img.attn.Wv"])
    return nm.l2_normalize(pooled)


def encode_text_instance(ids, mask, params, dropout: Dropout = _identity):
    """Padded captions -> (B, d) unit-norm instance embeddings."""
    words = dropout(encode_words(ids, mask, params))
    pooled = attention_pool(words, params["txt.attn.Wq"], params["txt.attn.Wk"],
                            params["txt.attn.Wv"], mask=mask)
    return nm.l2_normalize(pooled)
