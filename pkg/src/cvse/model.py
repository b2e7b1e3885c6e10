"""The full embedding model: parameters, constants and the batched forward pass."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import numeric as nm
from .consensus import fuse, textual_consensus, visual_consensus
from .encoders import (WordIndex, encode_image_instance, encode_text_instance,
                       init_encoder_params)
from .graph import gcn_forward, init_gcn_params


@dataclass
class ModelConfig:
    d: int = 1024
    gcn_hidden: int = 512
    lam: float = 10.0
    alpha: float = 0.35
    beta: float = 0.75
    dropout: float = 0.4
    gcn_final_relu: bool = True
    label_support_only: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass
class ForwardOutput:
    v_inst: object
    t_inst: object
    v_cons: object
    t_cons: object
    v_fused: object
    t_fused: object
    a_v: object
    a_t: object
    Z: object = None


@dataclass
class EmbeddingSet:
    """Untracked fused/instance/consensus embeddings plus concept scores."""

    fused: np.ndarray
    inst: np.ndarray
    cons: np.ndarray
    scores: np.ndarray


@dataclass
class CVSEModel:
    """Learnable parameters plus the fixed concept inputs they act on.

    ``concept_vectors`` (q x word_dim) and ``adjacency`` (q x q) are
    constants built from the caption corpus; ``params`` maps parameter
    names to arrays that the optimiser updates in place.
    """

    config: ModelConfig
    concept_tokens: list[str]
    concept_vectors: np.ndarray
    adjacency: np.ndarray
    words: WordIndex
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: ModelConfig, concept_tokens, concept_vectors, adjacency,
                   words: WordIndex, word_embedding: np.ndarray, feature_dim: int,
                   rng: np.random.Generator, dtype=np.float64) -> "CVSEModel":
        d = config.d
        params = init_encoder_params(rng, feature_dim, d, word_embedding)
        params.update(init_gcn_params([concept_vectors.shape[1], config.gcn_hidden, d], rng))
        limit = np.sqrt(3.0 / d)
        params["cons.Wv"] = rng.uniform(-limit, limit, (d, d))
        params["cons.Wt"] = rng.uniform(-limit, limit, (d, d))
        params = {k: np.ascontiguousarray(v, dtype=dtype) for k, v in params.items()}
        return cls(config, list(concept_tokens), np.asarray(concept_vectors, dtype=dtype),
                   np.asarray(adjacency, dtype=dtype), words, params)

    @property
    def q(self) -> int:
        return len(self.concept_tokens)

    def concepts(self, params=None):
        """Graph-encoded concept matrix Z (q x d)."""
        params = self.params if params is None else params
        weights = [params[f"gcn.W{i}"] for i in range(2)]
        return gcn_forward(self.concept_vectors, self.adjacency, weights,
                           self.config.gcn_final_relu)

    def forward(self, images, ids, mask, labels, params=None, rng=None, Z=None,
                alpha: float | None = None) -> ForwardOutput:
        """Embed a batch of aligned (image, caption) pairs.

        ``rng`` switches dropout on.  ``params`` may hold tracked Vars.
        """
        cfg = self.config
        params = self.params if params is None else params
        dropout = _make_dropout(rng, cfg.dropout)
        Z = self.concepts(params) if Z is None else Z
        v_inst = encode_image_instance(images, params, dropout)
        t_inst = encode_text_instance(ids, mask, params, dropout)
        vis = visual_consensus(v_inst, Z, params["cons.Wv"], cfg.lam)
        txt = textual_consensus(t_inst, labels, Z, params["cons.Wt"], cfg.lam,
                                cfg.alpha if alpha is None else alpha, cfg.label_support_only)
        return ForwardOutput(
            v_inst, t_inst, vis.embedding, txt.embedding,
            fuse(v_inst, vis.embedding, cfg.beta), fuse(t_inst, txt.embedding, cfg.beta),
            vis.scores, txt.scores, Z)

    # inference helpers: untracked, dropout off

    def embed_images(self, images, Z=None) -> EmbeddingSet:
        Z = self.concepts() if Z is None else Z
        v = encode_image_instance(images, self.params)
        vis = visual_consensus(v, Z, self.params["cons.Wv"], self.config.lam)
        return EmbeddingSet(fuse(v, vis.embedding, self.config.beta), v, vis.embedding, vis.scores)

    def embed_texts(self, ids, mask, labels, Z=None, alpha: float | None = None) -> EmbeddingSet:
        Z = self.concepts() if Z is None else Z
        cfg = self.config
        t = encode_text_instance(ids, mask, self.params)
        txt = textual_consensus(t, labels, Z, self.params["cons.Wt"], cfg.lam,
                                cfg.alpha if alpha is None else alpha, cfg.label_support_only)
        return EmbeddingSet(fuse(t, txt.embedding, cfg.beta), t, txt.embedding, txt.scores)


def _make_dropout(rng, rate):
    if rng is None or rate <= 0:
        return lambda x: x

    def dropout(x):
        keep = rng.random(nm.value(x).shape) >= rate
        return x * (keep / (1.0 - rate)).astype(nm.value(x).dtype)

    return dropout
