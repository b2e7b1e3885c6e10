"""Small hand-sized models shared by several test modules."""

import numpy as np

from cvse.encoders import WordIndex
from cvse.graph import normalize_adjacency
from cvse.model import CVSEModel, ModelConfig

WORDS = ["<unk>", "dog", "cat", "runs", "sits", "on", "grass", "mat", "red", "big"]


def tiny_model(q=8, d=8, feature_dim=5, word_dim=6, hidden=7, seed=0, **config):
    rng = np.random.default_rng(seed)
    G = rng.integers(0, 2, (q, q))
    cfg = ModelConfig(d=d, gcn_hidden=hidden, **config)
    Y = rng.normal(size=(q, word_dim))
    emb = rng.normal(0, 0.5, (len(WORDS), word_dim))
    tokens = [f"c{i}" for i in range(q)]
    return CVSEModel.initialize(cfg, tokens, Y, normalize_adjacency(G), WordIndex(list(WORDS)),
                                emb, feature_dim, rng)


def tiny_batch(model, batch=4, regions=2, length=3, seed=1):
    rng = np.random.default_rng(seed)
    feat = model.params["img.fc.W"].shape[0]
    images = rng.normal(size=(batch, regions, feat))
    tokens = [[WORDS[i] for i in rng.integers(1, len(WORDS), length)] for _ in range(batch)]
    labels = rng.integers(0, 2, (batch, model.q)).astype(float)
    return images, tokens, labels
