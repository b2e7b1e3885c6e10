"""Consensus-level embeddings: concept-score mixtures of the graph-encoded
concept vectors, and their fusion with instance-level embeddings."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numeric as nm
from .errors import ParameterError, ShapeError


@dataclass
class ConsensusOutput:
    scores: object       # (B, q) concept distribution
    mixture: object      # (B, d) scores @ Z, before normalisation
    embedding: object    # (B, d) unit-norm mixture


def _check(query, Z, W):
    qv, zv, wv = nm.value(query), nm.value(Z), nm.value(W)
    if qv.shape[-1] != wv.shape[0] or wv.shape[1] != zv.shape[-1]:
        raise ShapeError(f"query {qv.shape}, map {wv.shape} and concepts {zv.shape} do not chain")


def concept_logits(query, Z, W):
    """Bilinear relevance of every concept row of Z to each query: (query W) Z^T."""
    _check(query, Z, W)
    return nm.matmul(nm.matmul(query, W), nm.transpose(Z))


def visual_consensus(v_inst, Z, Wv, lam: float = 10.0) -> ConsensusOutput:
    scores = nm.softmax(concept_logits(v_inst, Z, Wv), axis=-1, temperature=lam)
    mixture = nm.matmul(scores, Z)
    return ConsensusOutput(scores, mixture, nm.l2_normalize(mixture))


def label_distribution(labels, lam: float = 10.0, support_only: bool = False) -> np.ndarray:
    """softmax(lam * L) per row.  ``support_only`` renormalises over L's support;
    all-zero rows stay uniform either way."""
    labels = np.asarray(labels, dtype=float)
    if not support_only:
        return nm.softmax(labels, axis=-1, temperature=lam)
    mask = labels > 0
    mask = np.where(mask.any(axis=-1, keepdims=True), mask, True)
    return nm.softmax(labels, axis=-1, temperature=lam, mask=mask)


def textual_consensus(t_inst, labels, Z, Wt, lam: float = 10.0, alpha: float = 0.35,
                      support_only: bool = False) -> ConsensusOutput:
    """Scores mix the label prior (weight alpha) with the query softmax."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    labels = np.asarray(labels, dtype=float)
    if labels.shape[-1] != nm.value(Z).shape[0]:
        raise ShapeError(f"label width {labels.shape[-1]} != concept count {nm.value(Z).shape[0]}")
    from_query = nm.softmax(concept_logits(t_inst, Z, Wt), axis=-1, temperature=lam)
    scores = alpha * label_distribution(labels, lam, support_only) + (1.0 - alpha) * from_query
    mixture = nm.matmul(scores, Z)
    return ConsensusOutput(scores, mixture, nm.l2_normalize(mixture))


def fuse(instance, consensus, beta: float = 0.75):
    """Unit-norm weighted sum beta * instance + (1 - beta) * consensus."""
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    if beta == 1.0:
        return nm.l2_normalize(instance)
    if beta == 0.0:
        return nm.l2_normalize(consensus)
    return nm.l2_normalize(beta * instance + (1.0 - beta) * consensus)


def write_concept_scores(path, item_ids: Sequence[str], scores, tokens: Sequence[str],
                         top: int = 10) -> None:
    """CSV of ``item_id, concept_token, score`` for each item's top-scoring concepts."""
    scores = np.asarray(nm.value(scores))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "concept_token", "score"])
        for item, row in zip(item_ids, scores):
            for j in np.argsort(-row, kind="stable")[:top]:
                w.writerow([item, tokens[j], f"{row[j]:.6g}"])
