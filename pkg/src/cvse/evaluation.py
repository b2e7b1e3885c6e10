"""Retrieval metrics, two-view concept prediction and gallery search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError

TEXT_RETRIEVAL = "text"    # image queries rank captions
IMAGE_RETRIEVAL = "image"  # caption queries rank images
_DIRECTIONS = {"text": TEXT_RETRIEVAL, "i2t": TEXT_RETRIEVAL,
               "image": IMAGE_RETRIEVAL, "t2i": IMAGE_RETRIEVAL}


def _ranking(scores: np.ndarray) -> np.ndarray:
    # stable sort of negated scores: equal scores keep lower index first
    return np.argsort(-scores, axis=-1, kind="stable")


def recall_at_k(S, k: int, direction: str, text_to_image=None) -> float:
    """Fraction of queries whose ground-truth match ranks in the top ``k``.

    ``S`` is (n_images, n_texts).  ``text_to_image[j]`` names the image of
    caption j (identity when omitted).  With ``direction="text"`` each image
    queries the captions and any of its own captions counts as a hit;
    ``direction="image"`` has each caption query the images.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2:
        raise ShapeError(f"similarity matrix must be 2-D, got {S.shape}")
    n_img, n_txt = S.shape
    gt = np.arange(n_txt) if text_to_image is None else np.asarray(text_to_image)
    if gt.shape != (n_txt,):
        raise ShapeError(f"need one ground-truth image per caption ({n_txt}), got {gt.shape}")
    try:
        direction = _DIRECTIONS[direction]
    except KeyError:
        raise ParameterError(f"unknown retrieval direction {direction!r}") from None
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")

    if direction == TEXT_RETRIEVAL:
        if k > n_txt:
            raise ParameterError(f"k={k} exceeds gallery of {n_txt} captions")
        top = _ranking(S)[:, :k]
        hits = [np.any(gt[top[i]] == i) for i in range(n_img)]
    else:
        if k > n_img:
            raise ParameterError(f"k={k} exceeds gallery of {n_img} images")
        top = _ranking(S.T)[:, :k]
        hits = [gt[j] in top[j] for j in range(n_txt)]
    return float(np.mean(hits))


def mean_recall(values: Sequence[float]) -> float:
    """Arithmetic mean of R@{1,5,10} in both directions (six numbers)."""
    values = list(values)
    if len(values) != 6:
        raise ParameterError(f"mean recall needs exactly six values, got {len(values)}")
    return float(sum(values) / 6.0)


def recall_report(S, text_to_image=None) -> dict[str, float]:
    """The metrics JSON: r1_t, r5_t, r10_t, r1_i, r5_i, r10_i and mr."""
    report = {}
    for tag, direction in (("t", TEXT_RETRIEVAL), ("i", IMAGE_RETRIEVAL)):
        for k in (1, 5, 10):
            report[f"r{k}_{tag}"] = recall_at_k(S, k, direction, text_to_image)
    report["mr"] = mean_recall([report[key] for key in
                                ("r1_t", "r5_t", "r10_t", "r1_i", "r5_i", "r10_i")])
    return report


# ------------------------------------------------------- concept prediction


@dataclass
class ConceptGallery:
    """Embedded reference captions (with their labels) and images."""

    text_embeddings: np.ndarray   # (G, d) fused, unit norm
    labels: np.ndarray            # (G, q) binary
    image_embeddings: np.ndarray  # (I, d) fused, unit norm


def _top_k(scores, k):
    return _ranking(scores)[:min(k, len(scores))]


def knn_concept_union(query, gallery: ConceptGallery, k: int = 3) -> np.ndarray:
    """Union of labels over the two neighbour sets of one query embedding.

    One set holds the k captions most similar to the query.  The other
    holds the k captions most similar to the image the query ranks first.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(gallery.text_embeddings) == 0 or len(gallery.image_embeddings) == 0:
        raise DegenerateInputError("concept prediction needs a non-empty gallery")
    query = np.asarray(query)
    text_nn = _top_k(gallery.text_embeddings @ query, k)
    best_image = int(_ranking(gallery.image_embeddings @ query)[0])
    image_nn = _top_k(gallery.text_embeddings @ gallery.image_embeddings[best_image], k)
    chosen = np.union1d(text_nn, image_nn)
    return gallery.labels[chosen].max(axis=0)


def build_gallery(model, images, token_lists, labels, batch_size: int = 256) -> ConceptGallery:
    Z = model.concepts()
    v = embed_images(model, images, Z, batch_size).fused
    t = embed_texts(model, token_lists, labels, Z, batch_size).fused
    return ConceptGallery(t, np.asarray(labels, dtype=float), v)


def predict_concepts(model, token_lists, gallery: ConceptGallery, k: int = 3,
                     Z=None, batch_size: int = 256) -> np.ndarray:
    """Predicted (n, q) labels for unlabelled captions.

    The first embedding pass drops the label branch (alpha = 0); neighbours
    are then searched with that embedding.
    """
    Z = model.concepts() if Z is None else Z
    blank = np.zeros((len(token_lists), model.q))
    first = embed_texts(model, token_lists, blank, Z, batch_size, alpha=0.0).fused
    return np.stack([knn_concept_union(t, gallery, k) for t in first]).reshape(len(first), model.q)


# --------------------------------------------------------------- embedding


class _Chunks:
    def __init__(self, parts):
        self.fused = np.concatenate([p.fused for p in parts])
        self.inst = np.concatenate([p.inst for p in parts])
        self.cons = np.concatenate([p.cons for p in parts])
        self.scores = np.concatenate([p.scores for p in parts])


def embed_images(model, images, Z=None, batch_size: int = 256):
    Z = model.concepts() if Z is None else Z
    images = np.asarray(images)
    return _Chunks([model.embed_images(images[i:i + batch_size], Z)
                    for i in range(0, len(images), batch_size)])


def embed_texts(model, token_lists, labels, Z=None, batch_size: int = 256, alpha=None):
    Z = model.concepts() if Z is None else Z
    labels = np.asarray(labels, dtype=float)
    parts = []
    for i in range(0, len(token_lists), batch_size):
        ids, mask = model.words.encode_batch(token_lists[i:i + batch_size])
        parts.append(model.embed_texts(ids, mask, labels[i:i + batch_size], Z, alpha=alpha))
    return _Chunks(parts)


@dataclass
class RetrievalResult:
    similarity: np.ndarray        # (n_images, n_texts)
    text_ranking: np.ndarray      # per image: caption indices, best first
    image_ranking: np.ndarray     # per caption: image indices, best first
    predicted_labels: np.ndarray  # (n_texts, q)


def retrieve(model, images, token_lists, gallery: ConceptGallery, k: int = 3,
             batch_size: int = 256) -> RetrievalResult:
    """Score every image against every caption with fused embeddings.

    Captions are embedded a second time using their predicted labels.
    """
    Z = model.concepts()
    v = embed_images(model, images, Z, batch_size).fused
    predicted = predict_concepts(model, token_lists, gallery, k, Z, batch_size)
    t = embed_texts(model, token_lists, predicted, Z, batch_size).fused
    S = v @ t.T
    return RetrievalResult(S, _ranking(S), _ranking(S.T), predicted)
