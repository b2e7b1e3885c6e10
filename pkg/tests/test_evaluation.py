import numpy as np
import pytest

from cvse.errors import DegenerateInputError, ParameterError, ShapeError
from cvse.evaluation import (ConceptGallery, build_gallery, embed_texts, knn_concept_union,
                             mean_recall, predict_concepts, recall_at_k, recall_report, retrieve)
from builders import tiny_batch, tiny_model
from oracles import knn_union_loop, recall_loop


def test_recall_diagonal_and_anti_diagonal():
    S = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert recall_at_k(S, 1, "text") == 1.0 and recall_at_k(S, 1, "image") == 1.0
    A = np.array([[0.1, 0.9], [0.8, 0.2]])
    for direction in ("text", "image"):
        assert recall_at_k(A, 1, direction) == 0.0
        assert recall_at_k(A, 2, direction) == 1.0


def test_recall_matches_sort_oracle_with_permutation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        S = rng.normal(size=(10, 10)).round(1)      # rounding forces ties
        perm = rng.permutation(10)
        for k in (1, 3, 5, 10):
            for direction in ("text", "image"):
                assert recall_at_k(S, k, direction, perm) == recall_loop(S, k, direction, perm)


def test_recall_multiple_captions_per_image():
    rng = np.random.default_rng(1)
    S = rng.normal(size=(4, 12))
    t2i = np.repeat(np.arange(4), 3)
    for k in (1, 2, 4):
        assert recall_at_k(S, k, "i2t", t2i) == recall_loop(S, k, "text", t2i)
        assert recall_at_k(S, k, "t2i", t2i) == recall_loop(S, k, "image", t2i)


def test_ties_go_to_lower_index():
    S = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert recall_at_k(S, 1, "text") == 0.5
    assert recall_at_k(S, 1, "image") == 0.5


def test_recall_monotone_in_k():
    S = np.random.default_rng(2).normal(size=(15, 15))
    for direction in ("text", "image"):
        vals = [recall_at_k(S, k, direction) for k in range(1, 16)]
        assert vals == sorted(vals) and vals[-1] == 1.0


def test_recall_errors():
    with pytest.raises(ParameterError):
        recall_at_k(np.eye(3), 0, "text")
    with pytest.raises(ParameterError):
        recall_at_k(np.eye(3), 4, "text")
    with pytest.raises(ParameterError):
        recall_at_k(np.eye(3), 1, "sideways")
    with pytest.raises(ShapeError):
        recall_at_k(np.eye(3), 1, "text", [0, 1])


def test_mean_recall():
    assert mean_recall([1.0] * 6) == 1.0
    assert abs(mean_recall([74.8, 95.1, 98.3, 59.9, 89.4, 95.2]) - 85.45) < 0.05
    vals = list(np.random.default_rng(3).random(6))
    assert mean_recall(vals) == pytest.approx(sum(vals) / 6, abs=1e-15)
    with pytest.raises(ParameterError):
        mean_recall([1.0] * 5)


def test_recall_report_keys():
    r = recall_report(np.eye(12))
    assert set(r) == {"r1_t", "r5_t", "r10_t", "r1_i", "r5_i", "r10_i", "mr"} and r["mr"] == 1.0


# ------------------------------------------------------- concept prediction

def _unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


HAND_TEXT = _unit(np.array([[1, 0, 0], [0.9, 0.1, 0], [0, 1, 0], [0, 0.8, 0.6], [0, 0, 1]], float))
HAND_LABELS = np.array([[1, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 1, 1], [0, 0, 0, 1]], float)
HAND_IMAGES = _unit(np.array([[1, 0.05, 0], [0, 1, 0.1], [0, 0.1, 1]], float))


def test_singleton_gallery_forces_its_label():
    g = ConceptGallery(HAND_TEXT[:1], np.array([[1.0, 0.0, 1.0]]), HAND_IMAGES[:1])
    for q in _unit(np.random.default_rng(4).normal(size=(5, 3))):
        assert knn_concept_union(q, g, 3).tolist() == [1.0, 0.0, 1.0]


def test_hand_gallery_matches_oracle():
    g = ConceptGallery(HAND_TEXT, HAND_LABELS, HAND_IMAGES)
    # query near sentence 2 (0, 1, 0): text top-1 = 2; best image = 1, whose top-1 caption is 2
    assert knn_concept_union(_unit(np.array([0.0, 1.0, 0.05])), g, 1).tolist() == [0, 0, 1, 0]
    for q in _unit(np.random.default_rng(5).normal(size=(40, 3))):
        for k in (1, 2, 3, 7):
            ref = knn_union_loop(q, HAND_TEXT, HAND_LABELS.tolist(), HAND_IMAGES, min(k, 5))
            got = knn_concept_union(q, g, k)
            assert got.tolist() == ref
            assert set(np.flatnonzero(got)) <= set(np.flatnonzero(HAND_LABELS.max(axis=0)))


def test_knn_errors():
    g = ConceptGallery(np.zeros((0, 3)), np.zeros((0, 4)), HAND_IMAGES)
    with pytest.raises(DegenerateInputError):
        knn_concept_union(HAND_TEXT[0], g, 3)
    with pytest.raises(ParameterError):
        knn_concept_union(HAND_TEXT[0], ConceptGallery(HAND_TEXT, HAND_LABELS, HAND_IMAGES), 0)


def test_predict_concepts_uses_label_free_first_pass():
    model = tiny_model()
    images, tokens, labels = tiny_batch(model, batch=5)
    gallery = build_gallery(model, images, tokens, labels)
    first = embed_texts(model, tokens, np.zeros_like(labels), alpha=0.0).fused
    pred = predict_concepts(model, tokens, gallery, k=3)
    for i in range(5):
        ref = knn_union_loop(first[i], gallery.text_embeddings, labels.tolist(),
                             gallery.image_embeddings, 3)
        assert pred[i].tolist() == ref


def test_retrieve_shapes_and_cosine_oracle():
    model = tiny_model()
    images, tokens, labels = tiny_batch(model, batch=4)
    gallery = build_gallery(model, images, tokens, labels)
    res = retrieve(model, images, tokens, gallery, 3)
    v = model.embed_images(images).fused
    t = embed_texts(model, tokens, res.predicted_labels).fused
    ref = np.array([[np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)) for b in t] for a in v])
    assert np.allclose(res.similarity, ref, atol=1e-12)
    one = retrieve(model, images[:1], tokens[:1], gallery, 3)
    assert one.text_ranking.shape == (1, 1) and one.image_ranking.shape == (1, 1)
