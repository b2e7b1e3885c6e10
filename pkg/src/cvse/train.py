"""End-to-end assembly and the training loop."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numeric as nm
from .config import TrainingConfig, config_from_dict
from .corpus import (CaptionRecord, Concept, ConceptVocabulary, WordVectorTable, build_vocabulary,
                     concept_label, corpus_labels)
from .encoders import UNK, WordIndex
from .errors import DataIntegrityError
from .evaluation import build_gallery, recall_at_k, retrieve
from .graph import CorrelationGraph, build_graph
from .io import config_hash, read_checkpoint, write_checkpoint
from .model import CVSEModel
from .objective import LossLog, total_loss
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class PairSet:
    """Aligned (image, caption) training pairs over a stack of region features."""

    image_ids: list[str]
    features: np.ndarray      # (n_images, M, F)
    pair_image: np.ndarray    # (n_pairs,) index into features
    tokens: list[list[str]]   # per pair
    labels: np.ndarray        # (n_pairs, q)

    def __len__(self):
        return len(self.tokens)


def align_features(records: Sequence[CaptionRecord], features: np.ndarray,
                   index: dict[str, int]) -> np.ndarray:
    """Region features reordered to follow ``records``."""
    missing = [r.image_id for r in records if r.image_id not in index]
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise DataIntegrityError(f"{len(missing)} corpus ids have no region features: {shown}")
    return features[[index[r.image_id] for r in records]]


def make_pairs(records: Sequence[CaptionRecord], features: np.ndarray, vocab: ConceptVocabulary,
               unit: str = "image") -> PairSet:
    """One pair per caption; labels follow the co-occurrence unit."""
    pair_image, tokens, labels = [], [], []
    for i, rec in enumerate(records):
        token_lists = rec.token_lists()
        image_label = concept_label(token_lists, vocab)
        for toks in token_lists:
            if not toks:
                continue
            pair_image.append(i)
            tokens.append(toks)
            labels.append(image_label if unit == "image" else concept_label([toks], vocab))
    return PairSet([r.image_id for r in records], features, np.array(pair_image),
                   tokens, np.array(labels).reshape(len(tokens), len(vocab)))


@dataclass
class Components:
    vocab: ConceptVocabulary
    graph: CorrelationGraph
    model: CVSEModel


def build_components(config: TrainingConfig, records: Sequence[CaptionRecord], feature_dim: int,
                     word_vectors: WordVectorTable | None = None,
                     lexicon: dict[str, str] | None = None) -> Components:
    """Vocabulary, correlation graph and a freshly initialised model."""
    cfg = config
    seed = cfg.train.seed
    vocab = build_vocabulary(records, lexicon, cfg.vocab.q)
    graph = build_graph(corpus_labels(records, vocab, cfg.vocab.cooccurrence_unit),
                        cfg.graph.s, cfg.graph.u, cfg.graph.epsilon, cfg.graph.denominator)
    table = word_vectors or WordVectorTable({}, cfg.vocab.word_dim, seed)
    words = WordIndex([UNK] + sorted({t for r in records for toks in r.token_lists() for t in toks}))
    unk = np.random.default_rng([seed, 2]).normal(0.0, 0.1, (1, table.dim))
    embedding = np.vstack([unk, table.matrix(words.tokens[1:])])
    model = CVSEModel.initialize(cfg.model, vocab.tokens, table.matrix(vocab.tokens),
                                 graph.A_norm, words, embedding, feature_dim,
                                 np.random.default_rng(seed), np.dtype(cfg.train.dtype))
    return Components(vocab, graph, model)


@dataclass
class TrainResult:
    model: CVSEModel
    optimizer: Adam
    vocab: ConceptVocabulary
    graph: CorrelationGraph
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, size):
        chunk = order[start:start + size]
        if len(chunk) >= 2:
            yield chunk


def train_step(model: CVSEModel, optimizer: Adam, pairs: PairSet, batch: np.ndarray,
               config: TrainingConfig, rng: np.random.Generator) -> dict:
    """One forward/backward/Adam update on the pairs indexed by ``batch``."""
    dtype = np.dtype(config.train.dtype)
    images = pairs.features[pairs.pair_image[batch]].astype(dtype)
    ids, mask = model.words.encode_batch([pairs.tokens[i] for i in batch])
    tape = nm.Tape()
    tracked = nm.watch_all(tape, model.params)
    out = model.forward(images, ids, mask, pairs.labels[batch], params=tracked, rng=rng)
    loss, breakdown = total_loss(out, config.loss.weights(), config.loss.mode)
    grads = tape.gradient(loss, tracked)
    optimizer.step(model.params, grads)
    return breakdown


def evaluate_pairs(model: CVSEModel, pairs: PairSet, gallery_pairs: PairSet | None = None,
                   k: int = 3, ks=(1,)) -> dict:
    """Recall in both directions, captions predicting labels from ``gallery_pairs``."""
    gallery_pairs = gallery_pairs or pairs
    gallery = build_gallery(model, gallery_pairs.features, gallery_pairs.tokens, gallery_pairs.labels)
    result = retrieve(model, pairs.features, pairs.tokens, gallery, k)
    report = {}
    for kk in ks:
        report[f"r{kk}_t"] = recall_at_k(result.similarity, kk, "text", pairs.pair_image)
        report[f"r{kk}_i"] = recall_at_k(result.similarity, kk, "image", pairs.pair_image)
    return report


def train(config: TrainingConfig, records: Sequence[CaptionRecord], features: np.ndarray,
          feature_index: dict[str, int], word_vectors: WordVectorTable | None = None,
          lexicon: dict[str, str] | None = None,
          val_records: Sequence[CaptionRecord] | None = None,
          val_features: tuple[np.ndarray, dict[str, int]] | None = None,
          out_dir=None) -> TrainResult:
    """Fit a model on ``records``; deterministic for a fixed ``train.seed``.

    With ``out_dir`` the checkpoint is rewritten after every epoch and the
    per-step loss breakdown is appended to ``train_log.csv``.
    """
    config.validate()
    aligned = align_features(records, features, feature_index)
    parts = build_components(config, records, aligned.shape[2], word_vectors, lexicon)
    model, vocab = parts.model, parts.vocab
    pairs = make_pairs(records, aligned, vocab, config.vocab.cooccurrence_unit)
    val_pairs = None
    if val_records is not None:
        vf, vi = val_features if val_features is not None else (features, feature_index)
        val_pairs = make_pairs(val_records, align_features(val_records, vf, vi), vocab,
                               config.vocab.cooccurrence_unit)

    opt = config.train
    optimizer = Adam(opt.lr, opt.beta1, opt.beta2, opt.eps)
    rng = np.random.default_rng([opt.seed, 1])
    result = TrainResult(model, optimizer, vocab, parts.graph)
    loss_log = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        vocab.to_tsv(os.path.join(out_dir, "vocab.tsv"))
        loss_log = LossLog(os.path.join(out_dir, "train_log.csv"))

    step = 0
    for epoch in range(1, opt.epochs + 1):
        optimizer.lr = opt.lr_at(epoch)
        totals = []
        for batch in _batches(len(pairs), opt.batch_size, rng):
            breakdown = train_step(model, optimizer, pairs, batch, config, rng)
            step += 1
            result.steps.append({"step": step, **breakdown})
            totals.append(breakdown["total"])
            if loss_log is not None:
                loss_log.append(step, breakdown)
        summary = {"epoch": epoch, "lr": optimizer.lr, "loss": float(np.mean(totals))}
        if val_pairs is not None:
            summary.update(evaluate_pairs(model, val_pairs, pairs, config.inference.k))
            log.info("epoch %d: loss %.4f  val R@1 t %.3f i %.3f", epoch, summary["loss"],
                     summary["r1_t"], summary["r1_i"])
        else:
            log.info("epoch %d: loss %.4f", epoch, summary["loss"])
        result.epochs.append(summary)
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), model, optimizer, config,
                            epoch, vocab)
    return result


def save_checkpoint(path, model: CVSEModel, optimizer: Adam, config: TrainingConfig,
                    epoch: int, vocab: ConceptVocabulary | None = None) -> None:
    sections = {name: model.params[name] for name in sorted(model.params)}
    sections["const.concept_vectors"] = model.concept_vectors
    sections["const.adjacency"] = model.adjacency
    for name in sorted(optimizer.m):
        sections[f"adam.m.{name}"] = optimizer.m[name]
        sections[f"adam.v.{name}"] = optimizer.v[name]
    cfg = config.to_dict()
    meta = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "epoch": epoch,
        "adam_step": optimizer.step_count,
        "concept_tokens": model.concept_tokens,
        "concepts": [[c.token, c.type, c.frequency] for c in vocab.entries] if vocab else None,
        "word_tokens": model.words.tokens,
        "param_shapes": {k: list(v.shape) for k, v in sorted(model.params.items())},
    }
    write_checkpoint(path, sections, meta)


def load_checkpoint(path) -> tuple[CVSEModel, Adam, TrainingConfig, dict]:
    """Rebuild model, optimizer state and config from a checkpoint file."""
    sections, meta = read_checkpoint(path)
    config = config_from_dict(meta["config"])
    shapes = meta["param_shapes"]
    params = {k: sections[k].reshape(shape) for k, shape in shapes.items()}
    model = CVSEModel(config.model, meta["concept_tokens"], sections["const.concept_vectors"],
                      sections["const.adjacency"], WordIndex(meta["word_tokens"]), params)
    opt = config.train
    optimizer = Adam(opt.lr_at(meta["epoch"]), opt.beta1, opt.beta2, opt.eps, meta["adam_step"])
    for k, shape in shapes.items():
        if f"adam.m.{k}" in sections:
            optimizer.m[k] = sections[f"adam.m.{k}"].reshape(shape)
            optimizer.v[k] = sections[f"adam.v.{k}"].reshape(shape)
    return model, optimizer, config, meta


def vocab_from_meta(meta: dict) -> ConceptVocabulary:
    """Concept vocabulary recorded in a checkpoint sidecar."""
    if meta.get("concepts"):
        return ConceptVocabulary([Concept(t, ty, int(f)) for t, ty, f in meta["concepts"]])
    return ConceptVocabulary([Concept(t, "Object", 0) for t in meta["concept_tokens"]])
