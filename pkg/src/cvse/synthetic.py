"""Seeded toy corpus with planted concept co-occurrence structure.

Concepts are grouped into topics.  Each image draws most of its concepts
from one topic, so the co-occurrence graph recovers the topic blocks.
Region features are noisy copies of per-concept prototype vectors, which
makes every caption's concept set visible in its image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import TrainingConfig, config_from_dict
from .corpus import MOTION, OBJECT, PROPERTY, CaptionRecord, write_corpus, write_word_vectors
from .io import write_features, write_json

OBJECTS = ("dog", "frisbee", "grass", "surfboard", "wave", "ocean", "plate", "pizza", "table",
           "horse", "fence", "field", "train", "track", "station", "kite", "beach", "sky",
           "bus", "street", "cat", "sofa")
MOTIONS = ("running", "riding", "eating", "flying", "standing", "sitting")
PROPERTIES = ("red", "white", "large", "wooden")
DISTRACTORS = tuple(f"thing{i:02d}" for i in range(60))
FILLER = ("a", "the", "with", "and", "near", "in")

# object groups per topic; motion/property of topic t are MOTIONS[t % 6], PROPERTIES[t % 4]
TOPIC_OBJECTS = ((0, 1, 2), (3, 4, 5), (6, 7, 8), (9, 10, 11), (12, 13, 14), (15, 16, 17),
                 (18, 19), (20, 21))


# Scaled-down training defaults that fit the toy corpus on one core.
TOY_SETTINGS = {
    "vocab": {"q": 32},
    "model": {"d": 64, "gcn_hidden": 32},
    "train": {"batch_size": 16, "epochs": 200, "lr_decay_epoch": 100},
}


def toy_config(**train_overrides):
    """``TrainingConfig`` with the toy settings applied."""
    settings = {k: dict(v) for k, v in TOY_SETTINGS.items()}
    settings["train"].update(train_overrides)
    return config_from_dict(settings, TrainingConfig)


@dataclass
class SyntheticData:
    records: list[CaptionRecord]
    features: np.ndarray           # (n, M, F)
    lexicon: dict[str, str]
    word_vectors: dict[str, np.ndarray]
    concept_sets: list[tuple[str, ...]]

    @property
    def image_ids(self) -> list[str]:
        return [r.image_id for r in self.records]


def _caption(rng, objs, motion, prop, cross, distractor) -> tuple[str, tuple[str, ...]]:
    words = ["a"] + ([prop] if prop else []) + [objs[0]] + ([motion] if motion else [])
    for o in objs[1:]:
        words += ["with" if len(words) < 5 else "and", "a", o]
    if cross:
        words += ["near", "the", cross]
    if distractor:
        words += ["in", "the", distractor]
    concepts = tuple(sorted(set(objs) | {c for c in (motion, prop, cross) if c}))
    text = " ".join(words)
    return text[0].upper() + text[1:] + ".", concepts


def generate(seed: int = 7, n_pairs: int = 64, n_regions: int = 8, feature_dim: int = 48,
             word_dim: int = 300, noise: float = 0.3) -> SyntheticData:
    rng = np.random.default_rng(seed)
    n_topics = len(TOPIC_OBJECTS)
    seen = set()
    rows = []
    i = 0
    while len(rows) < n_pairs:
        topic = i % n_topics
        i += 1
        group = [OBJECTS[j] for j in TOPIC_OBJECTS[topic]]
        n_obj = int(rng.integers(1, len(group) + 1))
        objs = [group[j] for j in sorted(rng.choice(len(group), n_obj, replace=False))]
        motion = MOTIONS[topic % len(MOTIONS)] if rng.random() < 0.6 else None
        prop = PROPERTIES[topic % len(PROPERTIES)] if rng.random() < 0.5 else None
        cross = None
        if rng.random() < 0.25:
            others = [o for o in OBJECTS if o not in group]
            cross = others[int(rng.integers(len(others)))]
        distractor = DISTRACTORS[int(rng.integers(len(DISTRACTORS)))] if rng.random() < 0.25 else None
        text, concepts = _caption(rng, objs, motion, prop, cross, distractor)
        if concepts in seen:
            continue
        seen.add(concepts)
        rows.append((topic, text, concepts))

    concept_index = {c: j for j, c in enumerate(OBJECTS + MOTIONS + PROPERTIES)}
    prototypes = rng.normal(0.0, 1.0, (len(concept_index), feature_dim))
    features = np.empty((n_pairs, n_regions, feature_dim))
    for n, (_, _, concepts) in enumerate(rows):
        regions = rng.normal(0.0, noise, (n_regions, feature_dim))
        for r, c in enumerate(concepts[:n_regions]):
            regions[r] += prototypes[concept_index[c]]
        features[n] = regions[rng.permutation(n_regions)]

    records = [CaptionRecord(f"img{n:04d}", [text]) for n, (_, text, _) in enumerate(rows)]
    lexicon = {o: OBJECT for o in OBJECTS + DISTRACTORS}
    lexicon.update({m: MOTION for m in MOTIONS})
    lexicon.update({p: PROPERTY for p in PROPERTIES})

    topic_dirs = rng.normal(0.0, 1.0, (n_topics, word_dim))
    vectors = {}
    for word in OBJECTS + MOTIONS + PROPERTIES + DISTRACTORS + FILLER:
        vec = rng.normal(0.0, 0.1, word_dim)
        for t, objs in enumerate(TOPIC_OBJECTS):
            if word in [OBJECTS[j] for j in objs] or word in (MOTIONS[t % 6], PROPERTIES[t % 4]):
                vec += 0.05 * topic_dirs[t]
        vectors[word] = vec
    return SyntheticData(records, features, lexicon, vectors, [c for _, _, c in rows])


def write_synthetic(data: SyntheticData, out_dir) -> dict[str, str]:
    """Write corpus, lexicon, features and word vectors; return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "corpus": os.path.join(out_dir, "corpus.jsonl"),
        "lexicon": os.path.join(out_dir, "lexicon.tsv"),
        "features": os.path.join(out_dir, "features.bin"),
        "word_vectors": os.path.join(out_dir, "vectors.txt"),
    }
    write_corpus(data.records, paths["corpus"])
    with open(paths["lexicon"], "w", encoding="utf-8", newline="\n") as fh:
        for token, ctype in data.lexicon.items():
            fh.write(f"{token}\t{ctype}\n")
    write_features(paths["features"], data.features, data.image_ids)
    write_word_vectors(data.word_vectors, paths["word_vectors"])
    config = {"paths": {k: os.path.basename(v) for k, v in paths.items()}, **TOY_SETTINGS}
    paths["config"] = os.path.join(out_dir, "config.json")
    write_json(paths["config"], config)
    return paths
