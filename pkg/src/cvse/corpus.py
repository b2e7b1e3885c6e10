"""Caption corpus ingestion, typed concept vocabulary and concept labels."""

from __future__ import annotations

import json
import logging
import re
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (DataIntegrityError, InsufficientVocabularyError,
                     ParameterError, ParseError)

log = logging.getLogger(__name__)

OBJECT, MOTION, PROPERTY = "Object", "Motion", "Property"
CONCEPT_TYPES = (OBJECT, MOTION, PROPERTY)

STOP_WORDS = frozenset("""
a an the and or but if of at by for with about against between into through
during before after above below to from up down in out on off over under
again further then once here there when where why how all any both each few
more most other some such no nor not only own same so than too very can will
just should now is are was were be been being have has had having do does did
doing i me my we our you your he him his she her it its they them their what
which who whom this that these those am s t its while as until near next
beside behind front top onto along across around inside outside
""".split())

# Closed list backing the heuristic typer; anything else not ending in -ing is an Object.
PROPERTY_WORDS = frozenset("""
red orange yellow green blue purple pink brown black white gray grey silver
gold large small big little tall short long young old new wooden metal
plastic empty full open closed dark bright colorful clean dirty wet dry hot
cold busy calm happy sad tiny huge several many two three four five
""".split())

_APOSTROPHES = re.compile(r"['’]")
_WORDS = re.compile(r"[^\W_]+")


def tokenize(caption: str) -> list[str]:
    """Lower-case, drop apostrophes, split on every other non-alphanumeric run."""
    return _WORDS.findall(_APOSTROPHES.sub("", caption.lower()))


@dataclass
class CaptionRecord:
    image_id: str
    captions: list[str]

    def __post_init__(self):
        if not self.image_id:
            raise DataIntegrityError("caption record with empty image id")
        if not self.captions:
            raise DataIntegrityError(f"image {self.image_id!r} has no captions")

    def token_lists(self) -> list[list[str]]:
        return [tokenize(c) for c in self.captions]


def read_corpus(path) -> list[CaptionRecord]:
    """Read a JSON Lines corpus: one ``{"id": ..., "captions": [...]}`` per line."""
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = CaptionRecord(str(obj["id"]), list(obj["captions"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: bad corpus record ({exc})") from None
            if rec.image_id in seen:
                raise DataIntegrityError(f"duplicate image id {rec.image_id!r} at line {lineno}")
            seen.add(rec.image_id)
            records.append(rec)
    if not records:
        raise DataIntegrityError(f"{path}: empty corpus")
    return records


def write_corpus(records: Iterable[CaptionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.image_id, "captions": r.captions}) + "\n")


def heuristic_type(token: str) -> str:
    if token.endswith("ing") and len(token) > 4:
        return MOTION
    if token in PROPERTY_WORDS:
        return PROPERTY
    return OBJECT


def read_lexicon(path) -> dict[str, str]:
    """Read a ``token<TAB>type`` file."""
    lexicon = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in CONCEPT_TYPES:
                raise ParseError(f"{path}:{lineno}: expected token<TAB>{{Object,Motion,Property}}")
            lexicon[parts[0]] = parts[1]
    return lexicon


@dataclass(frozen=True)
class Concept:
    token: str
    type: str
    frequency: int


@dataclass
class ConceptVocabulary:
    """The q selected concepts; list position is the concept index."""

    entries: list[Concept]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {c.token: i for i, c in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise DataIntegrityError("duplicate concept tokens in vocabulary")

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self._index

    def index(self, token: str) -> int:
        return self._index[token]

    @property
    def tokens(self) -> list[str]:
        return [c.token for c in self.entries]

    def type_counts(self) -> dict[str, int]:
        counts = Counter(c.type for c in self.entries)
        return {t: counts.get(t, 0) for t in CONCEPT_TYPES}

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, c in enumerate(self.entries):
                fh.write(f"{i}\t{c.token}\t{c.type}\t{c.frequency}\n")

    @classmethod
    def from_tsv(cls, path) -> "ConceptVocabulary":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4 or int(parts[0]) != len(entries):
                    raise ParseError(f"{path}:{lineno}: expected index<TAB>token<TAB>type<TAB>frequency")
                entries.append(Concept(parts[1], parts[2], int(parts[3])))
        return cls(entries)


def bucket_sizes(q: int) -> tuple[int, int, int]:
    """Object/Motion/Property slots in 7:2:1, rounded half up, summing to q."""
    n_obj = (7 * q + 5) // 10
    n_mot = (2 * q + 5) // 10
    return n_obj, n_mot, q - n_obj - n_mot


def token_frequencies(records: Sequence[CaptionRecord]) -> Counter:
    freq = Counter()
    for rec in records:
        for tokens in rec.token_lists():
            freq.update(t for t in tokens if t not in STOP_WORDS)
    return freq


def build_vocabulary(records: Sequence[CaptionRecord], lexicon: dict[str, str] | None,
                     q: int) -> ConceptVocabulary:
    """Pick the most frequent typed tokens, filling each type bucket separately.

    Within a bucket tokens are ranked by total occurrence count across all
    captions, ties going to the lexicographically smaller token.  The result
    lists Objects first, then Motions, then Properties.
    """
    if not records:
        raise DataIntegrityError("cannot build a vocabulary from an empty corpus")
    if q < 10:
        raise ParameterError(f"vocabulary size q must be >= 10, got {q}")
    lexicon = lexicon or {}
    freq = token_frequencies(records)
    buckets: dict[str, list[tuple[int, str]]] = {t: [] for t in CONCEPT_TYPES}
    for token, n in freq.items():
        buckets[lexicon.get(token) or heuristic_type(token)].append((-n, token))

    entries = []
    for ctype, size in zip(CONCEPT_TYPES, bucket_sizes(q)):
        ranked = sorted(buckets[ctype])
        if len(ranked) < size:
            raise InsufficientVocabularyError(
                f"{ctype} bucket needs {size} concepts but only {len(ranked)} candidates exist")
        entries.extend(Concept(tok, ctype, -negn) for negn, tok in ranked[:size])
    return ConceptVocabulary(entries)


def concept_label(token_lists: Iterable[Sequence[str]], vocab: ConceptVocabulary) -> np.ndarray:
    """Binary q-vector marking concepts present in any of the given captions."""
    label = np.zeros(len(vocab))
    for tokens in token_lists:
        for t in tokens:
            if t in vocab:
                label[vocab.index(t)] = 1.0
    return label


def corpus_labels(records: Sequence[CaptionRecord], vocab: ConceptVocabulary,
                  unit: str = "image") -> np.ndarray:
    """Stack of concept labels, one per image (union of captions) or per caption."""
    if unit == "image":
        rows = [concept_label(r.token_lists(), vocab) for r in records]
    elif unit == "caption":
        rows = [concept_label([t], vocab) for r in records for t in r.token_lists()]
    else:
        raise ParameterError(f"unknown co-occurrence unit {unit!r}")
    return np.array(rows).reshape(len(rows), len(vocab))


@dataclass
class WordVectorTable:
    vectors: dict[str, np.ndarray]
    dim: int
    seed: int = 0

    def __contains__(self, token):
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray:
        """Stored vector, or a Gaussian (sigma 0.1) seeded by (seed, token)."""
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        log.warning("no word vector for %r; using seeded random fallback", token)
        rng = np.random.default_rng([self.seed, zlib.crc32(token.encode("utf-8"))])
        return rng.normal(0.0, 0.1, self.dim)

    def matrix(self, tokens: Sequence[str]) -> np.ndarray:
        return np.stack([self.lookup(t) for t in tokens]) if tokens else np.zeros((0, self.dim))


def read_word_vectors(path, wanted: Iterable[str] | None = None, dim: int | None = 300,
                      seed: int = 0) -> WordVectorTable:
    """Parse a whitespace-delimited word-vector text file.

    Every line is checked for the expected width (``dim``, or the width of
    the first line when ``dim`` is None); only tokens in ``wanted`` are
    kept when it is given.
    """
    wanted = set(wanted) if wanted is not None else None
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split()
            if not parts:
                continue
            if dim is None:
                dim = len(parts) - 1
            if len(parts) - 1 != dim:
                raise ParseError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
            if wanted is None or parts[0] in wanted:
                try:
                    vectors[parts[0]] = np.array(parts[1:], dtype=float)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-numeric vector entry") from None
    if dim is None:
        raise ParseError(f"{path}: no vectors found")
    return WordVectorTable(vectors, dim, seed)


def load_word_vectors(path, vocab: ConceptVocabulary, dim: int | None = 300,
                      seed: int = 0) -> tuple[WordVectorTable, np.ndarray]:
    """Word-vector table plus the q x dim concept matrix (row i = concept i)."""
    table = read_word_vectors(path, vocab.tokens, dim, seed)
    return table, table.matrix(vocab.tokens)


def write_word_vectors(vectors: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token, vec in vectors.items():
            fh.write(token + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")

