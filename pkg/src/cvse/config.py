"""Run configuration: nested dataclasses with strict key checking.

Defaults reproduce the published training setup.  Keys are addressed with
dots (``graph.epsilon``) both in ``--set`` overrides and in error reports.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

from .errors import ConfigError
from .model import ModelConfig
from .objective import LossWeights


@dataclass
class VocabConfig:
    q: int = 300
    word_dim: int = 300
    cooccurrence_unit: str = "image"


@dataclass
class GraphConfig:
    s: float = 5.0
    u: float = 0.02
    epsilon: float = 0.3
    denominator: str = "row"


@dataclass
class LossConfig:
    lambda1: float = 3.0
    lambda2: float = 5.0
    lambda3: float = 1.0
    lambda4: float = 2.0
    margin: float = 0.2
    mode: str = "hardest"

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.margin)


@dataclass
class OptimConfig:
    batch_size: int = 128
    epochs: int = 30
    lr: float = 2e-4
    lr_decay_epoch: int = 15
    lr_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    dtype: str = "float64"

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        return self.lr if epoch <= self.lr_decay_epoch else self.lr * self.lr_decay


@dataclass
class InferenceConfig:
    k: int = 3


@dataclass
class PathsConfig:
    corpus: str | None = None
    val_corpus: str | None = None
    features: str | None = None
    word_vectors: str | None = None
    lexicon: str | None = None
    out_dir: str | None = None


@dataclass
class TrainingConfig:
    vocab: VocabConfig = field(default_factory=VocabConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: OptimConfig = field(default_factory=OptimConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    def validate(self) -> "TrainingConfig":
        checks = [
            ("vocab.q", self.vocab.q >= 10, "must be >= 10"),
            ("vocab.word_dim", self.vocab.word_dim >= 1, "must be positive"),
            ("vocab.cooccurrence_unit", self.vocab.cooccurrence_unit in ("image", "caption"),
             "must be 'image' or 'caption'"),
            ("graph.s", self.graph.s > 1, "must exceed 1"),
            ("graph.denominator", self.graph.denominator in ("row", "column"),
             "must be 'row' or 'column'"),
            ("model.d", self.model.d >= 1, "must be positive"),
            ("model.gcn_hidden", self.model.gcn_hidden >= 1, "must be positive"),
            ("model.lam", self.model.lam > 0, "must be positive"),
            ("model.alpha", 0 <= self.model.alpha <= 1, "must lie in [0, 1]"),
            ("model.beta", 0 <= self.model.beta <= 1, "must lie in [0, 1]"),
            ("model.dropout", 0 <= self.model.dropout < 1, "must lie in [0, 1)"),
            ("loss.margin", self.loss.margin > 0, "must be positive"),
            ("loss.mode", self.loss.mode in ("hardest", "sum"), "must be 'hardest' or 'sum'"),
            ("loss.lambda1", min(self.loss.lambda1, self.loss.lambda2, self.loss.lambda3,
                                 self.loss.lambda4) >= 0, "loss weights must be non-negative"),
            ("train.batch_size", self.train.batch_size >= 2, "must be >= 2"),
            ("train.epochs", self.train.epochs >= 1, "must be >= 1"),
            ("train.lr", self.train.lr >= 0, "must be non-negative"),
            ("train.lr_decay_epoch", 0 <= self.train.lr_decay_epoch <= self.train.epochs,
             "must lie within the epoch count"),
            ("train.dtype", self.train.dtype in ("float32", "float64"),
             "must be 'float32' or 'float64'"),
            ("inference.k", self.inference.k >= 1, "must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunConfig(TrainingConfig):
    paths: PathsConfig = field(default_factory=PathsConfig)

    def training(self) -> TrainingConfig:
        return TrainingConfig(self.vocab, self.graph, self.model, self.loss, self.train,
                              self.inference)


def _coerce(key: str, raw: Any, current: Any, annotation: str):
    if "None" in str(annotation) and raw is None:
        return None
    if isinstance(current, bool) or annotation == "bool":
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "false"):
            return raw.lower() == "true"
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    if annotation == "int":
        if isinstance(raw, bool) or not (isinstance(raw, int) or (isinstance(raw, float) and raw.is_integer())):
            raise ConfigError(key, f"expected an integer, got {raw!r}")
        return int(raw)
    if annotation == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(key, f"expected a number, got {raw!r}")
        return float(raw)
    if not isinstance(raw, str):
        raise ConfigError(key, f"expected a string, got {raw!r}")
    return raw


def _apply(obj, data: Mapping, prefix: str = "") -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected an object")
    known = {f.name: f for f in fields(obj)}
    for key, raw in data.items():
        dotted = prefix + key
        if key not in known:
            raise ConfigError(dotted, "unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _apply(current, raw, dotted + ".")
        else:
            setattr(obj, key, _coerce(dotted, raw, current, str(known[key].type)))


def set_key(cfg, dotted: str, raw) -> None:
    """Assign one dotted key, e.g. ``set_key(cfg, "graph.epsilon", 0.3)``."""
    nested = raw
    for part in reversed(dotted.split(".")):
        nested = {part: nested}
    _apply(cfg, nested)


def parse_override(item: str) -> tuple[str, Any]:
    """``KEY=VALUE`` with VALUE decoded as JSON when possible, else as text."""
    key, sep, text = item.partition("=")
    if not sep or not key:
        raise ConfigError(item, "override must look like KEY=VALUE")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    return key.strip(), value


def load_config(path=None, overrides=(), cls=RunConfig):
    """Defaults, then the JSON file at ``path``, then ``KEY=VALUE`` overrides."""
    cfg = cls()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(str(path), f"invalid JSON ({exc})") from None
        _apply(cfg, data)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        set_key(cfg, key, value)
    return cfg.validate()


def config_from_dict(data: Mapping, cls=TrainingConfig):
    cfg = cls()
    _apply(cfg, data)
    return cfg.validate()
