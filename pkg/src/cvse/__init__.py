"""Consensus-aware visual-semantic embedding for image-text matching."""

from .config import RunConfig, TrainingConfig, load_config
from .corpus import CaptionRecord, ConceptVocabulary, build_vocabulary, tokenize
from .errors import CVSEError
from .graph import CorrelationGraph, build_graph
from .model import CVSEModel, ModelConfig
from .train import TrainResult, load_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "CVSEError", "CVSEModel", "CaptionRecord", "ConceptVocabulary", "CorrelationGraph",
    "ModelConfig", "RunConfig", "TrainResult", "TrainingConfig", "build_graph",
    "build_vocabulary", "load_checkpoint", "load_config", "tokenize", "train",
]
