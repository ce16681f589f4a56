"""Byte-level language modeling with script-routed adaptive segmentation."""

from .corpus import (
    Batch,
    ByteSequence,
    CorpusDoc,
    ScriptConfig,
    byte_to_word_ratio,
    derive_prior,
    gen_synthetic_parallel,
    load_corpus,
    make_batches,
    save_corpus,
)
from .scripts import CYRILLIC, INDIC, LATIN, ScriptRegistry, detect_script
from .model import Model, ModelConfig
from .training import TrainConfig, Trainer
from .bpe import BpeModel, alpha_sample_weights, bpe_train, dtp_config
from .analysis import analyze, bench, segment_count

__version__ = "0.1.0"

__all__ = [
    "Batch", "ByteSequence", "CorpusDoc", "ScriptConfig",
    "byte_to_word_ratio", "derive_prior", "gen_synthetic_parallel",
    "load_corpus", "make_batches", "save_corpus",
    "LATIN", "CYRILLIC", "INDIC", "ScriptRegistry", "detect_script",
    "Model", "ModelConfig", "TrainConfig", "Trainer",
    "BpeModel", "alpha_sample_weights", "bpe_train", "dtp_config",
    "analyze", "bench", "segment_count",
]
