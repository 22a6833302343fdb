"""Layer-by-layer entropy profiling of decoder-only transformers via the logit lens."""

from ._accel import HAS_NUMBA, backend_name
from .analysis import (
    EntropyAggregate,
    EntropyMatrix,
    accumulate,
    distribution_view,
    finalize,
    horizontal_view,
    merge,
    vertical_view,
)
from .checkpoint import Checkpoint, load_checkpoint, load_gpt2_checkpoint, read_archive, save_toy_checkpoint
from .corpus import CorpusSpec, SequenceRecord, ingest
from .lens import LensGrid, LensMode, LensRecord, lens_sequence, topk, unembed
from .model import ModelConfig, TapGrid, embed, final_norm, forward_with_taps
from .tokenizer import Vocab, decode, encode, load_vocab

__version__ = "0.1.0"
