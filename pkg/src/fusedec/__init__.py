"""Byte-level fusion decoding for token models with mismatched vocabularies."""

__version__ = "0.1.0"

from .byte_transform import (
    BudgetExceededError,
    ByteScore,
    ModelCache,
    approx_byte_log_score,
    approx_byte_score,
    exact_byte_marginal,
    exact_terminal_mass,
    next_byte_scores,
    refresh_cache,
    speculative_confidence,
)
from .fusion import (
    Beam,
    DecodeFailure,
    DecodeResult,
    FusionConfig,
    decode,
    decode_greedy,
    fuse_scores,
)
from .metrics import EvalReport, edit_distance, score_corpus
from .models import (
    NgramModel,
    NoisyChannelModel,
    PromptContext,
    SignalContext,
    TableModel,
    TokenModel,
    load_model,
)
from .vocab import (
    MainSequence,
    PrefixIndex,
    TokenizationError,
    VocabError,
    Vocabulary,
    alternatives_for_suffix,
    build_vocabulary,
    group_by_next_byte,
    load_vocabulary,
    save_vocabulary,
    tokenize,
)

__all__ = [
    "__version__",
    "Beam",
    "BudgetExceededError",
    "ByteScore",
    "DecodeFailure",
    "DecodeResult",
    "EvalReport",
    "FusionConfig",
    "MainSequence",
    "ModelCache",
    "NgramModel",
    "NoisyChannelModel",
    "PrefixIndex",
    "PromptContext",
    "SignalContext",
    "TableModel",
    "TokenModel",
    "TokenizationError",
    "VocabError",
    "Vocabulary",
    "alternatives_for_suffix",
    "approx_byte_log_score",
    "approx_byte_score",
    "build_vocabulary",
    "decode",
    "decode_greedy",
    "edit_distance",
    "exact_byte_marginal",
    "exact_terminal_mass",
    "fuse_scores",
    "group_by_next_byte",
    "load_model",
    "load_vocabulary",
    "next_byte_scores",
    "refresh_cache",
    "save_vocabulary",
    "score_corpus",
    "speculative_confidence",
    "tokenize",
]
