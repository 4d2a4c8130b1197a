"""Training-free spatio-temporal attention editing for text-guided
diffusion image editing.

The package pairs a backend-agnostic editing controller with a
deterministic toy diffusion backend for desk-scale work and a binary
wire protocol for driving real diffusion hosts.  Editing happens purely
through cross-attention map manipulation: per-word temporal scales
decide how long each word's map is blended versus preserved, and
per-pixel spatial scales weight the blend itself.
"""

__version__ = "0.1.0"

from .backend import ToyBackend
from .config import EditConfig, SweepGrid, load_grid_file, load_job_file
from .controller import (
    BLEND,
    PRESERVE,
    EditResult,
    GateSchedule,
    build_gate_schedule,
    collect_pass,
    run_edit,
)
from .errors import (
    AdapEditError,
    BackendUnavailable,
    ConfigError,
    DimensionError,
    PromptError,
    ProtocolError,
    RangeError,
    StateError,
)
from .prompts import AlignmentMap, TokenizedPrompt, align, key_word_token_positions, tokenize
from .record import AttnRecord
from .spatial import blend_attention_maps, spatial_scales
from .temporal import (
    AggregatedMap,
    WordGuidance,
    aggregate_step_maps,
    compute_word_guidance,
    correlation_to_key,
    pool_key_embedding,
    temporal_scales,
    text_embeddings_from_attention,
)
from .tensorops import l2_normalize_rows, lerp, mask_below, matmul, softmax_rows

__all__ = [
    "AdapEditError",
    "AggregatedMap",
    "AlignmentMap",
    "AttnRecord",
    "BLEND",
    "BackendUnavailable",
    "ConfigError",
    "DimensionError",
    "EditConfig",
    "EditResult",
    "GateSchedule",
    "PRESERVE",
    "PromptError",
    "ProtocolError",
    "RangeError",
    "StateError",
    "SweepGrid",
    "TokenizedPrompt",
    "ToyBackend",
    "WordGuidance",
    "align",
    "aggregate_step_maps",
    "blend_attention_maps",
    "build_gate_schedule",
    "collect_pass",
    "compute_word_guidance",
    "correlation_to_key",
    "key_word_token_positions",
    "l2_normalize_rows",
    "lerp",
    "load_grid_file",
    "load_job_file",
    "mask_below",
    "matmul",
    "pool_key_embedding",
    "run_edit",
    "softmax_rows",
    "spatial_scales",
    "temporal_scales",
    "text_embeddings_from_attention",
    "tokenize",
]
