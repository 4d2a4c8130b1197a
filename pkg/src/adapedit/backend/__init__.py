"""Denoiser backends: the shared session contract, sampler math, the
deterministic toy model, and the remote wire-protocol client."""

from .base import (
    BRANCH_EDITED,
    BRANCH_ORIGINAL,
    BRANCHES,
    Backend,
    LayerInfo,
    Session,
    StepOutput,
)
from .sampler import (
    cfg_combine,
    forward_noise,
    linear_alpha_bar_schedule,
    reverse_step,
)
from .toy import ToyBackend, ToySession, token_embedding, toy_vocab

__all__ = [
    "BRANCH_EDITED",
    "BRANCH_ORIGINAL",
    "BRANCHES",
    "Backend",
    "LayerInfo",
    "Session",
    "StepOutput",
    "ToyBackend",
    "ToySession",
    "cfg_combine",
    "forward_noise",
    "linear_alpha_bar_schedule",
    "reverse_step",
    "token_embedding",
    "toy_vocab",
]
