"""Shared backend contract: sessions, step outputs, layer catalogs.

A backend owns tokenization (its vocabulary callback) and denoising.
A session holds one original/edited prompt pair plus a seed, exposes
one ``step`` per diffusion step per branch, and decodes images once
sampling has finished.  Attention maps cross this boundary in the
softmax-native orientation: ``(heads, pixels, tokens)`` with each pixel
row summing to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Protocol, Sequence

import numpy as np

from ..prompts import TokenizedPrompt

BRANCH_ORIGINAL = 0
BRANCH_EDITED = 1
BRANCHES = (BRANCH_ORIGINAL, BRANCH_EDITED)


@dataclass(frozen=True)
class LayerInfo:
    """One cross-attention layer: spatial resolution and head count."""

    layer_id: int
    height: int
    width: int
    heads: int

    @property
    def pixels(self) -> int:
        return self.height * self.width


@dataclass
class StepOutput:
    """Everything one denoising step emits for one branch."""

    noise_cond: np.ndarray
    noise_uncond: np.ndarray
    maps: Dict[int, np.ndarray] = field(default_factory=dict)      # layer -> (heads, pix, tok)
    features: Dict[int, np.ndarray] = field(default_factory=dict)  # layer -> (pix, d)


class Session(Protocol):
    """One in-flight edit job on a backend."""

    def layers(self) -> Dict[int, LayerInfo]: ...

    def step(
        self,
        t: int,
        branch: int,
        injected_maps: Optional[Dict[int, np.ndarray]] = None,
    ) -> StepOutput: ...

    def decode(self, branch: int) -> np.ndarray: ...

    def close(self) -> None: ...


class Backend(Protocol):
    """Factory for sessions plus the tokenizer vocabulary callback."""

    name: str

    def vocab(self, word: str) -> Sequence[int]: ...

    def open_session(
        self,
        original: TokenizedPrompt,
        edited: TokenizedPrompt,
        steps: int,
        guidance: float,
        seed: int,
    ) -> Session: ...
