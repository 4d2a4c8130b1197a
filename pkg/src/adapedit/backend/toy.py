"""Deterministic toy latent-diffusion backend.

A desk-scale surrogate denoiser over a 32x32x4 latent with two
cross-attention layers (32x32 and 16x16, one head each) and d = 32
text/visual features.  Model weights come from a fixed constant seed;
the session seed controls only the initial noise, so one seed plus one
prompt pair fully determines every output, bit for bit.

The attention hook mirrors real injection backends: maps passed to
``step`` replace the computed conditional maps before the value mix.
"""

from __future__ import annotations

import hashlib
import math
from typing import Dict, List, Optional

import numpy as np

from ..errors import DimensionError, RangeError, StateError
from ..prompts import TokenizedPrompt
from ..tensorops import resize_bilinear, softmax_rows
from . import sampler
from .base import BRANCHES, LayerInfo, StepOutput

LATENT_SIZE = 32
LATENT_CHANNELS = 4
FEATURE_DIM = 32
VOCAB_SIZE = 49408
WORD_CHUNK = 8  # characters per toy sub-token

_WEIGHT_SEED = 0x5EED
_TOKEN_SEED = 0x70CC

# Noise prediction = LATENT_COEF * latent + ATTN_COEF * attention output.
# The near-identity latent path keeps the deterministic reverse process
# contractive (final latents stay at unit scale instead of blowing up),
# while the attention path carries all the conditioning.
_LATENT_COEF = np.float32(0.8)
_ATTN_COEF = np.float32(0.3)


class _ToyWeights:
    """Fixed random projections shared by every toy session."""

    def __init__(self) -> None:
        rng = np.random.default_rng(_WEIGHT_SEED)

        def draw(rows: int, cols: int) -> np.ndarray:
            scale = 1.0 / math.sqrt(rows)
            return (rng.standard_normal((rows, cols)) * scale).astype(np.float32)

        self.query32 = draw(LATENT_CHANNELS, FEATURE_DIM)
        self.query16 = draw(LATENT_CHANNELS * 4, FEATURE_DIM)
        self.key = draw(FEATURE_DIM, FEATURE_DIM)
        self.value = draw(FEATURE_DIM, FEATURE_DIM)
        self.out32 = draw(FEATURE_DIM, LATENT_CHANNELS)
        self.out16 = draw(FEATURE_DIM, LATENT_CHANNELS)
        self.rgb = draw(LATENT_CHANNELS, 3)


_WEIGHTS = _ToyWeights()


def token_embedding(token_id: int) -> np.ndarray:
    """Seed-fixed pseudo-random d-vector for one token id."""
    rng = np.random.default_rng((_TOKEN_SEED, int(token_id)))
    return rng.standard_normal(FEATURE_DIM).astype(np.float32)


def toy_vocab(word: str) -> List[int]:
    """Hash each 8-character chunk of the lowercased word to a token id."""
    word = word.lower()
    ids = []
    for i in range(0, len(word), WORD_CHUNK):
        chunk = word[i : i + WORD_CHUNK]
        digest = hashlib.blake2b(chunk.encode("utf-8"), digest_size=4)
        ids.append(int.from_bytes(digest.digest(), "little") % VOCAB_SIZE)
    return ids


def _patchify(z: np.ndarray) -> np.ndarray:
    """2x2 patches of the latent, flattened to (256, 16)."""
    h = LATENT_SIZE // 2
    return (
        z.reshape(h, 2, h, 2, LATENT_CHANNELS)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h * h, LATENT_CHANNELS * 4)
    )


class ToySession:
    """One seeded dual-prompt sampling run on the toy denoiser."""

    def __init__(
        self,
        original: TokenizedPrompt,
        edited: TokenizedPrompt,
        steps: int,
        guidance: float,
        seed: int,
    ) -> None:
        if steps < 1:
            raise RangeError(f"step count must be >= 1, got {steps}")
        self.steps = steps
        self.guidance = float(guidance)
        self.seed = int(seed)
        self._prompts = {0: original, 1: edited}
        self._contexts = {
            b: np.stack([token_embedding(i) for i in p.token_ids])
            for b, p in self._prompts.items()
        }
        self._null_context = np.zeros((1, FEATURE_DIM), dtype=np.float32)
        self.schedule = sampler.linear_alpha_bar_schedule(steps)

        z_init = (
            np.random.default_rng(seed)
            .standard_normal((LATENT_SIZE, LATENT_SIZE, LATENT_CHANNELS))
            .astype(np.float32)
        )
        self._latents = {b: z_init.copy() for b in BRANCHES}
        self._next_t = {b: steps for b in BRANCHES}
        self._catalog = {
            0: LayerInfo(layer_id=0, height=32, width=32, heads=1),
            1: LayerInfo(layer_id=1, height=16, width=16, heads=1),
        }

    def layers(self) -> Dict[int, LayerInfo]:
        return dict(self._catalog)

    def _queries(self, z: np.ndarray) -> Dict[int, np.ndarray]:
        flat = z.reshape(-1, LATENT_CHANNELS)
        return {
            0: flat @ _WEIGHTS.query32,
            1: _patchify(z) @ _WEIGHTS.query16,
        }

    def _attend(
        self,
        queries: Dict[int, np.ndarray],
        context: np.ndarray,
        injected: Optional[Dict[int, np.ndarray]],
    ) -> tuple[Dict[int, np.ndarray], Dict[int, np.ndarray]]:
        keys = context @ _WEIGHTS.key
        values = context @ _WEIGHTS.value
        scale = np.float32(1.0 / math.sqrt(FEATURE_DIM))
        maps: Dict[int, np.ndarray] = {}
        mixed: Dict[int, np.ndarray] = {}
        for lid, q in queries.items():
            m = softmax_rows(q @ keys.T * scale)
            if injected is not None and lid in injected:
                repl = np.asarray(injected[lid], dtype=np.float32)
                expected = (self._catalog[lid].heads,) + m.shape
                if repl.shape != expected:
                    raise DimensionError(
                        f"injected map for layer {lid} has shape {repl.shape}, "
                        f"expected {expected}"
                    )
                m = repl[0]
            maps[lid] = m
            mixed[lid] = m @ values
        return maps, mixed

    def step(
        self,
        t: int,
        branch: int,
        injected_maps: Optional[Dict[int, np.ndarray]] = None,
    ) -> StepOutput:
        if branch not in BRANCHES:
            raise StateError(f"unknown branch {branch}")
        if self._next_t[branch] < 1:
            raise StateError(f"branch {branch} already finished sampling")
        if t != self._next_t[branch]:
            raise StateError(
                f"out-of-order step: got t={t}, expected t={self._next_t[branch]}"
            )
        if injected_maps is not None:
            unknown = set(injected_maps) - set(self._catalog)
            if unknown:
                raise DimensionError(f"injected maps for unknown layers {sorted(unknown)}")

        z = self._latents[branch]
        queries = self._queries(z)
        maps, mixed = self._attend(queries, self._contexts[branch], injected_maps)
        _, mixed_null = self._attend(queries, self._null_context, None)

        def to_noise(mix: Dict[int, np.ndarray]) -> np.ndarray:
            out32 = (mix[0] @ _WEIGHTS.out32).reshape(
                LATENT_SIZE, LATENT_SIZE, LATENT_CHANNELS
            )
            half = LATENT_SIZE // 2
            out16 = (mix[1] @ _WEIGHTS.out16).reshape(half, half, LATENT_CHANNELS)
            up16 = np.stack(
                [
                    resize_bilinear(out16[:, :, c], LATENT_SIZE, LATENT_SIZE)
                    for c in range(LATENT_CHANNELS)
                ],
                axis=-1,
            )
            attn = out32 + up16
            # spatially centered per channel so no DC offset accumulates
            attn = attn - attn.mean(axis=(0, 1), keepdims=True)
            return _LATENT_COEF * z + _ATTN_COEF * attn

        noise_cond = to_noise(mixed)
        noise_uncond = to_noise(mixed_null)

        guided = sampler.cfg_combine(noise_cond, noise_uncond, self.guidance)
        self._latents[branch] = sampler.reverse_step(z, guided, t, self.schedule)
        self._next_t[branch] = t - 1

        return StepOutput(
            noise_cond=noise_cond,
            noise_uncond=noise_uncond,
            maps={lid: m[None, :, :] for lid, m in maps.items()},
            features={0: queries[0]},
        )

    def decode(self, branch: int) -> np.ndarray:
        """Linear latent-to-RGB map scaled to uint8; zero latent is mid-gray."""
        if self._next_t[branch] >= 1:
            raise StateError(
                f"decode called mid-run: branch {branch} still at t={self._next_t[branch]}"
            )
        z = self._latents[branch]
        rgb = (z.reshape(-1, LATENT_CHANNELS) @ _WEIGHTS.rgb).reshape(
            LATENT_SIZE, LATENT_SIZE, 3
        )
        img = np.clip(127.5 + 40.0 * rgb.astype(np.float64), 0.0, 255.0)
        return img.astype(np.uint8)

    def close(self) -> None:
        pass


class ToyBackend:
    """Backend factory for :class:`ToySession`."""

    name = "toy"

    def vocab(self, word: str) -> List[int]:
        return toy_vocab(word)

    def open_session(
        self,
        original: TokenizedPrompt,
        edited: TokenizedPrompt,
        steps: int,
        guidance: float,
        seed: int,
    ) -> ToySession:
        return ToySession(original, edited, steps, guidance, seed)
