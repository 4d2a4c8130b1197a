"""Flexible word-level temporal adjustment.

Assigns every word of the edited prompt a temporal guidance scale: the
fraction of denoising steps during which that word's attention map is
preserved rather than blended.  Scales come from a soft attention
strategy: pool the last-step cross-attention maps to 32x32 word maps,
turn them into per-word text embeddings over the visual features,
correlate each word with the averaged key-word embedding, and map the
correlation through ``lambda_tau * (1 - exp(A - 1))``.  Key words
(the edited ones) get scale 0 so they blend at every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigError, DimensionError, PromptError, StateError
from .prompts import AlignmentMap, TokenizedPrompt
from .record import AttnRecord
from .tensorops import (
    l2_normalize_rows,
    mask_below,
    matmul,
    renormalize_rows,
    resize_bilinear,
)

AGG_SIDE = 32
AGG_PIXELS = AGG_SIDE * AGG_SIDE


@dataclass(frozen=True)
class AggregatedMap:
    """Word-by-pixel attention at 32x32, averaged over layers and heads.

    Entries stay on the softmax-native scale: each value is the fraction
    of one pixel's attention given to one word, in [0, 1], and each
    pixel's column sums to 1 across words.  The mask threshold applies
    to this scale; word rows only become distributions after masking
    and renormalization downstream.
    """

    map: np.ndarray  # (num_words, 1024), per-pixel attention fractions
    source_step: int


@dataclass(frozen=True)
class WordGuidance:
    """Per-word correlations and temporal scales plus the shared embeddings."""

    words: tuple[str, ...]
    key_set: frozenset[int]
    correlation: np.ndarray    # (num_words,) in [0, 1]
    tau: np.ndarray            # (num_words,) in [0, lambda_tau*(1-1/e)]
    key_embedding: np.ndarray  # (d,), unit norm
    visual_features: np.ndarray  # (1024, d), raw


def _word_maps_at_layer(
    record: AttnRecord, t: int, layer: int, branch: int, prompt: TokenizedPrompt
) -> np.ndarray:
    """Token rows pooled into word rows, resampled to the 32x32 grid.

    Sub-token rows sum so a word's value stays the total attention the
    pixel gives that word; convex resampling preserves per-pixel sums.
    """
    token_map = record.token_map(t, layer, branch)
    info = record.catalog[layer]
    rows = []
    for start, end in prompt.word_spans:
        word_row = token_map[start:end].sum(axis=0, dtype=np.float64).astype(np.float32)
        if info.pixels != AGG_PIXELS:
            grid = word_row.reshape(info.height, info.width)
            word_row = resize_bilinear(grid, AGG_SIDE, AGG_SIDE).reshape(-1)
        rows.append(word_row)
    return np.stack(rows)


def aggregate_step_maps(
    record: AttnRecord, branch: int, step: Optional[int] = None
) -> AggregatedMap:
    """Average the recorded cross-attention maps of one step at 32x32.

    Defaults to the last diffusion step.  Token rows pool into word
    rows, layers at other resolutions resample bilinearly, the layers
    average arithmetically, and each pixel's word-fractions renormalize
    to sum 1.  Raises StateError when nothing was recorded.
    """
    t = record.final_step if step is None else step
    prompt = record.edited if branch == 1 else record.original
    per_layer = [
        _word_maps_at_layer(record, t, lid, branch, prompt)
        for lid in sorted(record.catalog)
    ]
    if not per_layer:
        raise StateError("record holds no layers to aggregate")
    mean = np.mean(np.stack(per_layer), axis=0, dtype=np.float64)
    pixel_sums = mean.sum(axis=0, keepdims=True)
    normalized = mean / np.where(pixel_sums == 0.0, 1.0, pixel_sums)
    return AggregatedMap(map=normalized.astype(np.float32), source_step=t)


def text_embeddings_from_attention(
    agg: np.ndarray, visual_features: np.ndarray
) -> np.ndarray:
    """Word embeddings as attention-weighted mixes of visual features.

    Rows of ``agg`` must be masked and renormalized already; a fully
    masked (all-zero) row falls back to the unweighted feature mean so
    it cannot poison the correlation downstream.
    """
    agg = np.asarray(agg, dtype=np.float32)
    visual_features = np.asarray(visual_features, dtype=np.float32)
    if agg.shape[1] != visual_features.shape[0]:
        raise DimensionError(
            f"map pixels {agg.shape[1]} != feature rows {visual_features.shape[0]}"
        )
    out = matmul(agg, visual_features)
    dead = agg.sum(axis=1) == 0.0
    if dead.any():
        out[dead] = visual_features.mean(axis=0, dtype=np.float64).astype(np.float32)
    return out


def pool_key_embedding(word_embeddings: np.ndarray, key_indices: Iterable[int]) -> np.ndarray:
    """Average the key-word rows and normalize to unit length."""
    idx = sorted(set(int(i) for i in key_indices))
    if not idx:
        raise PromptError("key-word set is empty; nothing to edit")
    word_embeddings = np.asarray(word_embeddings, dtype=np.float32)
    pooled = word_embeddings[idx].mean(axis=0, dtype=np.float64).astype(np.float32)
    return l2_normalize_rows(pooled[None, :])[0]


def correlation_to_key(word_embeddings: np.ndarray, key_embedding: np.ndarray) -> np.ndarray:
    """Cosine of each word embedding against the key embedding, in [0, 1]."""
    normed = l2_normalize_rows(word_embeddings)
    key = np.asarray(key_embedding, dtype=np.float32)
    corr = matmul(normed, key[:, None])[:, 0]
    return np.clip(corr, 0.0, 1.0)


def temporal_scales(
    correlation: np.ndarray, key_set: Iterable[int], lambda_tau: float
) -> np.ndarray:
    """``tau = lambda_tau * (1 - exp(A - 1))`` for general words, 0 for key words."""
    if lambda_tau < 0:
        raise ConfigError(f"lambda_tau must be >= 0, got {lambda_tau}")
    a = np.asarray(correlation, dtype=np.float32)
    tau = np.float32(lambda_tau) * (
        np.float32(1.0) - np.exp(a - np.float32(1.0), dtype=np.float32)
    )
    tau = tau.astype(np.float32)
    for i in key_set:
        tau[int(i)] = 0.0
    return tau


def compute_word_guidance(
    record: AttnRecord,
    alignment: AlignmentMap,
    lambda_tau: float,
    mask_threshold: float,
    step: Optional[int] = None,
) -> WordGuidance:
    """Run the whole soft-attention pipeline on the edited branch.

    Order is fixed: aggregate, mask below the threshold, renormalize
    rows, project onto visual features, pool the key embedding, then
    correlate and scale.
    """
    agg = aggregate_step_maps(record, branch=1, step=step)
    masked = renormalize_rows(mask_below(agg.map, mask_threshold))
    features = record.pooled_features(agg.source_step, branch=1)
    embeddings = text_embeddings_from_attention(masked, features)
    key_vec = pool_key_embedding(embeddings, alignment.key_set)
    corr = correlation_to_key(embeddings, key_vec)
    tau = temporal_scales(corr, alignment.key_set, lambda_tau)
    return WordGuidance(
        words=record.edited.words,
        key_set=alignment.key_set,
        correlation=corr,
        tau=tau,
        key_embedding=key_vec,
        visual_features=features,
    )
