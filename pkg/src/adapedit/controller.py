"""Two-pass edit orchestration.

Pass 1 denoises both prompts side by side on the same noise trajectory
with no interference and records every cross-attention map.  The
word-level temporal scales and pixel-level spatial scales are computed
from the last recorded step.  Pass 2 replays the identical seed on the
edited branch only, shipping a fully precomputed replacement map into
every layer at every step: preserved words take the original branch's
recorded map, blending words take the spatially weighted interpolation
of the two recorded maps.

Building injections from recorded maps (rather than live pass-2 maps)
keeps the whole edit a deterministic function of pass 1, which is what
makes the map-divergence metric exactly linear in the interpolation
weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .backend.base import BRANCH_EDITED, BRANCH_ORIGINAL, Backend
from .config import EditConfig
from .prompts import AlignmentMap, TokenizedPrompt, align, tokenize
from .record import AttnRecord
from .spatial import blend_attention_maps, blend_divergence, resample_scales, spatial_scales
from .temporal import WordGuidance, compute_word_guidance

PRESERVE = "PRESERVE"
BLEND = "BLEND"


@dataclass(frozen=True)
class GateSchedule:
    """Per-word step thresholds: blend first, preserve the final steps.

    Word ``i`` blends while ``t > threshold[i]`` and preserves for the
    remaining ``threshold[i]`` steps.  Key words have threshold 0, so
    they blend at every step.
    """

    thresholds: tuple[int, ...]
    steps: int

    def branch(self, word_index: int, t: int) -> str:
        return BLEND if t > self.thresholds[word_index] else PRESERVE

    def preserve_steps(self, word_index: int) -> int:
        return self.thresholds[word_index]

    def total_preserve_steps(self) -> int:
        return sum(self.thresholds)


def build_gate_schedule(tau: np.ndarray, steps: int) -> GateSchedule:
    """Convert fractional temporal scales into step thresholds.

    ``threshold = round(tau * steps)`` with round-half-up, clamped to
    the valid step range.
    """
    thresholds = tuple(
        min(steps, max(0, int(math.floor(float(x) * steps + 0.5)))) for x in tau
    )
    return GateSchedule(thresholds=thresholds, steps=steps)


@dataclass
class EditResult:
    """Everything one edit job produces."""

    image: np.ndarray
    edited_image: np.ndarray
    record: AttnRecord
    alignment: AlignmentMap
    config: EditConfig
    guidance: Optional[WordGuidance] = None
    schedule: Optional[GateSchedule] = None
    scales: Optional[np.ndarray] = None  # 32x32 spatial scales, flattened
    map_divergence: float = 0.0
    image_l2: float = 0.0
    noop: bool = False
    injected: Optional[Dict[Tuple[int, int], np.ndarray]] = None
    warnings: List[str] = field(default_factory=list)


def collect_pass(
    backend: Backend,
    original: TokenizedPrompt,
    edited: TokenizedPrompt,
    config: EditConfig,
) -> Tuple[np.ndarray, AttnRecord]:
    """Run both branches with no injection and record all attention."""
    session = backend.open_session(
        original, edited, config.steps, config.guidance, config.seed
    )
    try:
        record = AttnRecord(original, edited, session.layers(), config.steps)
        for t in range(config.steps, 0, -1):
            for branch in (BRANCH_ORIGINAL, BRANCH_EDITED):
                record.add_step(t, branch, session.step(t, branch))
        image = session.decode(BRANCH_ORIGINAL)
    finally:
        session.close()
    return image, record


def _aligned_source_rows(
    map_original: np.ndarray,
    source_span: Tuple[int, int],
    target_width: int,
) -> np.ndarray:
    """Original-map rows for one word, shaped to the edited word's span.

    Equal-length spans map positionally; otherwise the source span's
    row mean is replicated across the target span.
    """
    start, end = source_span
    rows = map_original[start:end]
    if rows.shape[0] == target_width:
        return rows
    mean = rows.mean(axis=0, dtype=np.float64).astype(np.float32)
    return np.repeat(mean[None, :], target_width, axis=0)


def build_injected_map(
    record: AttnRecord,
    alignment: AlignmentMap,
    schedule: GateSchedule,
    layer_scales: np.ndarray,
    lambda_s: float,
    t: int,
    layer: int,
) -> Tuple[np.ndarray, float]:
    """Replacement map (tokens x pixels) for one step and layer.

    Returns the map together with its blend divergence from the
    original branch's recorded map.
    """
    map_orig = record.token_map(t, layer, BRANCH_ORIGINAL)
    map_edit = record.token_map(t, layer, BRANCH_EDITED)
    out = map_edit.copy()
    divergence = 0.0
    for word_index, source in enumerate(alignment.pairs):
        if source is None:
            continue  # inserted word: keep the edited branch's own map
        start, end = record.edited.word_spans[word_index]
        src_rows = _aligned_source_rows(
            map_orig, record.original.word_spans[source], end - start
        )
        if schedule.branch(word_index, t) == PRESERVE:
            out[start:end] = src_rows
        else:
            out[start:end] = blend_attention_maps(
                src_rows, map_edit[start:end], layer_scales, lambda_s
            )
            divergence += blend_divergence(
                src_rows, map_edit[start:end], layer_scales, lambda_s
            )
    return out, divergence


def _ship_orientation(token_map: np.ndarray, heads: int) -> np.ndarray:
    """Token-by-pixel map back to the backend's (heads, pixels, tokens)."""
    pixel_major = np.ascontiguousarray(token_map.T)
    return np.repeat(pixel_major[None, :, :], heads, axis=0)


def run_edit(
    backend: Backend,
    prompt: str,
    edit: str,
    config: EditConfig,
    keep_injected: bool = False,
) -> EditResult:
    """Produce the original and edited images for one prompt pair."""
    original = tokenize(prompt, backend.vocab)
    edited = tokenize(edit, backend.vocab)
    alignment = align(original, edited)

    image, record = collect_pass(backend, original, edited, config)

    if alignment.is_noop:
        return EditResult(
            image=image,
            edited_image=image.copy(),
            record=record,
            alignment=alignment,
            config=config,
            noop=True,
            warnings=["edit prompt changes no words; returning the original image"],
        )

    guidance = compute_word_guidance(
        record, alignment, config.lambda_tau, config.alpha_m
    )
    schedule = build_gate_schedule(guidance.tau, config.steps)
    scales32 = spatial_scales(
        guidance.key_embedding, guidance.visual_features, config.lambda_sv
    )

    session = backend.open_session(
        original, edited, config.steps, config.guidance, config.seed
    )
    injected_store: Optional[Dict[Tuple[int, int], np.ndarray]] = (
        {} if keep_injected else None
    )
    divergence = 0.0
    try:
        catalog = session.layers()
        for t in range(config.steps, 0, -1):
            if config.dps_per_step:
                step_scales = spatial_scales(
                    guidance.key_embedding,
                    record.pooled_features(t, BRANCH_EDITED),
                    config.lambda_sv,
                )
            else:
                step_scales = scales32
            shipped: Dict[int, np.ndarray] = {}
            for lid in sorted(catalog):
                info = catalog[lid]
                layer_scales = resample_scales(step_scales, info.height, info.width)
                token_map, div = build_injected_map(
                    record, alignment, schedule, layer_scales,
                    config.lambda_s, t, lid,
                )
                divergence += div
                shipped[lid] = _ship_orientation(token_map, info.heads)
                if injected_store is not None:
                    injected_store[(t, lid)] = token_map
            session.step(t, BRANCH_EDITED, shipped)
        edited_image = session.decode(BRANCH_EDITED)
    finally:
        session.close()

    image_l2 = float(
        np.linalg.norm(image.astype(np.float64) - edited_image.astype(np.float64))
    )
    return EditResult(
        image=image,
        edited_image=edited_image,
        record=record,
        alignment=alignment,
        config=config,
        guidance=guidance,
        schedule=schedule,
        scales=scales32,
        map_divergence=divergence,
        image_l2=image_l2,
        injected=injected_store,
    )
