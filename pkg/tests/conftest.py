"""Shared fixtures: synthetic attention records with known contents."""

import numpy as np
import pytest

from adapedit.backend.base import BRANCH_EDITED, BRANCH_ORIGINAL, LayerInfo, StepOutput
from adapedit.prompts import TokenizedPrompt
from adapedit.record import AttnRecord


def simple_prompt(words, tokens_per_word=1):
    """A TokenizedPrompt with sequential token ids and uniform spans."""
    spans = []
    ids = []
    for i, _ in enumerate(words):
        start = len(ids)
        ids.extend(range(1000 + i * 10, 1000 + i * 10 + tokens_per_word))
        spans.append((start, len(ids)))
    return TokenizedPrompt(
        text=" ".join(words),
        words=tuple(words),
        token_ids=tuple(ids),
        word_spans=tuple(spans),
    )


def make_record(
    token_maps,
    features,
    words=("one", "two", "three"),
    steps=1,
    t=1,
):
    """Record with one step of data on both branches.

    ``token_maps``: dict layer_id -> (tokens, pixels) map, stored for
    both branches; ``features``: dict layer_id -> (pixels, d).
    """
    prompt = simple_prompt(words)
    catalog = {}
    for lid, m in token_maps.items():
        side = int(round(m.shape[1] ** 0.5))
        catalog[lid] = LayerInfo(layer_id=lid, height=side, width=side, heads=1)
    record = AttnRecord(prompt, prompt, catalog, steps)
    for branch in (BRANCH_ORIGINAL, BRANCH_EDITED):
        out = StepOutput(
            noise_cond=np.zeros(1, dtype=np.float32),
            noise_uncond=np.zeros(1, dtype=np.float32),
            maps={
                lid: np.ascontiguousarray(m.T)[None, :, :].astype(np.float32)
                for lid, m in token_maps.items()
            },
            features={lid: f.astype(np.float32) for lid, f in features.items()},
        )
        record.add_step(t, branch, out)
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
