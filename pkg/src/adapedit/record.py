"""Attention record: everything a preliminary pass captures per step.

Maps are stored exactly as the backend emits them, ``(heads, pixels,
tokens)`` per layer per branch.  Accessors hand out the head-averaged
token-by-pixel view the editing math works in.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .backend.base import LayerInfo, StepOutput
from .errors import StateError
from .prompts import TokenizedPrompt


class AttnRecord:
    """Append-only store of per-step attention maps and visual features."""

    def __init__(
        self,
        original: TokenizedPrompt,
        edited: TokenizedPrompt,
        catalog: Dict[int, LayerInfo],
        steps: int,
    ) -> None:
        self.original = original
        self.edited = edited
        self.catalog = dict(catalog)
        self.steps = steps
        self._maps: Dict[Tuple[int, int, int], np.ndarray] = {}
        self._features: Dict[Tuple[int, int, int], np.ndarray] = {}

    def add_step(self, t: int, branch: int, output: StepOutput) -> None:
        for lid, m in output.maps.items():
            self._maps[(t, lid, branch)] = np.asarray(m, dtype=np.float32)
        for lid, f in output.features.items():
            self._features[(t, lid, branch)] = np.asarray(f, dtype=np.float32)

    @property
    def final_step(self) -> int:
        """The last diffusion step (t = 1 once a full pass is recorded)."""
        steps = {t for (t, _, _) in self._maps}
        if not steps:
            raise StateError("record is empty: no steps captured yet")
        return min(steps)

    def recorded_steps(self) -> Tuple[int, ...]:
        return tuple(sorted({t for (t, _, _) in self._maps}, reverse=True))

    def raw_map(self, t: int, layer: int, branch: int) -> np.ndarray:
        key = (t, layer, branch)
        if key not in self._maps:
            raise StateError(f"no map recorded for step={t} layer={layer} branch={branch}")
        return self._maps[key]

    def token_map(self, t: int, layer: int, branch: int) -> np.ndarray:
        """Head-averaged map transposed to (tokens, pixels)."""
        raw = self.raw_map(t, layer, branch)
        return np.ascontiguousarray(raw.mean(axis=0, dtype=np.float64).T.astype(np.float32))

    def features_at(self, t: int, layer: int, branch: int) -> np.ndarray:
        key = (t, layer, branch)
        if key not in self._features:
            raise StateError(
                f"no features recorded for step={t} layer={layer} branch={branch}"
            )
        return self._features[key]

    def feature_layers(self, t: int, branch: int) -> Tuple[int, ...]:
        return tuple(sorted(l for (s, l, b) in self._features if s == t and b == branch))

    def pooled_features(self, t: int, branch: int) -> np.ndarray:
        """Mean of the recorded visual features across layers at one step."""
        layers = self.feature_layers(t, branch)
        if not layers:
            raise StateError(f"no features recorded at step={t} branch={branch}")
        stack = np.stack([self._features[(t, l, branch)] for l in layers])
        return stack.mean(axis=0, dtype=np.float64).astype(np.float32)

    # persistence --------------------------------------------------------

    def save(self, path: Path) -> None:
        arrays: Dict[str, np.ndarray] = {}
        for (t, lid, b), m in self._maps.items():
            arrays[f"map_t{t}_l{lid}_b{b}"] = m
        for (t, lid, b), f in self._features.items():
            arrays[f"feat_t{t}_l{lid}_b{b}"] = f
        for tag, prompt in (("orig", self.original), ("edit", self.edited)):
            arrays[f"words_{tag}"] = np.array(prompt.words, dtype=np.str_)
            arrays[f"spans_{tag}"] = np.array(prompt.word_spans, dtype=np.int64)
            arrays[f"tokens_{tag}"] = np.array(prompt.token_ids, dtype=np.int64)
            arrays[f"text_{tag}"] = np.array(prompt.text, dtype=np.str_)
        arrays["catalog"] = np.array(
            [(l.layer_id, l.height, l.width, l.heads) for l in self.catalog.values()],
            dtype=np.int64,
        )
        arrays["steps"] = np.array([self.steps], dtype=np.int64)
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path: Path) -> "AttnRecord":
        with np.load(path, allow_pickle=False) as data:
            prompts = {}
            for tag in ("orig", "edit"):
                prompts[tag] = TokenizedPrompt(
                    text=str(data[f"text_{tag}"]),
                    words=tuple(str(w) for w in data[f"words_{tag}"]),
                    token_ids=tuple(int(i) for i in data[f"tokens_{tag}"]),
                    word_spans=tuple(
                        (int(a), int(b)) for a, b in data[f"spans_{tag}"]
                    ),
                )
            catalog = {
                int(lid): LayerInfo(int(lid), int(h), int(w), int(heads))
                for lid, h, w, heads in data["catalog"]
            }
            record = cls(
                prompts["orig"], prompts["edit"], catalog, int(data["steps"][0])
            )
            for key in data.files:
                if key.startswith("map_"):
                    t, lid, b = _parse_key(key)
                    record._maps[(t, lid, b)] = data[key]
                elif key.startswith("feat_"):
                    t, lid, b = _parse_key(key)
                    record._features[(t, lid, b)] = data[key]
        return record


def _parse_key(key: str) -> Tuple[int, int, int]:
    _, t_part, l_part, b_part = key.split("_")
    return int(t_part[1:]), int(l_part[1:]), int(b_part[1:])
