"""PNG writers for images and attention heatmaps."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError


def save_image(array: np.ndarray, path: Path) -> None:
    """Write an (H, W, 3) uint8 array as PNG."""
    array = np.asarray(array)
    if array.ndim != 3 or array.shape[2] != 3:
        raise DimensionError(f"expected (H, W, 3) image, got shape {array.shape}")
    Image.fromarray(array.astype(np.uint8), mode="RGB").save(path, format="PNG")


def quantize_heatmap(values: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Map [0, 1] values to uint8 via round(v * 255).

    With ``normalize`` the map is scaled by its maximum first, which
    keeps zeros at zero and never shrinks any value, so entries at or
    above a mask threshold stay above the threshold's 8-bit image.
    """
    v = np.asarray(values, dtype=np.float64)
    if normalize:
        peak = v.max()
        if peak > 0:
            v = v / peak
    return np.round(np.clip(v, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_heatmap(values: np.ndarray, path: Path, normalize: bool = True) -> None:
    """Write a 2-D array (or flattened square vector) as grayscale PNG."""
    v = np.asarray(values)
    if v.ndim == 1:
        side = int(round(v.size ** 0.5))
        if side * side != v.size:
            raise DimensionError(f"cannot reshape length {v.size} to a square grid")
        v = v.reshape(side, side)
    if v.ndim != 2:
        raise DimensionError(f"expected a 2-D heatmap, got shape {v.shape}")
    Image.fromarray(quantize_heatmap(v, normalize=normalize), mode="L").save(
        path, format="PNG"
    )
