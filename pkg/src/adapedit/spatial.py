"""Dynamic pixel-level spatial weighting.

Every word of the edited prompt shares one per-pixel scale vector: the
clamped, scaled cosine similarity between the pooled key-word embedding
and each pixel's visual feature.  The scale steers an interpolation
between the original and edited attention maps, with a global weight
controlling overall edit amplitude.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, RangeError
from .tensorops import l2_normalize_rows, matmul, resize_bilinear

AGG_SIDE = 32


def spatial_scales(
    key_embedding: np.ndarray, visual_features: np.ndarray, lambda_sv: float
) -> np.ndarray:
    """Per-pixel similarity to the key embedding, scaled and clamped to [0, 1]."""
    if lambda_sv < 0:
        raise ConfigError(f"lambda_sv must be >= 0, got {lambda_sv}")
    key = np.asarray(key_embedding, dtype=np.float32)
    feats = l2_normalize_rows(visual_features)
    sims = matmul(key[None, :], feats.T)[0]
    return np.clip(np.float32(lambda_sv) * sims, 0.0, 1.0)


def resample_scales(scales: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resample of the 32x32 scale vector to another layer grid."""
    scales = np.asarray(scales, dtype=np.float32)
    if scales.ndim != 1:
        raise DimensionError(f"scale vector must be 1-D, got shape {scales.shape}")
    side = int(round(scales.size ** 0.5))
    if side * side != scales.size:
        raise DimensionError(f"scale vector length {scales.size} is not square")
    if side == height and side == width:
        return scales
    grid = scales.reshape(side, side)
    return resize_bilinear(grid, height, width).reshape(-1)


def blend_attention_maps(
    m_original: np.ndarray,
    m_edited: np.ndarray,
    scales,
    lambda_s: float,
) -> np.ndarray:
    """Interpolate two token-by-pixel maps under per-pixel scales.

    ``lambda_s * (S*edited + (1-S)*original) + (1-lambda_s) * original``,
    with ``scales`` broadcast across token rows.  At ``lambda_s == 0``
    the original map is returned bit-exactly; at ``lambda_s == 1`` with
    all scales 1, the edited map is.
    """
    a = np.asarray(m_original, dtype=np.float32)
    b = np.asarray(m_edited, dtype=np.float32)
    if a.shape != b.shape:
        raise DimensionError(f"map shapes differ: {a.shape} vs {b.shape}")
    if not 0.0 <= lambda_s <= 1.0:
        raise RangeError(f"lambda_s must lie in [0, 1], got {lambda_s}")
    s = np.asarray(scales, dtype=np.float32)
    if s.ndim == 1:
        if s.size != a.shape[-1]:
            raise DimensionError(
                f"scale vector length {s.size} != pixel count {a.shape[-1]}"
            )
        s = s[None, :]
    else:
        try:
            np.broadcast_shapes(s.shape, a.shape)
        except ValueError as exc:
            raise DimensionError(str(exc)) from None
    ls = np.float32(lambda_s)
    one = np.float32(1.0)
    return (ls * (s * b + (one - s) * a) + (one - ls) * a).astype(np.float32)


def blend_divergence(
    m_original: np.ndarray, m_edited: np.ndarray, scales, lambda_s: float
) -> float:
    """Frobenius norm of the blend's deviation from the original map.

    Algebraically ``||C - M|| = lambda_s * ||S * (edited - original)||``;
    computing the factored form in float64 keeps the reported metric
    exactly linear in ``lambda_s``.
    """
    a = np.asarray(m_original, dtype=np.float64)
    b = np.asarray(m_edited, dtype=np.float64)
    s = np.asarray(scales, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    return float(lambda_s) * float(np.linalg.norm(s * (b - a)))
