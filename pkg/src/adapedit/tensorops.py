"""Dense-matrix kernels used throughout the attention-editing pipeline.

Matrices are plain 2-D ``numpy.ndarray`` objects stored as float32.
Reductions (softmax denominators, matrix-product accumulation, norms)
run in float64 before the result is cast back to float32, so row-sum
and unit-norm invariants stay tight at inference precision.

All functions are pure: they never modify their inputs and identical
inputs produce bit-identical outputs.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, RangeError

DEFAULT_MASK_THRESHOLD = 0.03


def as_matrix(x, allow_empty: bool = True) -> np.ndarray:
    """Coerce ``x`` to a 2-D float32 C-contiguous array.

    Raises DimensionError if ``x`` is not 2-D, or if it is empty and
    ``allow_empty`` is false.
    """
    m = np.ascontiguousarray(x, dtype=np.float32)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if not allow_empty and m.size == 0:
        raise DimensionError(f"operation undefined on empty matrix {m.shape}")
    return m


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow stability."""
    m = as_matrix(m, allow_empty=False)
    x = m.astype(np.float64)
    x -= x.max(axis=1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=1, keepdims=True)
    return x.astype(np.float32)


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row to unit Euclidean norm; all-zero rows pass through.

    Zero rows occur legitimately after threshold masking, so they are a
    documented degenerate case rather than an error.
    """
    m = as_matrix(m)
    norms = np.sqrt((m.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    safe = np.where(norms == 0.0, 1.0, norms)
    return (m / safe).astype(np.float32)


def matmul(a, b) -> np.ndarray:
    """Matrix product with float64 accumulation, returned as float32."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"inner dimensions differ: {a.shape} x {b.shape}"
        )
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def mask_below(m, threshold: float = DEFAULT_MASK_THRESHOLD) -> np.ndarray:
    """Zero out entries strictly below ``threshold``; idempotent.

    Entries exactly equal to the threshold survive.
    """
    if not 0.0 <= threshold < 1.0:
        raise RangeError(f"mask threshold must lie in [0, 1), got {threshold}")
    m = as_matrix(m)
    out = m.copy()
    out[out < np.float32(threshold)] = 0.0
    return out


def lerp(a, b, w) -> np.ndarray:
    """Entrywise interpolation ``w*b + (1-w)*a`` with ``w`` in [0, 1].

    ``w`` may be a scalar or an array broadcastable against ``a``.
    At ``w == 0`` the result equals ``a`` bit-exactly, at ``w == 1`` it
    equals ``b`` bit-exactly.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    w = np.asarray(w, dtype=np.float32)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise RangeError("interpolation weight must lie in [0, 1]")
    try:
        np.broadcast_shapes(w.shape, a.shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return (w * b + (np.float32(1.0) - w) * a).astype(np.float32)


def renormalize_rows(m) -> np.ndarray:
    """Rescale each row to sum 1; all-zero rows pass through unchanged."""
    m = as_matrix(m)
    sums = m.astype(np.float64).sum(axis=1, keepdims=True)
    safe = np.where(sums == 0.0, 1.0, sums)
    return (m / safe).astype(np.float32)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a 2-D array onto an ``out_h x out_w`` grid.

    Corner-aligned sampling: the four corners map exactly, interpolation
    weights at every output point are convex (sum to 1), so a constant
    input yields the same constant output.
    """
    img = as_matrix(img, allow_empty=False)
    h, w = img.shape
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"invalid target size {out_h}x{out_w}")
    src = img.astype(np.float64)

    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return out.astype(np.float32)
