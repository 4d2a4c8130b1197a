"""Deterministic latent-diffusion sampler primitives.

The noise schedule is the cumulative signal fraction ``alpha_bar``
indexed by step: ``alpha_bar[0] == 1`` (clean) and values strictly
decrease towards step T.  Reverse steps are deterministic: predict the
clean latent from the noise estimate, then re-noise it to the previous
step's level with the same estimate.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import RangeError


def linear_alpha_bar_schedule(steps: int) -> np.ndarray:
    """``alpha_bar[t] = 1 - t/(steps+1)`` for t = 0..steps.

    Analytic, strictly decreasing, and never reaches zero, which keeps
    every reverse step well conditioned.
    """
    if steps < 1:
        raise RangeError(f"step count must be >= 1, got {steps}")
    t = np.arange(steps + 1, dtype=np.float64)
    return (1.0 - t / (steps + 1)).astype(np.float32)


def _check_step(schedule: np.ndarray, t: int) -> None:
    if not 1 <= t < len(schedule):
        raise RangeError(
            f"step {t} outside schedule range 1..{len(schedule) - 1}"
        )


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, schedule: np.ndarray) -> np.ndarray:
    """Noise a clean latent to step ``t``:
    ``sqrt(ab_t)*z0 + sqrt(1-ab_t)*eps``."""
    _check_step(schedule, t)
    ab = float(schedule[t])
    if not 0.0 < ab <= 1.0:
        raise RangeError(f"alpha_bar[{t}]={ab} outside (0, 1]")
    z0 = np.asarray(z0, dtype=np.float32)
    eps = np.asarray(eps, dtype=np.float32)
    return (
        np.float32(math.sqrt(ab)) * z0 + np.float32(math.sqrt(1.0 - ab)) * eps
    )


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance mix ``w*eps_cond + (1-w)*eps_uncond``."""
    eps_cond = np.asarray(eps_cond, dtype=np.float32)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float32)
    w32 = np.float32(w)
    return w32 * eps_cond + (np.float32(1.0) - w32) * eps_uncond


def reverse_step(z_t: np.ndarray, noise_pred: np.ndarray, t: int, schedule: np.ndarray) -> np.ndarray:
    """One deterministic denoising step from ``t`` to ``t - 1``.

    With the exact noise used in ``forward_noise`` this inverts it to
    machine precision.
    """
    _check_step(schedule, t)
    ab_t = float(schedule[t])
    ab_prev = float(schedule[t - 1])
    z_t = np.asarray(z_t, dtype=np.float32)
    noise_pred = np.asarray(noise_pred, dtype=np.float32)

    sqrt_ab_t = np.float32(math.sqrt(ab_t))
    sigma_t = np.float32(math.sqrt(1.0 - ab_t))
    z0_pred = (z_t - sigma_t * noise_pred) / sqrt_ab_t
    return (
        np.float32(math.sqrt(ab_prev)) * z0_pred
        + np.float32(math.sqrt(1.0 - ab_prev)) * noise_pred
    )
