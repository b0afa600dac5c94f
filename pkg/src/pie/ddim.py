"""Deterministic DDIM: forward noising, reverse steps, denoising loops, inversion."""

from __future__ import annotations

import numpy as np

from .oracle import Denoiser
from .schedule import NoiseSchedule

REFINE_ITERS = 10
REFINE_TOL = 1e-10


def _check_step(t: int, s: NoiseSchedule, lo: int = 0) -> None:
    if not lo <= t <= s.T:
        raise ValueError(f"step {t} outside [{lo}, {s.T}]")


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    x0, eps = np.asarray(x0, dtype=np.float64), np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {eps.shape}")
    _check_step(t, s)
    ab = s[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def reverse_step(x_t: np.ndarray, t: int, eps_hat: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """One sigma = 0 DDIM step from level ``t`` to ``t - 1``."""
    x_t, eps_hat = np.asarray(x_t, dtype=np.float64), np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: {x_t.shape} vs {eps_hat.shape}")
    _check_step(t, s, lo=1)
    ab_t, ab_prev = s[t], s[t - 1]
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat


def inverse_step(x_prev: np.ndarray, t: int, eps_hat: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Solve ``reverse_step(x_t, t, eps_hat) = x_prev`` for ``x_t`` at fixed ``eps_hat``."""
    _check_step(t, s, lo=1)
    ab_t, ab_prev = s[t], s[t - 1]
    if ab_prev <= 0:
        raise ValueError("degenerate schedule: alphabar must be positive")
    x0_hat = (x_prev - np.sqrt(1.0 - ab_prev) * eps_hat) / np.sqrt(ab_prev)
    return np.sqrt(ab_t) * x0_hat + np.sqrt(1.0 - ab_t) * eps_hat


def denoise_from(x_k: np.ndarray, k: int, d: Denoiser, y, s: NoiseSchedule) -> np.ndarray:
    """Run reverse steps ``t = k .. 1``; ``k = 0`` is the identity."""
    _check_step(k, s)
    x = np.asarray(x_k, dtype=np.float64)
    for t in range(k, 0, -1):
        x = reverse_step(x, t, d.epsilon(x, t, y), s)
    return x


def invert(x0: np.ndarray, k: int, d: Denoiser, y, s: NoiseSchedule,
           refine: bool = False, refine_iters: int = REFINE_ITERS,
           refine_tol: float = REFINE_TOL) -> np.ndarray:
    """DDIM inversion up to level ``k``.

    The naive recurrence evaluates the noise prediction at the previous
    (less noisy) state.  With ``refine`` the evaluation point is iterated
    towards the new state until successive iterates move less than
    ``refine_tol`` (at most ``refine_iters`` rounds), which makes the
    inversion an exact inverse of :func:`denoise_from` when it converges.
    """
    _check_step(k, s)
    x = np.asarray(x0, dtype=np.float64)
    for t in range(1, k + 1):
        x_next = inverse_step(x, t, d.epsilon(x, t, y), s)
        if refine:
            for _ in range(refine_iters):
                candidate = inverse_step(x, t, d.epsilon(x_next, t, y), s)
                moved = np.max(np.abs(candidate - x_next))
                x_next = candidate
                if moved < refine_tol:
                    break
        x = x_next
    return x


def sample(d: Denoiser, y, s: NoiseSchedule, seed: int | np.random.Generator,
           shape: tuple[int, ...]) -> np.ndarray:
    """Draw ``x_T ~ N(0, I)`` and denoise it all the way down under condition ``y``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return denoise_from(rng.standard_normal(shape), s.T, d, y, s)
