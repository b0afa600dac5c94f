"""Progressive image editing: the single masked edit step and its recursion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from .ddim import denoise_from, forward_noise
from .oracle import Denoiser
from .schedule import NoiseSchedule

NOISE_MODES = ("fresh", "fixed-seed", "zero")

Score = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class PieConfig:
    gamma: float = 0.5
    N: int = 10
    beta1: float = 0.1
    beta2: float = 0.75
    noise_mode: str = "fresh"

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")

    def k(self, T: int) -> int:
        """Noise level gamma * T, rounded half-up and clamped to [0, T]."""
        return min(max(int(math.floor(self.gamma * T + 0.5)), 0), T)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """States ``x^(0) .. x^(N)`` plus per-step diagnostics.

    ``records[n]`` describes state ``n``.  ``eps_norms`` holds the norms of
    the denoiser outputs the run evaluated, when the producer records them.
    """

    states: list[np.ndarray]
    records: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    eps_norms: list[float] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.states) - 1

    def array(self) -> np.ndarray:
        return np.stack([np.ravel(s) for s in self.states])


def as_mask(m: Optional[np.ndarray], shape: tuple[int, ...]) -> np.ndarray:
    """``None`` means the whole state is region of interest."""
    if m is None:
        return np.ones(shape)
    m = np.asarray(m, dtype=np.float64)
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} does not match state shape {shape}")
    if np.any(m < 0.0) or np.any(m > 1.0):
        raise ValueError("mask weights must lie in [0, 1]")
    return m


def blend(x_edit: np.ndarray, x_base: np.ndarray, m: Optional[np.ndarray],
          beta1: float, beta2: float) -> np.ndarray:
    """Move ``beta1`` of the edit outside the ROI and ``beta2`` of it inside."""
    x_edit, x_base = np.asarray(x_edit, dtype=np.float64), np.asarray(x_base, dtype=np.float64)
    if x_edit.shape != x_base.shape:
        raise ValueError(f"shape mismatch: {x_edit.shape} vs {x_base.shape}")
    m = as_mask(m, x_base.shape)
    # x_base + w (x_edit - x_base) with w = beta1 (1 - m) + beta2 m; the endpoints
    # w = 0 and w = 1 return the inputs bit for bit
    w = beta1 * (1.0 - m) + beta2 * m
    return np.where(w == 1.0, x_edit, x_base + w * (x_edit - x_base))


def _draw_noise(shape, c: PieConfig, rng: np.random.Generator, fixed: Optional[np.ndarray]) -> np.ndarray:
    if c.noise_mode == "zero":
        return np.zeros(shape)
    if c.noise_mode == "fixed-seed":
        if fixed is None:
            raise ValueError("fixed-seed noise mode needs the fixed draw")
        return fixed
    return rng.standard_normal(shape)


def pie_step(x_prev: np.ndarray, x_base: np.ndarray, y, m: Optional[np.ndarray], c: PieConfig,
             d: Denoiser, s: NoiseSchedule, rng: np.random.Generator,
             fixed_noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Noise to level k, denoise under ``y``, blend against the original ``x_base``."""
    x_prev = np.asarray(x_prev, dtype=np.float64)
    k = c.k(s.T)
    eps = _draw_noise(x_prev.shape, c, rng, fixed_noise)
    # k = 0 is "no edit": the state is not re-noised to the level-0 scaling
    x = denoise_from(forward_noise(x_prev, k, eps, s), k, d, y, s) if k > 0 else x_prev
    return blend(x, x_base, m, c.beta1, c.beta2)


def similarity_to(x0: np.ndarray) -> Callable[[np.ndarray], float]:
    from .metrics import similarity

    return lambda x: similarity(x, x0)


def _record(x: np.ndarray, prev: Optional[np.ndarray], score: Optional[Score],
            sim: Callable[[np.ndarray], float]) -> dict:
    rec = {"step_diff_norm": 0.0 if prev is None else float(np.linalg.norm(np.ravel(x - prev)))}
    rec["conf"] = float(score(x)) if score is not None else float("nan")
    try:
        rec["similarity"] = sim(x)
    except ValueError:
        rec["similarity"] = float("nan")
    return rec


def run_progression(x0: np.ndarray, y, m: Optional[np.ndarray], c: PieConfig, d: Denoiser,
                    s: NoiseSchedule, seed: int | np.random.Generator,
                    score: Optional[Score] = None) -> Trajectory:
    """Apply :func:`pie_step` ``c.N`` times, every blend anchored to ``x0``.

    ``score`` (e.g. a class confidence) is recorded for every state.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=np.float64).copy()
    fixed = rng.standard_normal(x0.shape) if c.noise_mode == "fixed-seed" else None
    sim = similarity_to(x0)
    states = [x0]
    records = [_record(x0, None, score, sim)]
    for _ in range(c.N):
        x = pie_step(states[-1], x0, y, m, c, d, s, rng, fixed)
        records.append(_record(x, states[-1], score, sim))
        states.append(x)
    return Trajectory(states=states, records=records, config=c.to_dict(),
                      seed=seed if isinstance(seed, (int, np.integer)) else None)


def diff_heatmap(traj: Trajectory, n: int) -> np.ndarray:
    """Per-cell ``|x^(n) - x^(0)|``."""
    if not 0 <= n <= traj.N:
        raise IndexError(f"step {n} outside [0, {traj.N}]")
    return np.abs(traj.states[n] - traj.states[0])
