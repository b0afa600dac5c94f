"""Cumulative noise schedules and the closed-form convergence constants.

The schedule stores the cumulative signal-retention values ``alphabar[0..T]``
directly (DDIM convention); per-step betas are never exposed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, InitVar
from typing import Sequence

import numpy as np

DEFAULT_T = 50
DEFAULT_START = 0.9999
DEFAULT_END = 0.0047


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative schedule ``alphabar[0] > alphabar[1] > ... > alphabar[T] > 0``.

    ``eta`` is fixed at zero: every sampler built on top of this is the
    deterministic DDIM variant.
    """

    alphabar: np.ndarray
    eta: float = field(default=0.0)
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        values = np.asarray(self.alphabar, dtype=np.float64).copy()
        values.setflags(write=False)
        object.__setattr__(self, "alphabar", values)
        if not validate:
            return
        if values.ndim != 1 or values.size < 3:
            raise ValueError("schedule needs at least 3 alphabar values (T >= 2)")
        if not np.all(np.isfinite(values)):
            raise ValueError("alphabar values must be finite")
        if np.any(values <= 0.0) or np.any(values > 1.0):
            raise ValueError("alphabar values must lie in (0, 1]")
        if np.any(np.diff(values) >= 0.0):
            raise ValueError("alphabar must be strictly decreasing")
        if self.eta != 0.0:
            raise ValueError("only the deterministic eta = 0 sampler is supported")

    @property
    def T(self) -> int:
        return self.alphabar.size - 1

    def __getitem__(self, t: int) -> float:
        return float(self.alphabar[t])

    def to_json(self) -> str:
        return json.dumps({"alphabar": [float(v) for v in self.alphabar]})

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        payload = json.loads(text)
        if "alphabar" not in payload:
            raise ValueError('schedule JSON needs an "alphabar" array')
        return from_alphabars(payload["alphabar"])


def linear_schedule(T: int = DEFAULT_T, ab_start: float = DEFAULT_START,
                    ab_end: float = DEFAULT_END) -> NoiseSchedule:
    """Log-linear (geometric) interpolation of alphabar between two endpoints."""
    if int(T) != T or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T!r}")
    if not (1.0 > ab_start > ab_end > 0.0):
        raise ValueError(
            f"need 1 > ab_start > ab_end > 0, got ab_start={ab_start}, ab_end={ab_end}")
    frac = np.arange(T + 1, dtype=np.float64) / T
    values = np.exp(math.log(ab_start) + frac * (math.log(ab_end) - math.log(ab_start)))
    values[0], values[-1] = ab_start, ab_end
    return NoiseSchedule(values)


def anchored_schedule(T: int = DEFAULT_T, ab0: float = 0.9999, ab1: float = 0.9995,
                      ab_end: float = DEFAULT_END) -> NoiseSchedule:
    """Pin the first two entries, then interpolate geometrically down to ``ab_end``.

    Useful when ``alphabar[0]`` and ``alphabar[1]`` must match a backbone's
    values (0.9999 / 0.9995 for a 50-step Stable Diffusion schedule).
    """
    if int(T) != T or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T!r}")
    if not (1.0 > ab0 > ab1 > ab_end > 0.0):
        raise ValueError("need 1 > ab0 > ab1 > ab_end > 0")
    tail = linear_schedule(T - 1, ab1, ab_end).alphabar if T > 2 else np.array([ab1, ab_end])
    return NoiseSchedule(np.concatenate([[ab0], tail]))


def from_alphabars(values: Sequence[float]) -> NoiseSchedule:
    """Wrap an explicit alphabar sequence verbatim; ``T = len(values) - 1``."""
    return NoiseSchedule(np.asarray(list(values), dtype=np.float64))


def lambda_coefficient(s: NoiseSchedule) -> float:
    """|lambda| = |sqrt(a0 - a0 a1) - sqrt(a1 - a0 a1)| / sqrt(a1)."""
    a0, a1 = s[0], s[1]
    return abs(math.sqrt(a0 - a0 * a1) - math.sqrt(a1 - a0 * a1)) / math.sqrt(a1)


def _single_step_bound(s: NoiseSchedule, C1: float, C2: float) -> float:
    return (1.0 / math.sqrt(s[0]) - 1.0) * C1 + lambda_coefficient(s) * C2


def _require_contracting(s: NoiseSchedule) -> None:
    if not s[0] < 1.0:
        raise ValueError("alphabar[0] must be < 1 for the geometric bounds to exist")


def convergence_steps(s: NoiseSchedule, C1: float, C2: float, delta: float) -> int:
    """Smallest integer n with n > (2 / log a0) * (log delta - C).

    Returns 1 when the bound is non-positive (any step already satisfies it).
    """
    if C1 <= 0 or C2 < 0 or delta <= 0:
        raise ValueError("need C1 > 0, C2 >= 0 and delta > 0")
    _require_contracting(s)
    C = math.log(_single_step_bound(s, C1, C2))
    bound = 2.0 / math.log(s[0]) * (math.log(delta) - C)
    if bound <= 0:
        return 1
    return math.floor(bound) + 1


def drift_bound(s: NoiseSchedule, C1: float, C2: float) -> float:
    """kappa = [(1/sqrt(a0) - 1) C1 + lambda C2] / (1 - sqrt(a0))."""
    if C1 < 0 or C2 < 0:
        raise ValueError("C1 and C2 must be non-negative")
    _require_contracting(s)
    return _single_step_bound(s, C1, C2) / (1.0 - math.sqrt(s[0]))


def schedule_from_spec(spec: dict) -> NoiseSchedule:
    """Build a schedule from a config mapping.

    Accepted forms: ``{"alphabar": [...]}``, ``{"kind": "linear", "T", "start", "end"}``
    and ``{"kind": "anchored", "T", "alphabar0", "alphabar1", "end"}``.
    """
    if "alphabar" in spec:
        return from_alphabars(spec["alphabar"])
    kind = spec.get("kind", "linear")
    if kind == "linear":
        return linear_schedule(int(spec.get("T", DEFAULT_T)), float(spec.get("start", DEFAULT_START)),
                               float(spec.get("end", DEFAULT_END)))
    if kind == "anchored":
        return anchored_schedule(int(spec.get("T", DEFAULT_T)), float(spec.get("alphabar0", 0.9999)),
                                 float(spec.get("alphabar1", 0.9995)), float(spec.get("end", DEFAULT_END)))
    raise ValueError(f"unknown schedule kind {kind!r}")
