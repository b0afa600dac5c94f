"""Convergence diagnostics for the k = 1 editing iteration.

The iteration analysed here is one forward-noise / one reverse-step round trip
at the lowest noise level:

    x1    = sqrt(a1) x + sqrt(1 - a1) eps
    x_new = sqrt(a0) x + sqrt(a0 (1 - a1) / a1) (eps - eps_theta(x1))
            + sqrt(1 - a0) eps_theta(x1)

With zero noise and an affine denoiser this is an affine map
``x -> A x + b``, so decay rates and the fixed point are available in
closed form and every bound can be checked exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .core import NOISE_MODES, Trajectory
from .oracle import Denoiser, GaussianWorldOracle
from .schedule import NoiseSchedule, drift_bound, lambda_coefficient


@dataclass
class BoundReport:
    """Step-difference envelope and total-drift checks for one trajectory.

    ``observed[i]`` is ``||x^(i+1) - x^(i)||`` and ``envelope[i]`` is
    ``sqrt(a0)^i * [(1/sqrt(a0) - 1) C1 + lambda C2]``.  ``violations``
    lists the 1-based step numbers ``n`` whose transition into ``x^(n)``
    exceeded the envelope.
    """

    C1: float
    C2: float
    lam: float
    observed: list[float] = field(default_factory=list)
    envelope: list[float] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)
    drift: Optional[float] = None
    kappa: Optional[float] = None
    drift_ok: Optional[bool] = None

    @property
    def slack(self) -> Optional[float]:
        if self.drift is None or self.kappa is None:
            return None
        return self.kappa - self.drift

    def to_dict(self) -> dict:
        out = asdict(self)
        out["slack"] = self.slack
        out["prop2_violations"] = len(self.violations)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _theory_coefficients(s: NoiseSchedule) -> tuple[float, float, float, float]:
    a0, a1 = s[0], s[1]
    return math.sqrt(a0), math.sqrt(a0 * (1 - a1) / a1), math.sqrt(1 - a0), math.sqrt(a1)


def theory_step(x: np.ndarray, eps: np.ndarray, y, d: Denoiser, s: NoiseSchedule) -> tuple[np.ndarray, np.ndarray]:
    """One k = 1 iteration; returns the new state and the denoiser output used."""
    keep, mix, tail, root_a1 = _theory_coefficients(s)
    x1 = root_a1 * x + math.sqrt(1 - s[1]) * eps
    e_theta = d.epsilon(x1, 1, y)
    return keep * x + mix * (eps - e_theta) + tail * e_theta, e_theta


def theory_iterate(x0: np.ndarray, y, d: Denoiser, s: NoiseSchedule, N: int,
                   noise_mode: str = "zero", seed: int | np.random.Generator = 0) -> Trajectory:
    """Run the k = 1 iteration ``N`` times (no mask, no blend)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if noise_mode not in NOISE_MODES:
        raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.asarray(x0, dtype=np.float64).copy()
    zeros = np.zeros_like(x)
    fixed = rng.standard_normal(x.shape) if noise_mode == "fixed-seed" else None
    states, eps_norms = [x], []
    for _ in range(N):
        if noise_mode == "zero":
            eps = zeros
        elif noise_mode == "fixed-seed":
            eps = fixed
        else:
            eps = rng.standard_normal(x.shape)
        x, e_theta = theory_step(x, eps, y, d, s)
        eps_norms.append(float(np.linalg.norm(e_theta)))
        states.append(x)
    return Trajectory(states=states, config={"method": "theory", "N": N, "noise_mode": noise_mode},
                      seed=seed if isinstance(seed, (int, np.integer)) else None, eps_norms=eps_norms)


def step_differences(traj: Trajectory) -> np.ndarray:
    if traj.N == 0:
        return np.zeros(0)
    return np.linalg.norm(np.diff(traj.array(), axis=0), axis=1)


def measure_constants(traj: Trajectory, margin: float = 0.05) -> tuple[float, float]:
    """C1 = ||x^(0)||, C2 = (1 + margin) * max recorded ||eps_theta||."""
    if traj.N > 0 and not traj.eps_norms:
        raise ValueError("trajectory carries no recorded denoiser evaluations")
    C1 = float(np.linalg.norm(traj.states[0]))
    C2 = (1.0 + margin) * max(traj.eps_norms, default=0.0)
    return C1, float(C2)


def check_prop2(traj: Trajectory, C1: float, C2: float, s: NoiseSchedule) -> BoundReport:
    """Flag steps whose difference exceeds the geometric envelope."""
    lam = lambda_coefficient(s)
    root_a0 = math.sqrt(s[0])
    head = (1.0 / root_a0 - 1.0) * C1 + lam * C2
    observed = step_differences(traj)
    envelope = head * root_a0 ** np.arange(observed.size)
    violations = [int(i) + 1 for i in np.flatnonzero(observed > envelope)]
    return BoundReport(C1=C1, C2=C2, lam=lam, observed=observed.tolist(),
                       envelope=envelope.tolist(), violations=violations)


def check_prop3(traj: Trajectory, C1: float, C2: float, s: NoiseSchedule) -> BoundReport:
    """Compare the total drift ``||x^(N) - x^(0)||`` with the limiting bound kappa."""
    report = BoundReport(C1=C1, C2=C2, lam=lambda_coefficient(s))
    report.drift = float(np.linalg.norm(np.ravel(traj.states[-1] - traj.states[0])))
    report.kappa = drift_bound(s, C1, C2)
    report.drift_ok = report.drift <= report.kappa
    return report


def bound_report(traj: Trajectory, s: NoiseSchedule, C1: Optional[float] = None,
                 C2: Optional[float] = None) -> BoundReport:
    """Both checks in one report, with constants measured from the run when omitted."""
    if C1 is None or C2 is None:
        m1, m2 = measure_constants(traj)
        C1 = m1 if C1 is None else C1
        C2 = m2 if C2 is None else C2
    report = check_prop2(traj, C1, C2, s)
    drift = check_prop3(traj, C1, C2, s)
    report.drift, report.kappa, report.drift_ok = drift.drift, drift.kappa, drift.drift_ok
    return report


def geometric_ratio_fit(diffs: Sequence[float]) -> float:
    """exp of the least-squares slope of log(diffs) against the step index."""
    diffs = np.asarray(diffs, dtype=np.float64)
    idx = np.flatnonzero(diffs > 0)
    if idx.size < 3:
        raise ValueError("need at least 3 non-zero differences to fit a ratio")
    slope = np.polyfit(idx.astype(np.float64), np.log(diffs[idx]), 1)[0]
    return float(np.exp(slope))


def affine_theory_map(o: GaussianWorldOracle, y) -> tuple[float, np.ndarray]:
    """``(A, b)`` with the zero-noise k = 1 iteration equal to ``x -> A x + b``."""
    s = o.schedule
    keep, mix, tail, root_a1 = _theory_coefficients(s)
    slope, offset = o.affine_coefficients(1, y)
    # eps_theta(sqrt(a1) x) = slope * sqrt(a1) x + offset
    coef = tail - mix
    return keep + coef * slope * root_a1, coef * offset


def fixed_point_gaussian(o: GaussianWorldOracle, y) -> np.ndarray:
    """Solve ``x* = A x* + b`` for the zero-noise iteration."""
    A, b = affine_theory_map(o, y)
    if abs(A) >= 1.0:
        raise ValueError(f"affine map is not contracting (|A| = {abs(A)}); no fixed point")
    return b / (1.0 - A)


def noise_floor(traj: Trajectory, s: NoiseSchedule, o: Optional[GaussianWorldOracle] = None,
                y=None, burn_in: Optional[int] = None) -> dict:
    """Empirical vs predicted stationary variance of the fresh-noise iteration.

    Reported only: the accumulated noise keeps a non-vanishing floor even
    though each individual term decays.  Without an oracle the prediction
    uses the bare noise coefficient and the sqrt(a0) decay.
    """
    keep, mix, tail_coef, _ = _theory_coefficients(s)
    rate, gain = keep, mix
    if o is not None:
        rate, _ = affine_theory_map(o, y)
        slope, _ = o.affine_coefficients(1, y)
        gain = mix + (tail_coef - mix) * slope * math.sqrt(1 - s[1])
    X = traj.array()
    burn = burn_in if burn_in is not None else X.shape[0] // 2
    tail = X[burn:]
    if o is not None:
        # the stationary mean is the fixed point; centring on it avoids the
        # downward bias of a temporal mean over a slowly mixing chain
        centred = tail - fixed_point_gaussian(o, y).ravel()
        observed_var = float(np.mean(centred ** 2)) if len(tail) else float("nan")
    else:
        observed_var = float(np.mean(np.var(tail, axis=0, ddof=1))) if len(tail) > 1 else float("nan")
    predicted = gain ** 2 / (1.0 - rate ** 2)
    diffs = step_differences(traj)[burn:]
    return {"observed_var": observed_var, "predicted_var": float(predicted),
            "ratio": observed_var / predicted if predicted > 0 else float("nan"),
            "mean_step_diff": float(np.mean(diffs)) if diffs.size else float("nan")}
