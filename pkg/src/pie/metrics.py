"""Evaluation metrics and the two comparison baselines.

* confidence: Bayes posterior in latent worlds, logistic regression on images
* similarity: cosine of mean-centred flattened states (fidelity to the source)
* mmd_poly: unbiased squared MMD with the cubic polynomial kernel (KID)
* extrapolation / interpolation walk baselines
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .core import Trajectory, blend, similarity_to, _record
from .ddim import denoise_from, invert
from .oracle import Denoiser, responsibilities_at
from .schedule import NoiseSchedule
from .synthdata import Dataset, LatentWorld, sample_latent


def bayes_confidence(w: LatentWorld, x: np.ndarray, disease_class: int | str) -> float:
    """Posterior probability of ``disease_class`` under the data-time class densities."""
    return float(responsibilities_at(w, x, 1.0)[w.class_index(disease_class)])


@dataclass
class LinearClassifier:
    weight: np.ndarray
    bias: float
    heldout_accuracy: float = float("nan")

    def logit(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        flat = x.reshape(-1, self.weight.size) if x.size != self.weight.size else x.reshape(1, -1)
        return flat @ self.weight + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return expit(self.logit(x))

    def confidence(self, x: np.ndarray) -> float:
        return float(self.predict_proba(x)[0])


def confidence(c: LinearClassifier, x: np.ndarray) -> float:
    return c.confidence(x)


def _fit_logistic(X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    n, p = X.shape
    sign = 2.0 * y - 1.0

    def objective(params):
        w, b = params[:p], params[p]
        z = sign * (X @ w + b)
        loss = np.mean(np.logaddexp(0.0, -z)) + 0.5 * l2 * (w @ w)
        g = -sign * expit(-z) / n
        return loss, np.concatenate([X.T @ g + l2 * w, [g.sum()]])

    res = minimize(objective, np.zeros(p + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "gtol": 1e-8})
    return res.x[:p], float(res.x[p])


def train_classifier(dataset: Dataset, seed: int = 0, holdout: float = 0.2,
                     l2: float = 1e-3) -> LinearClassifier:
    """L2-regularised logistic regression on flattened images.

    A seeded shuffle reserves ``holdout`` of the data for the reported
    held-out accuracy; the final weights are refit on everything.
    """
    y = np.asarray(dataset.labels, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    X = dataset.flat()
    order = np.random.default_rng(seed).permutation(len(y))
    n_hold = int(round(holdout * len(y)))
    test, train = order[:n_hold], order[n_hold:]
    acc = float("nan")
    if n_hold and len(np.unique(y[train])) == 2:
        w, b = _fit_logistic(X[train], y[train], l2)
        acc = float(np.mean(((X[test] @ w + b) > 0) == (y[test] > 0.5)))
    w, b = _fit_logistic(X, y, l2)
    return LinearClassifier(weight=w, bias=b, heldout_accuracy=acc)


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of the mean-centred flattened states."""
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    a, b = a - a.mean(), b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("similarity is undefined for a constant (zero after centring) state")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _poly_kernel(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return (X @ Y.T / X.shape[1] + 1.0) ** 3


def mmd_poly(A: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> float:
    """Unbiased squared MMD with k(x, y) = (x.y / d + 1)^3."""
    X = np.stack([np.ravel(a) for a in A]).astype(np.float64)
    Y = np.stack([np.ravel(b) for b in B]).astype(np.float64)
    m, n = len(X), len(Y)
    if m < 2 or n < 2:
        raise ValueError("mmd_poly needs at least two samples per set")
    Kxx, Kyy, Kxy = _poly_kernel(X, X), _poly_kernel(Y, Y), _poly_kernel(X, Y)
    xx = (Kxx.sum() - np.trace(Kxx)) / (m * (m - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (n * (n - 1))
    return float(xx + yy - 2.0 * Kxy.mean())


def mmd_bootstrap_se(A, B, n_boot: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of :func:`mmd_poly`."""
    rng = np.random.default_rng(seed)
    A, B = np.asarray(A), np.asarray(B)
    reps = [mmd_poly(A[rng.integers(0, len(A), len(A))], B[rng.integers(0, len(B), len(B))])
            for _ in range(n_boot)]
    return float(np.std(reps, ddof=1))


def extrapolation_step(x: np.ndarray, pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                       weights: Sequence[float] | float, x_base: Optional[np.ndarray] = None,
                       m: Optional[np.ndarray] = None, beta1: float = 1.0,
                       beta2: float = 1.0) -> np.ndarray:
    """x + mean_i w_i (b_i - a_i), then ROI-blended against ``x_base`` if one is given.

    The latent inverse of the generator is the identity here: states already
    live in the latent space.
    """
    if len(pairs) == 0:
        raise ValueError("extrapolation needs at least one direction pair")
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), (len(pairs),))
    if np.any(w <= 0):
        raise ValueError("extrapolation weights must be positive")
    x = np.asarray(x, dtype=np.float64)
    delta = sum(wi * (np.asarray(b) - np.asarray(a)) for wi, (a, b) in zip(w, pairs)) / len(pairs)
    out = x + delta
    if x_base is not None:
        out = blend(out, x_base, m, beta1, beta2)
    return out


def sample_direction_pairs(source: LatentWorld | Dataset, y_from, y_to, count: int,
                           rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random (source-class, target-class) member pairs defining extrapolation directions."""
    if isinstance(source, LatentWorld):
        return [(sample_latent(source, y_from, rng), sample_latent(source, y_to, rng))
                for _ in range(count)]
    idx_from = np.flatnonzero(source.labels == y_from)
    idx_to = np.flatnonzero(source.labels == y_to)
    a = rng.choice(idx_from, size=count)
    b = rng.choice(idx_to, size=count)
    return [(source.images[i], source.images[j]) for i, j in zip(a, b)]


def run_extrapolation(x0: np.ndarray, pairs, steps: int, m: Optional[np.ndarray] = None,
                      beta1: float = 1.0, beta2: float = 1.0, score=None,
                      weight: Optional[float] = None) -> Trajectory:
    """``steps`` extrapolation updates with per-step stage weight ``weight``.

    The default weight 1/steps makes the whole walk cover one class-to-class
    span, matching the displacement budget of the other methods; weight 1
    moves a full span per step and overshoots the target class.
    """
    x0 = np.asarray(x0, dtype=np.float64).copy()
    sim = similarity_to(x0)
    states, records = [x0], [_record(x0, None, score, sim)]
    weight = 1.0 / max(steps, 1) if weight is None else weight
    for _ in range(steps):
        x = extrapolation_step(states[-1], pairs, weight, x0, m, beta1, beta2)
        records.append(_record(x, states[-1], score, sim))
        states.append(x)
    return Trajectory(states=states, records=records,
                      config={"method": "extrapolation", "steps": steps, "pairs": len(pairs)})


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    fa, fb = np.ravel(a), np.ravel(b)
    cos = fa @ fb / (np.linalg.norm(fa) * np.linalg.norm(fb))
    theta = np.arccos(np.clip(cos, -1.0, 1.0))
    if np.sin(theta) < 1e-8:
        return (1.0 - t) * a + t * b
    return (np.sin((1.0 - t) * theta) * a + np.sin(t * theta) * b) / np.sin(theta)


def interpolation_walk(x_start: np.ndarray, y, d: Denoiser, s: NoiseSchedule, steps: int,
                       seed: int | np.random.Generator, m: Optional[np.ndarray] = None,
                       beta1: float = 1.0, beta2: float = 1.0, score=None,
                       y_invert=None) -> Trajectory:
    """Latent-interpolation walk from the inverted source noise to a fresh draw.

    The start is inverted under ``y_invert`` (default: the target ``y``).
    Waypoint ``j`` of ``steps`` sits at slerp parameter ``j / (steps - 1)``
    (0 when ``steps == 1``); each is denoised under ``y`` and ROI-blended
    against the start.  ``states[0]`` is the start itself.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x_start = np.asarray(x_start, dtype=np.float64).copy()
    x_T = invert(x_start, s.T, d, y if y_invert is None else y_invert, s)
    target = rng.standard_normal(x_start.shape)
    sim = similarity_to(x_start)
    states, records = [x_start], [_record(x_start, None, score, sim)]
    for u in np.linspace(0.0, 1.0, steps) if steps > 1 else [0.0]:
        x = denoise_from(slerp(x_T, target, float(u)), s.T, d, y, s)
        x = blend(x, x_start, m, beta1, beta2)
        records.append(_record(x, states[-1], score, sim))
        states.append(x)
    return Trajectory(states=states, records=records,
                      config={"method": "interpolation", "steps": steps})
