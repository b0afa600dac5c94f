"""Closed-form conditional noise predictors for labeled Gaussian worlds.

For data ``x0 ~ N(mu_y, var I)`` the marginal at step ``t`` is
``N(sqrt(ab) mu_y, (ab var + 1 - ab) I)`` and the MMSE noise prediction is

    eps*(x, t, y) = sqrt(1 - ab) (x - sqrt(ab) mu_y) / (ab var + 1 - ab),

which is affine in ``x``.  That affinity is what makes the PIE iteration
exactly analysable downstream.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule
from .synthdata import LatentWorld


class Denoiser(Protocol):
    def epsilon(self, x: np.ndarray, t: int, y: int | None) -> np.ndarray: ...


def _eps_affine(ab: float, var: float) -> float:
    """Slope of eps* in x at cumulative level ``ab``."""
    return np.sqrt(1.0 - ab) / (ab * var + 1.0 - ab)


def responsibilities_at(w: LatentWorld, x: np.ndarray, ab: float) -> np.ndarray:
    """Class posteriors of ``x`` under the level-``ab`` marginals (ab = 1 is data time)."""
    x = np.ravel(np.asarray(x, dtype=np.float64))
    if x.size != w.dim:
        raise ValueError(f"expected a state of dimension {w.dim}, got {x.size}")
    spread = ab * w.var + 1.0 - ab
    sq = np.sum((x[None, :] - np.sqrt(ab) * w.means) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        logits = np.log(w.priors) - 0.5 * sq / spread
    return np.exp(logits - logsumexp(logits))


class GaussianWorldOracle:
    """Bayes-optimal epsilon predictor for a :class:`LatentWorld` under a schedule."""

    def __init__(self, world: LatentWorld, schedule: NoiseSchedule):
        if world.n_classes < 2:
            raise ValueError("a world needs at least two classes")
        self.world = world
        self.schedule = schedule

    @property
    def dim(self) -> int:
        return self.world.dim

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.world.dim:
            raise ValueError(f"expected a state of dimension {self.world.dim}, got shape {x.shape}")
        return x

    def affine_coefficients(self, t: int, y: int | str) -> tuple[float, np.ndarray]:
        """``(slope, offset)`` with eps*(x, t, y) = slope * x + offset."""
        ab = self.schedule[t]
        slope = _eps_affine(ab, self.world.var)
        mu = self.world.means[self.world.class_index(y)]
        return slope, -slope * np.sqrt(ab) * mu

    def epsilon_gaussian(self, x: np.ndarray, t: int, y: int | str) -> np.ndarray:
        x = self._check(x)
        ab = self.schedule[t]
        mu = self.world.means[self.world.class_index(y)].reshape(x.shape)
        return np.sqrt(1.0 - ab) * (x - np.sqrt(ab) * mu) / (ab * self.world.var + 1.0 - ab)

    def posterior_responsibilities(self, x: np.ndarray, t: int) -> np.ndarray:
        return responsibilities_at(self.world, self._check(x), self.schedule[t])

    def epsilon_gmm(self, x: np.ndarray, t: int, y: int | str | None = None) -> np.ndarray:
        """Mixture-marginal predictor; with ``y`` given it is exactly ``epsilon_gaussian``."""
        if y is not None:
            return self.epsilon_gaussian(x, t, y)
        x = self._check(x)
        r = self.posterior_responsibilities(x, t)
        out = np.zeros_like(x)
        for c, rc in enumerate(r):
            out += rc * self.epsilon_gaussian(x, t, c)
        return out

    def epsilon(self, x: np.ndarray, t: int, y: int | str | None) -> np.ndarray:
        return self.epsilon_gmm(x, t, y)


def predict_x0(x_t: np.ndarray, t: int, eps_hat: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Invert the forward noising for ``x0`` given a noise estimate."""
    ab = s[t]
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
