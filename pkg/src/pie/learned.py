"""A small dense epsilon-predictor with hand-written gradients.

Architecture: ``[x_t, time features, one-hot(y)] -> tanh(256) -> tanh(256) -> D``
plus a scalar skip gain on ``x_t`` that is linear in the time features.  The
skip carries the identity-like part of the noise target, which a 256-wide
bottleneck cannot represent for 1024-pixel inputs.

Checkpoints are a flat little-endian file: the 7-byte magic ``PIEMLP1``,
six u32 dims ``(D, H1, H2, F, C, T)``, then float64 weights in the order
W1, b1, W2, b2, W3, b3, Ws, bs (matrices row-major, shaped (fan_in, fan_out)).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

MAGIC = b"PIEMLP1"
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "Ws", "bs")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step


def time_features(t: np.ndarray, T: int, F: int) -> np.ndarray:
    """F/2 sin/cos pairs of ``t/T`` at frequencies geometric between 1 and T."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = F // 2
    freqs = np.geomspace(1.0, float(T), half) if half > 1 else np.ones(1)
    arg = (t[:, None] / T) * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


class MlpDenoiser:
    def __init__(self, D: int, n_classes: int = 2, T: int = 50, hidden: tuple[int, int] = (256, 256),
                 F: int = 16, seed: Optional[int] = 0, zero: bool = False):
        if F % 2:
            raise ValueError("time-feature count F must be even")
        self.D, self.C, self.T, self.F = D, n_classes, T, F
        self.H1, self.H2 = hidden
        fan_in = D + F + n_classes
        shapes = {"W1": (fan_in, self.H1), "b1": (self.H1,), "W2": (self.H1, self.H2), "b2": (self.H2,),
                  "W3": (self.H2, D), "b3": (D,), "Ws": (F,), "bs": (1,)}
        self.params = {k: np.zeros(v) for k, v in shapes.items()}
        if not zero:
            rng = np.random.default_rng(seed)
            self.params["W1"] = rng.standard_normal(shapes["W1"]) / np.sqrt(fan_in)
            # time and class rows at unit scale so they are not drowned by the pixels
            self.params["W1"][D:] *= np.sqrt(fan_in)
            self.params["W2"] = rng.standard_normal(shapes["W2"]) / np.sqrt(self.H1)
            self.params["W3"] = rng.standard_normal(shapes["W3"]) * 0.1 / np.sqrt(self.H2)

    # -- parameter plumbing -------------------------------------------------
    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for k in PARAM_NAMES:
            size = self.params[k].size
            self.params[k] = np.asarray(flat[pos:pos + size], dtype=np.float64).reshape(self.params[k].shape).copy()
            pos += size
        if pos != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    def copy(self) -> "MlpDenoiser":
        other = MlpDenoiser(self.D, self.C, self.T, (self.H1, self.H2), self.F, zero=True)
        other.set_flat(self.get_flat())
        return other

    # -- forward / backward -------------------------------------------------
    def _inputs(self, x: np.ndarray, t, y) -> np.ndarray:
        n = x.shape[0]
        t = np.broadcast_to(np.asarray(t), (n,))
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,))
        if np.any(y < 0) or np.any(y >= self.C):
            raise ValueError(f"condition must be a class index in [0, {self.C})")
        onehot = np.zeros((n, self.C))
        onehot[np.arange(n), y] = 1.0
        return np.concatenate([x, time_features(t, self.T, self.F), onehot], axis=1)

    def _forward(self, z: np.ndarray):
        p = self.params
        h1 = np.tanh(z @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        gain = z[:, self.D:self.D + self.F] @ p["Ws"] + p["bs"]
        return h1, h2, gain, h2 @ p["W3"] + p["b3"] + gain[:, None] * z[:, :self.D]

    def forward(self, x: np.ndarray, t, y) -> np.ndarray:
        """Batch ``(n, D)`` or single ``(D,)`` noise prediction."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.shape[1] != self.D:
            raise ValueError(f"expected inputs of width {self.D}, got {xb.shape[1]}")
        out = self._forward(self._inputs(xb, t, y))[3]
        return out[0] if single else out

    def epsilon(self, x: np.ndarray, t: int, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.D:
            raise ValueError(f"state has {x.size} entries, model expects {self.D}")
        if y is None:
            raise ValueError("the learned denoiser needs a class condition")
        return self.forward(x.ravel(), t, y).reshape(x.shape)

    def loss_and_grad(self, x_t: np.ndarray, t: np.ndarray, eps: np.ndarray, y: np.ndarray):
        """Mean over the batch of ||eps - f(x_t, t, y)||^2 / D and its gradient dict."""
        p = self.params
        n = x_t.shape[0]
        z = self._inputs(x_t, t, y)
        h1, h2, _, out = self._forward(z)
        resid = out - eps
        loss = float(np.sum(resid ** 2) / (n * self.D))
        g_out = 2.0 * resid / (n * self.D)
        grads = {"W3": h2.T @ g_out, "b3": g_out.sum(0)}
        g_gain = np.sum(g_out * z[:, :self.D], axis=1)
        grads["Ws"] = z[:, self.D:self.D + self.F].T @ g_gain
        grads["bs"] = np.array([g_gain.sum()])
        g_a2 = (g_out @ p["W3"].T) * (1.0 - h2 ** 2)
        grads["W2"] = h1.T @ g_a2
        grads["b2"] = g_a2.sum(0)
        g_a1 = (g_a2 @ p["W2"].T) * (1.0 - h1 ** 2)
        grads["W1"] = z.T @ g_a1
        grads["b1"] = g_a1.sum(0)
        return loss, grads

    def flat_grad(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in PARAM_NAMES])

    # -- checkpoints ----------------------------------------------------------
    def to_bytes(self) -> bytes:
        head = MAGIC + struct.pack("<6I", self.D, self.H1, self.H2, self.F, self.C, self.T)
        return head + self.get_flat().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MlpDenoiser":
        if data[:len(MAGIC)] != MAGIC:
            raise ValueError("not a PIEMLP1 checkpoint")
        D, H1, H2, F, C, T = struct.unpack_from("<6I", data, len(MAGIC))
        m = cls(D, C, T, (H1, H2), F, zero=True)
        body = data[len(MAGIC) + 24:]
        expected = m.get_flat().size * 8
        if len(body) != expected:
            raise ValueError(f"checkpoint payload has {len(body)} bytes, expected {expected}")
        m.set_flat(np.frombuffer(body, dtype="<f8"))
        return m

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "MlpDenoiser":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class TrainConfig:
    steps: int = 3000
    batch: int = 128
    lr: float = 0.2
    momentum: float = 0.9
    seed: int = 0


def train(m: MlpDenoiser, images: np.ndarray, labels: np.ndarray, s: NoiseSchedule,
          config: TrainConfig = TrainConfig()) -> tuple[MlpDenoiser, list[float]]:
    """Plain momentum SGD on the epsilon-prediction MSE.  Mutates and returns ``m``."""
    X = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    labels = np.asarray(labels, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if config.lr < 0:
        raise ValueError("learning rate must be non-negative")
    rng = np.random.default_rng(config.seed)
    velocity = {k: np.zeros_like(v) for k, v in m.params.items()}
    losses = []
    ab = s.alphabar
    for step in range(config.steps):
        idx = rng.integers(0, len(X), config.batch)
        t = rng.integers(1, s.T + 1, config.batch)
        eps = rng.standard_normal((config.batch, m.D))
        x_t = np.sqrt(ab[t])[:, None] * X[idx] + np.sqrt(1.0 - ab[t])[:, None] * eps
        loss, grads = m.loss_and_grad(x_t, t, eps, labels[idx])
        if not np.isfinite(loss):
            raise TrainingDiverged(step, loss)
        losses.append(loss)
        for k in m.params:
            velocity[k] = config.momentum * velocity[k] - config.lr * grads[k]
            m.params[k] += velocity[k]
        if step % 500 == 0:
            log.debug("step %d loss %.5f", step, loss)
    return m, losses
