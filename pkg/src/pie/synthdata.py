"""Desk-scale data worlds: labeled Gaussian latents and rendered blob images.

Also holds ROI mask construction and binary PGM (P5) image I/O.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

HEALTHY = 0
DISEASE = 1
CLASS_NAMES = ("healthy", "disease")


@dataclass(frozen=True)
class LatentWorld:
    """Labeled isotropic Gaussian classes sharing one variance."""

    means: np.ndarray  # (n_classes, dim)
    var: float
    priors: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        priors = np.asarray(self.priors, dtype=np.float64)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "priors", priors)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"class{i}" for i in range(len(means))))
        if not np.all(np.isfinite(means)):
            raise ValueError("class means must be finite")
        if self.var <= 0:
            raise ValueError("variance must be positive")
        if priors.shape != (means.shape[0],) or np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must be a probability vector, one entry per class")
        if len(self.names) != means.shape[0]:
            raise ValueError("one name per class required")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    def class_index(self, y: int | str) -> int:
        if isinstance(y, str):
            if y not in self.names:
                raise ValueError(f"unknown class {y!r}")
            return self.names.index(y)
        if not 0 <= int(y) < self.n_classes:
            raise ValueError(f"unknown class {y!r}")
        return int(y)

    def log_density(self, x: np.ndarray, y: int | str) -> float:
        """Class-conditional data-time log density log N(x; mu_y, var I)."""
        mu = self.means[self.class_index(y)]
        diff = np.ravel(x) - mu
        return float(-0.5 * diff @ diff / self.var - 0.5 * self.dim * np.log(2 * np.pi * self.var))

    @classmethod
    def from_dict(cls, payload: dict) -> "LatentWorld":
        classes = payload["classes"]
        dim = int(payload["dim"])
        means = np.array([c["mean"] for c in classes], dtype=np.float64)
        if means.shape[1] != dim:
            raise ValueError(f"class means must have dimension {dim}")
        return cls(means=means, var=float(payload["var"]),
                   priors=np.array([c.get("prior", 1.0 / len(classes)) for c in classes]),
                   names=tuple(c.get("name", f"class{i}") for i, c in enumerate(classes)))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "var": self.var,
                "classes": [{"name": n, "mean": m.tolist(), "prior": float(p)}
                            for n, m, p in zip(self.names, self.means, self.priors)]}


def default_latent_world(dim: int = 16, separation: float = 4.0, var: float = 1.0) -> LatentWorld:
    """Two equal-prior classes: healthy at the origin, disease ``separation`` along e1."""
    means = np.zeros((2, dim))
    means[DISEASE, 0] = separation
    return LatentWorld(means=means, var=var, priors=np.array([0.5, 0.5]), names=CLASS_NAMES)


def sample_latent(w: LatentWorld, y: int | str, rng: np.random.Generator) -> np.ndarray:
    mu = w.means[w.class_index(y)]
    return mu + np.sqrt(w.var) * rng.standard_normal(w.dim)


@dataclass(frozen=True)
class BlobImageSpec:
    """Grayscale "pathology blob" image on a square grid."""

    size: int = 32
    background: float = 0.25
    gradient: float = 0.15
    center: tuple[int, int] = (16, 16)
    r_max: float = 8.0
    peak: float = 0.6
    noise: float = 0.02

    @classmethod
    def from_dict(cls, payload: dict) -> "BlobImageSpec":
        kwargs = dict(payload)
        if "center" in kwargs:
            kwargs["center"] = tuple(int(v) for v in kwargs["center"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {"size": self.size, "background": self.background, "gradient": self.gradient,
                "center": list(self.center), "r_max": self.r_max, "peak": self.peak,
                "noise": self.noise}


def _radius_grid(size: int, center: Sequence[float]) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    return np.hypot(rows - center[0], cols - center[1])


def render_blob(spec: BlobImageSpec, severity: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Background + left-to-right gradient + raised-cosine blob, clamped to [0, 1].

    Blob radius and peak height both scale linearly with ``severity``.
    """
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must be in [0, 1], got {severity}")
    size = spec.size
    cols = np.arange(size, dtype=np.float64)[None, :]
    img = spec.background + spec.gradient * (cols - spec.center[1]) / size
    img = np.broadcast_to(img, (size, size)).copy()
    radius = severity * spec.r_max
    if radius > 0:
        with np.errstate(over="ignore"):  # vanishing radius: u -> inf, i.e. outside the blob
            u = _radius_grid(size, spec.center) / radius
        img += np.where(u < 1.0, severity * spec.peak * 0.5 * (1.0 + np.cos(np.pi * np.minimum(u, 1.0))), 0.0)
    if spec.noise > 0:
        if rng is None:
            raise ValueError("an rng is required when pixel noise is enabled")
        img += spec.noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class Dataset:
    images: np.ndarray  # (n, H, W)
    labels: np.ndarray  # (n,) int
    severities: np.ndarray
    seeds: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)


def severity_class(severity: float) -> int:
    return DISEASE if severity >= 0.5 else HEALTHY


DEFAULT_SEVERITIES = tuple(float(v) for v in np.linspace(0.0, 1.0, 10))


def make_dataset(spec: BlobImageSpec, n_per_severity: int,
                 severities: Sequence[float] = DEFAULT_SEVERITIES,
                 rng: np.random.Generator | None = None) -> Dataset:
    """Render ``n_per_severity`` images at each severity; label = severity >= 0.5."""
    rng = rng if rng is not None else np.random.default_rng(0)
    sev = np.repeat(np.asarray(severities, dtype=np.float64), n_per_severity)
    seeds = rng.integers(0, 2**31 - 1, size=sev.size)
    images = np.empty((sev.size, spec.size, spec.size))
    for i, (s, seed) in enumerate(zip(sev, seeds)):
        images[i] = render_blob(spec, float(s), np.random.default_rng(int(seed)))
    labels = np.array([severity_class(s) for s in sev], dtype=np.int64)
    return Dataset(images=images, labels=labels, severities=sev, seeds=seeds.astype(np.int64))


def write_dataset(ds: Dataset, directory: str) -> str:
    """Dump images as PGM files plus a ``manifest.jsonl`` index; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    manifest = os.path.join(directory, "manifest.jsonl")
    with open(manifest, "w") as fh:
        for i in range(len(ds)):
            name = f"img_{i:05d}.pgm"
            write_image(os.path.join(directory, name), ds.images[i])
            fh.write(json.dumps({"path": name, "class": CLASS_NAMES[ds.labels[i]],
                                 "severity": float(ds.severities[i]), "seed": int(ds.seeds[i])}) + "\n")
    return manifest


def disk_mask(grid: int | tuple[int, int], center: Sequence[float], radius: float,
              soft_edge_width: float = 0.0) -> np.ndarray:
    """1 inside ``radius - edge``, 0 beyond ``radius + edge``, raised-cosine ramp between."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    h, w = (grid, grid) if isinstance(grid, int) else grid
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    r = np.hypot(rows - center[0], cols - center[1])
    if soft_edge_width <= 0:
        return (r <= radius).astype(np.float64)
    inner, outer = radius - soft_edge_width, radius + soft_edge_width
    ramp = 0.5 * (1.0 + np.cos(np.pi * (r - inner) / (outer - inner)))
    return np.where(r <= inner, 1.0, np.where(r >= outer, 0.0, ramp))


ROI_SCALE = 1.5


def roi_mask(spec: BlobImageSpec, scale: float = ROI_SCALE, soft_edge_width: float = 0.0) -> np.ndarray:
    """Region guide around the blob site: a disk of radius ``scale * r_max``.

    The margin beyond the full-severity lesion leaves room for the edit to
    spill slightly past the blob edge.
    """
    return disk_mask(spec.size, spec.center, scale * spec.r_max, soft_edge_width)


class PgmError(ValueError):
    """Malformed PGM payload; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode_image(values: np.ndarray) -> bytes:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("images must be 2-D")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    h, w = arr.shape
    payload = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + payload.tobytes()


def write_image(path: str, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_image(values))


def decode_image(data: bytes) -> np.ndarray:
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos:pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError("unexpected end of header", start)
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise PgmError(f"bad magic {magic!r}, expected b'P5'", 0)
    fields = []
    for name in ("width", "height", "maxval"):
        start = pos
        tok = token()
        if not tok.isdigit():
            raise PgmError(f"bad {name} field {tok!r}", start)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval}, expected 255", pos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmError("missing whitespace after header", pos)
    pos += 1
    payload = data[pos:]
    if len(payload) != w * h:
        raise PgmError(f"expected {w * h} payload bytes, got {len(payload)}", pos)
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def read_image(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image(fh.read())
