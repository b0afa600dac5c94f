"""Config-driven experiment runner: single runs, grid sweeps, reports and checks.

A run directory holds ``trajectories.csv``, ``metrics.csv`` and ``report.json``,
plus per-step and difference-heatmap PGMs in the image regime and
``bound_report.json`` for theory runs.  A sweep directory holds one run
directory per grid point and a ``summary.csv`` reducer over all of them.
Every byte written is a function of the config and the seeds.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
from scipy.stats import spearmanr

from .core import PieConfig, Trajectory, _record, diff_heatmap, run_progression, similarity_to
from .learned import MlpDenoiser
from .metrics import (bayes_confidence, interpolation_walk, mmd_poly, run_extrapolation,
                      sample_direction_pairs, train_classifier)
from .oracle import GaussianWorldOracle
from .schedule import NoiseSchedule, schedule_from_spec
from .synthdata import (CLASS_NAMES, BlobImageSpec, Dataset, LatentWorld, default_latent_world,
                        ROI_SCALE, disk_mask, make_dataset, render_blob, sample_latent,
                        write_image)
from .theory import bound_report, theory_iterate

METHODS = ("pie", "theory", "extrapolation", "interpolation")
GRID_KEYS = ("gamma", "N", "beta1", "beta2", "mask")
TOP_KEYS = ("world", "schedule", "denoiser", "pie", "mask", "method", "start", "target",
            "seeds", "grids", "baseline", "output")
SEED_ENV = "PIE_SEED"
SUMMARY_NAME = "summary.json"
FIGURE_DIR = "figures"
REFERENCE_COUNT = 200


class ConfigError(ValueError):
    """Invalid experiment config; ``pointer`` is the JSON pointer of the offending key."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


class ArtifactError(RuntimeError):
    """An artifact directory lacks the files a report needs."""


# -- config -----------------------------------------------------------------

def _get(obj: dict, key: str, pointer: str, kind=None, default: Any = ...) -> Any:
    if key not in obj:
        if default is ...:
            raise ConfigError(f"{pointer}/{key}", "required key is missing")
        return default
    value = obj[key]
    numeric = kind in (int, float, (int, float))
    if kind is not None and (not isinstance(value, kind) or numeric and isinstance(value, bool)):
        raise ConfigError(f"{pointer}/{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _no_extras(obj: dict, allowed, pointer: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{pointer}/{key}", "unknown key")


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: str
    world: LatentWorld | BlobImageSpec
    world_seed: int
    n_per_severity: int
    source_severity: float
    schedule: NoiseSchedule
    denoiser_kind: str
    checkpoint: Optional[str]
    pie: PieConfig
    mask: dict
    method: str
    start: int
    target: int
    seeds: list[int]
    grids: dict
    baseline_pairs: int
    baseline_weight: Optional[float]
    invert_under: str
    output: str

    @property
    def image_regime(self) -> bool:
        return isinstance(self.world, BlobImageSpec)


def _parse_world(spec: Any) -> tuple[LatentWorld | BlobImageSpec, int, int, float]:
    ptr = "/world"
    if not isinstance(spec, dict):
        raise ConfigError(ptr, "expected an object")
    kind = _get(spec, "kind", ptr, str)
    seed = _get(spec, "seed", ptr, int, 0)
    try:
        if kind == "latent":
            _no_extras(spec, ("kind", "seed", "dim", "var", "separation", "classes"), ptr)
            if "classes" in spec:
                payload = {k: spec[k] for k in ("dim", "var", "classes") if k in spec}
                return LatentWorld.from_dict(payload), seed, 0, 0.0
            var = float(_get(spec, "var", ptr, (int, float), 2.0))
            sep = float(_get(spec, "separation", ptr, (int, float), 4.0 * math.sqrt(var)))
            return default_latent_world(int(_get(spec, "dim", ptr, int, 16)), sep, var), seed, 0, 0.0
        if kind == "blob-image":
            fields = ("size", "background", "gradient", "center", "r_max", "peak", "noise")
            _no_extras(spec, ("kind", "seed", "n_per_severity", "source_severity") + fields, ptr)
            n = _get(spec, "n_per_severity", ptr, int, 400)
            sev = float(_get(spec, "source_severity", ptr, (int, float), 0.0))
            return BlobImageSpec.from_dict({k: spec[k] for k in fields if k in spec}), seed, n, sev
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(ptr, str(exc)) from exc
    raise ConfigError(f"{ptr}/kind", f"expected 'latent' or 'blob-image', got {kind!r}")


def _parse_class(value: Any, pointer: str, names) -> int:
    if isinstance(value, str) and value in names:
        return list(names).index(value)
    if isinstance(value, int) and not isinstance(value, bool) and 0 <= value < len(names):
        return value
    raise ConfigError(pointer, f"unknown class {value!r}")


def _env_seeds() -> Optional[list[int]]:
    text = os.environ.get(SEED_ENV)
    if text is None or not text.strip():
        return None
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError("/seeds", f"{SEED_ENV} must be a comma-separated list of integers") from exc


def parse_config(raw: Any, base_dir: str = ".") -> ExperimentConfig:
    """Validate a decoded JSON config; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    _no_extras(raw, TOP_KEYS, "")
    world, world_seed, n_per_sev, source_sev = _parse_world(_get(raw, "world", ""))
    sched_spec = _get(raw, "schedule", "", dict)
    try:
        schedule = schedule_from_spec(sched_spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError("/schedule", str(exc)) from exc

    den = _get(raw, "denoiser", "", dict, {"kind": "oracle"})
    kind = _get(den, "kind", "/denoiser", str)
    _no_extras(den, ("kind", "checkpoint"), "/denoiser")
    checkpoint = None
    if kind == "learned":
        checkpoint = os.path.join(base_dir, _get(den, "checkpoint", "/denoiser", str))
        if not os.path.isfile(checkpoint):
            raise ConfigError("/denoiser/checkpoint", f"file not found: {den['checkpoint']}")
    elif kind != "oracle":
        raise ConfigError("/denoiser/kind", f"expected 'oracle' or 'learned', got {kind!r}")
    if kind == "oracle" and isinstance(world, BlobImageSpec):
        raise ConfigError("/denoiser/kind", "the image regime needs a learned checkpoint")

    pie_raw = _get(raw, "pie", "", dict, {})
    _no_extras(pie_raw, ("gamma", "N", "beta1", "beta2", "noise_mode"), "/pie")
    try:
        pie = PieConfig(**pie_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("/pie", str(exc)) from exc

    mask = _get(raw, "mask", "", dict, {"kind": "none"})
    _check_mask(mask, world)

    method = _get(raw, "method", "", str, "pie")
    if method not in METHODS:
        raise ConfigError("/method", f"expected one of {METHODS}, got {method!r}")
    names = world.names if isinstance(world, LatentWorld) else CLASS_NAMES
    start = _parse_class(_get(raw, "start", "", default=names[0]), "/start", names)
    target = _parse_class(_get(raw, "target", "", default=names[-1]), "/target", names)

    seeds = _env_seeds()
    if seeds is None:
        seeds = _get(raw, "seeds", "", list, [0])
        if not seeds or not all(isinstance(v, int) and not isinstance(v, bool) for v in seeds):
            raise ConfigError("/seeds", "expected a non-empty list of integers")
    grids = _get(raw, "grids", "", dict, {})
    for key, values in grids.items():
        if key not in GRID_KEYS:
            raise ConfigError(f"/grids/{key}", f"unknown grid; expected one of {GRID_KEYS}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"/grids/{key}", "grid must be a non-empty list")
    baseline = _get(raw, "baseline", "", dict, {})
    _no_extras(baseline, ("pairs", "weight", "invert"), "/baseline")
    pairs = _get(baseline, "pairs", "/baseline", int, 16)
    if pairs < 1:
        raise ConfigError("/baseline/pairs", "need at least one direction pair")
    weight = _get(baseline, "weight", "/baseline", (int, float), None)
    if weight is not None and weight <= 0:
        raise ConfigError("/baseline/weight", "stage weight must be positive")
    invert_under = _get(baseline, "invert", "/baseline", str, "target")
    if invert_under not in ("target", "source"):
        raise ConfigError("/baseline/invert", f"expected 'target' or 'source', got {invert_under!r}")
    output = os.path.join(base_dir, _get(raw, "output", "", str, "pie_out"))
    return ExperimentConfig(raw=raw, base_dir=base_dir, world=world, world_seed=world_seed,
                            n_per_severity=n_per_sev, source_severity=source_sev, schedule=schedule,
                            denoiser_kind=kind, checkpoint=checkpoint, pie=pie, mask=mask, method=method,
                            start=start, target=target, seeds=list(seeds), grids=grids,
                            baseline_pairs=pairs, baseline_weight=weight,
                            invert_under=invert_under, output=output)


def _check_mask(mask: dict, world) -> None:
    kind = mask.get("kind", "none")
    if kind == "none":
        _no_extras(mask, ("kind",), "/mask")
    elif kind == "disk":
        _no_extras(mask, ("kind", "center", "radius", "soft_edge"), "/mask")
        if not isinstance(world, BlobImageSpec):
            raise ConfigError("/mask/kind", "disk masks need the image regime")
        radius = _get(mask, "radius", "/mask", (int, float), 1.0)
        if radius <= 0:
            raise ConfigError("/mask/radius", "radius must be positive")
    elif kind == "indices":
        _no_extras(mask, ("kind", "indices"), "/mask")
        if not isinstance(world, LatentWorld):
            raise ConfigError("/mask/kind", "index masks need the latent regime")
        idx = _get(mask, "indices", "/mask", list)
        if not idx or not all(isinstance(i, int) and 0 <= i < world.dim for i in idx):
            raise ConfigError("/mask/indices", f"indices must lie in [0, {world.dim})")
    else:
        raise ConfigError("/mask/kind", f"expected 'none', 'disk' or 'indices', got {kind!r}")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))


# -- world setup --------------------------------------------------------------

@dataclass
class World:
    """Everything a run needs besides the seed."""

    cfg: ExperimentConfig
    denoiser: Any
    score: Callable[[np.ndarray], float]
    mask: Optional[np.ndarray]
    dataset: Optional[Dataset] = None

    def source(self, rng: np.random.Generator) -> np.ndarray:
        w = self.cfg.world
        if isinstance(w, LatentWorld):
            return sample_latent(w, self.cfg.start, rng)
        return render_blob(w, self.cfg.source_severity, rng)

    def reference(self) -> np.ndarray:
        """Target-class samples the MMD compares against."""
        w, rng = self.cfg.world, np.random.default_rng([self.cfg.world_seed, 7])
        if isinstance(w, LatentWorld):
            return np.stack([sample_latent(w, self.cfg.target, rng) for _ in range(REFERENCE_COUNT)])
        idx = np.flatnonzero(self.dataset.labels == self.cfg.target)
        return self.dataset.images[rng.choice(idx, size=min(REFERENCE_COUNT, idx.size), replace=False)]

    def direction_pairs(self, rng: np.random.Generator):
        src = self.cfg.world if isinstance(self.cfg.world, LatentWorld) else self.dataset
        return sample_direction_pairs(src, self.cfg.start, self.cfg.target, self.cfg.baseline_pairs, rng)


def build_mask(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    kind = cfg.mask.get("kind", "none")
    if kind == "disk":
        w = cfg.world
        center = cfg.mask.get("center", list(w.center))
        radius = float(cfg.mask.get("radius", ROI_SCALE * w.r_max))
        return disk_mask(w.size, center, radius, float(cfg.mask.get("soft_edge", 0.0)))
    if kind == "indices":
        m = np.zeros(cfg.world.dim)
        m[cfg.mask["indices"]] = 1.0
        return m
    return None


def build_world(cfg: ExperimentConfig) -> World:
    mask = build_mask(cfg)
    if isinstance(cfg.world, LatentWorld):
        w, target = cfg.world, cfg.target
        return World(cfg, GaussianWorldOracle(w, cfg.schedule), lambda x: bayes_confidence(w, x, target), mask)
    denoiser = MlpDenoiser.load(cfg.checkpoint)
    if denoiser.D != cfg.world.size ** 2 or denoiser.T != cfg.schedule.T:
        raise ConfigError("/denoiser/checkpoint",
                          f"checkpoint expects D={denoiser.D}, T={denoiser.T}; world/schedule give "
                          f"D={cfg.world.size ** 2}, T={cfg.schedule.T}")
    ds = make_dataset(cfg.world, cfg.n_per_severity, rng=np.random.default_rng(cfg.world_seed))
    clf = train_classifier(ds, seed=cfg.world_seed)
    sign = cfg.target

    def score(x):
        p = clf.confidence(x)
        return p if sign == 1 else 1.0 - p

    return World(cfg, denoiser, score, mask, ds)


# -- running ------------------------------------------------------------------

def run_single(world: World, seed: int) -> Trajectory:
    """One trajectory of the configured method for one seed."""
    cfg = world.cfg
    x0 = world.source(np.random.default_rng([seed, 0]))
    rng = np.random.default_rng([seed, 1])
    c = cfg.pie
    if cfg.method == "pie":
        traj = run_progression(x0, cfg.target, world.mask, c, world.denoiser, cfg.schedule, rng, world.score)
    elif cfg.method == "theory":
        traj = theory_iterate(x0, cfg.target, world.denoiser, cfg.schedule, c.N, c.noise_mode, rng)
        sim = similarity_to(x0)
        traj.records = [_record(x, None if n == 0 else traj.states[n - 1], world.score, sim)
                        for n, x in enumerate(traj.states)]
    elif cfg.method == "extrapolation":
        traj = run_extrapolation(x0, world.direction_pairs(rng), c.N, world.mask, c.beta1, c.beta2, world.score,
                                 cfg.baseline_weight)
    else:
        traj = interpolation_walk(x0, cfg.target, world.denoiser, cfg.schedule, max(c.N, 1), rng,
                                  world.mask, c.beta1, c.beta2, world.score,
                                  cfg.start if cfg.invert_under == "source" else cfg.target)
        if c.N == 0:
            traj.states, traj.records = traj.states[:1], traj.records[:1]
    traj.seed = seed
    return traj


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if not math.isfinite(v) else v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _safe_mmd(states, reference) -> Optional[float]:
    if len(states) < 2:
        return None
    return mmd_poly(states, reference)


def _write_images(out: str, traj: Trajectory) -> None:
    folder = os.path.join(out, "images", f"run{traj.seed}")
    heat = os.path.join(out, "heatmaps", f"run{traj.seed}")
    os.makedirs(folder, exist_ok=True)
    os.makedirs(heat, exist_ok=True)
    maps = [diff_heatmap(traj, n) for n in range(traj.N + 1)]
    scale = max(float(m.max()) for m in maps)
    for n, x in enumerate(traj.states):
        write_image(os.path.join(folder, f"step{n:03d}.pgm"), np.clip(x, 0.0, 1.0))
        write_image(os.path.join(heat, f"diff{n:03d}.pgm"), maps[n] / scale if scale > 0 else maps[n])


def write_run(cfg: ExperimentConfig, world: World, out: str) -> dict:
    """Run every seed and write the run artifacts into ``out``; returns the report dict."""
    os.makedirs(out, exist_ok=True)
    trajs = [run_single(world, seed) for seed in cfg.seeds]
    rows = []
    for traj in trajs:
        for n, rec in enumerate(traj.records):
            rows.append((cfg.method, traj.seed, n, rec["conf"], rec["similarity"], rec["step_diff_norm"]))
    rows.sort(key=lambda r: (r[1], r[2]))
    _write_csv(os.path.join(out, "trajectories.csv"),
               ("method", "run_id", "step", "conf", "similarity", "step_diff_norm"), rows)

    reference = world.reference()
    steps = min(t.N for t in trajs)
    metric_rows, mmd_by_step = [], []
    for n in range(steps + 1):
        mmd = _safe_mmd([t.states[n] for t in trajs], reference)
        mmd_by_step.append(mmd)
        for t in sorted(trajs, key=lambda t: t.seed):
            metric_rows.append((cfg.method, t.seed, n, t.records[n]["conf"], t.records[n]["similarity"], mmd))
    metric_rows.sort(key=lambda r: (r[1], r[2]))
    _write_csv(os.path.join(out, "metrics.csv"),
               ("method", "run_id", "step", "conf", "similarity", "mmd"), metric_rows)

    if cfg.image_regime:
        for traj in trajs:
            _write_images(out, traj)

    report = {
        "method": cfg.method,
        "regime": "image" if cfg.image_regime else "latent",
        "k": cfg.pie.k(cfg.schedule.T),
        "T": cfg.schedule.T,
        "pie": cfg.pie.to_dict(),
        "mask": cfg.mask,
        "seeds": sorted(cfg.seeds),
        "runs": [{"run_id": t.seed, "final_conf": t.records[-1]["conf"],
                  "final_similarity": t.records[-1]["similarity"], "steps": t.N}
                 for t in sorted(trajs, key=lambda t: t.seed)],
    }
    finals = np.array([t.records[-1]["conf"] for t in trajs])
    fsims = np.array([t.records[-1]["similarity"] for t in trajs])
    report.update(final_conf_mean=float(finals.mean()), final_conf_std=float(finals.std()),
                  final_similarity_mean=float(fsims.mean()), final_similarity_std=float(fsims.std()),
                  mmd_final=mmd_by_step[-1])

    if cfg.method == "theory":
        reports = [bound_report(t, cfg.schedule) for t in sorted(trajs, key=lambda t: t.seed)]
        bounds = {"prop2_violations": sum(len(r.violations) for r in reports),
                  "drift_ok": all(bool(r.drift_ok) for r in reports),
                  "runs": [dict(r.to_dict(), run_id=t) for r, t in zip(reports, sorted(cfg.seeds))]}
        _write_json(os.path.join(out, "bound_report.json"), bounds)
        report["prop2_violations"] = bounds["prop2_violations"]
        report["drift_ok"] = bounds["drift_ok"]
    _write_json(os.path.join(out, "report.json"), report)
    return report


def run_experiment(cfg: ExperimentConfig, out: Optional[str] = None) -> str:
    out = out or cfg.output
    write_run(cfg, build_world(cfg), out)
    return out


def _with_grid_value(cfg: ExperimentConfig, grid: str, value) -> ExperimentConfig:
    new = copy.copy(cfg)
    if grid == "mask":
        if not isinstance(value, bool):
            raise ConfigError("/grids/mask", "mask grid values must be true/false")
        new.mask = cfg.mask if value else {"kind": "none"}
        return new
    try:
        new.pie = PieConfig(**dict(cfg.pie.to_dict(), **{grid: value}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"/grids/{grid}", str(exc)) from exc
    return new


def _point_name(grid: str, value) -> str:
    return f"{grid}={json.dumps(value)}"


def sweep(cfg: ExperimentConfig, grid: str, out: Optional[str] = None) -> str:
    """Run every grid point into its own subtree, then reduce into ``summary.csv``."""
    if grid not in cfg.grids:
        raise ConfigError(f"/grids/{grid}", "grid is not defined in the config")
    values = cfg.grids[grid]
    out = out or cfg.output
    os.makedirs(out, exist_ok=True)
    points = [_with_grid_value(cfg, grid, v) for v in values]
    world = build_world(cfg)
    rows = []
    for value, point in zip(values, points):
        w = World(point, world.denoiser, world.score, build_mask(point), world.dataset)
        rep = write_run(point, w, os.path.join(out, _point_name(grid, value)))
        for run in rep["runs"]:
            rows.append((grid, value, str(run["run_id"]), run["final_conf"], run["final_similarity"], rep["mmd_final"]))
        confs = np.array([r["final_conf"] for r in rep["runs"]])
        sims = np.array([r["final_similarity"] for r in rep["runs"]])
        rows.append((grid, value, "mean", float(confs.mean()), float(sims.mean()), rep["mmd_final"]))
        rows.append((grid, value, "std", float(confs.std()), float(sims.std()), None))

    def key(r):
        rid = r[2]
        return (float(r[1]), 0 if rid.isdigit() or rid.lstrip("-").isdigit() else 1,
                int(rid) if rid.lstrip("-").isdigit() else 0, rid)

    rows.sort(key=key)
    _write_csv(os.path.join(out, "summary.csv"),
               ("grid", "value", "run_id", "final_conf", "final_similarity", "mmd"),
               [(g, json.dumps(v), rid, c, s, m) for g, v, rid, c, s, m in rows])
    _write_json(os.path.join(out, "sweep.json"), {"grid": grid, "values": values, "method": cfg.method})
    return out


# -- report / check ------------------------------------------------------------

def _read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(text: str) -> Optional[float]:
    return float(text) if text not in ("", None) else None


def _spearman(x, y) -> Optional[float]:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(spearmanr(x, y).statistic)


def inventory(directory: str) -> list[dict]:
    """Sorted (path, bytes, sha256) listing, excluding the report's own outputs."""
    items = []
    for root, dirs, files in os.walk(directory):
        dirs[:] = sorted(d for d in dirs if not (root == directory and d == FIGURE_DIR))
        for name in sorted(files):
            if root == directory and name == SUMMARY_NAME:
                continue
            path = os.path.join(root, name)
            with open(path, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            items.append({"path": os.path.relpath(path, directory).replace(os.sep, "/"),
                          "bytes": os.path.getsize(path), "sha256": digest})
    return sorted(items, key=lambda d: d["path"])


def _run_summary(directory: str) -> dict:
    rows = _read_csv(os.path.join(directory, "trajectories.csv"))
    steps = sorted({int(r["step"]) for r in rows})
    by_step = {n: [r for r in rows if int(r["step"]) == n] for n in steps}
    conf = [float(np.mean([_num(r["conf"]) for r in by_step[n]])) for n in steps]
    sim = [float(np.mean([_num(r["similarity"]) for r in by_step[n]])) for n in steps]
    out = {"kind": "run", "method": rows[0]["method"] if rows else None,
           "n_runs": len({r["run_id"] for r in rows}), "steps": steps,
           "mean_conf_by_step": conf, "mean_similarity_by_step": sim,
           "trend": {"spearman_conf_step": _spearman(steps, conf),
                     "spearman_similarity_step": _spearman(steps, sim)}}
    bounds = os.path.join(directory, "bound_report.json")
    if os.path.isfile(bounds):
        with open(bounds) as fh:
            b = json.load(fh)
        out["prop2_violations"] = b["prop2_violations"]
        out["drift_ok"] = b["drift_ok"]
    return out


def _sweep_summary(directory: str) -> dict:
    rows = _read_csv(os.path.join(directory, "summary.csv"))
    with open(os.path.join(directory, "sweep.json")) as fh:
        meta = json.load(fh)
    means = [r for r in rows if r["run_id"] == "mean"]
    values = [json.loads(r["value"]) for r in means]
    conf = [float(r["final_conf"]) for r in means]
    sim = [float(r["final_similarity"]) for r in means]
    numeric = [float(v) for v in values]
    out = {"kind": "sweep", "grid": meta["grid"], "method": meta["method"], "values": values,
           "mean_final_conf": conf, "mean_final_similarity": sim,
           "mmd": [_num(r["mmd"]) for r in means],
           "trend": {"spearman_conf": _spearman(numeric, conf),
                     "spearman_similarity": _spearman(numeric, sim)}}
    violations = []
    for v in meta["values"]:
        path = os.path.join(directory, _point_name(meta["grid"], v), "bound_report.json")
        if os.path.isfile(path):
            with open(path) as fh:
                violations.append(json.load(fh)["prop2_violations"])
    if violations:
        out["prop2_violations"] = int(sum(violations))
    return out


def report(directory: str, figures: bool = True) -> dict:
    """Machine-readable summary of a run or sweep directory (written to ``summary.json``).

    Idempotent: the summary and the figures are excluded from the inventory.
    """
    if not os.path.isdir(directory):
        raise ArtifactError(f"no such directory: {directory}")
    if os.path.isfile(os.path.join(directory, "summary.csv")):
        summary = _sweep_summary(directory)
    elif os.path.isfile(os.path.join(directory, "trajectories.csv")):
        summary = _run_summary(directory)
    else:
        raise ArtifactError(f"{directory} holds neither trajectories.csv nor summary.csv")
    summary["files"] = inventory(directory)
    summary = _jsonable(summary)
    _write_json(os.path.join(directory, SUMMARY_NAME), summary)
    if figures:
        from .plotting import render_figures

        render_figures(directory, summary)
    return summary


def _value_conf(summary: dict, value) -> Optional[float]:
    for v, c in zip(summary["values"], summary["mean_final_conf"]):
        if v == value:
            return c
    return None


def check(directory: str) -> list[tuple[str, bool, str]]:
    """Trend and bound checks appropriate to the directory's contents."""
    s = report(directory, figures=False)
    results = []
    if "prop2_violations" in s:
        results.append(("envelope", s["prop2_violations"] == 0, f"violations={s['prop2_violations']}"))
    if "drift_ok" in s:
        results.append(("drift", bool(s["drift_ok"]), f"drift_ok={s['drift_ok']}"))
    if s["kind"] == "run":
        if s["method"] in ("pie", "extrapolation", "interpolation") and len(s["steps"]) > 1:
            c = s["mean_conf_by_step"]
            results.append(("conf_rises", c[-1] > c[0], f"conf {c[0]:.4f} -> {c[-1]:.4f}"))
        return results
    grid, trend = s["grid"], s["trend"]
    if grid == "gamma":
        rc, rs = trend["spearman_conf"], trend["spearman_similarity"]
        results.append(("gamma_conf_trend", rc is not None and rc >= 0.9, f"spearman={rc}"))
        results.append(("gamma_similarity_trend", rs is not None and rs <= -0.5, f"spearman={rs}"))
    elif grid == "N":
        c1, c10, c20 = (_value_conf(s, n) for n in (1, 10, 20))
        if c1 is not None and c10 is not None:
            results.append(("N_gain", c10 - c1 >= 0.2, f"conf(10)-conf(1)={c10 - c1:.4f}"))
        if c10 is not None and c20 is not None:
            results.append(("N_plateau", abs(c20 - c10) <= 0.05, f"|conf(20)-conf(10)|={abs(c20 - c10):.4f}"))
    elif grid == "beta2":
        c = s["mean_final_conf"]
        order = np.argsort([float(v) for v in s["values"]])
        ok = all(c[order[i + 1]] >= c[order[i]] for i in range(len(order) - 1))
        results.append(("beta2_monotone", ok, f"conf={[round(c[i], 4) for i in order]}"))
    elif grid == "mask":
        sims = dict(zip([bool(v) for v in s["values"]], s["mean_final_similarity"]))
        if True in sims and False in sims:
            results.append(("mask_similarity", sims[True] > sims[False],
                            f"with={sims[True]:.4f} without={sims[False]:.4f}"))
    return results
