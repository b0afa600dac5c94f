"""Acceptance criteria 1-12, one PASS/FAIL line each.

Every tolerance and runtime budget below is pinned; a criterion that is not
met is reported as FAIL rather than relaxed.
"""

import json
import math
import os
import time

import mpmath as mp
import numpy as np
import pytest
from scipy.stats import binomtest

from pie.core import PieConfig, diff_heatmap, run_progression
from pie.ddim import denoise_from, forward_noise, invert, reverse_step, sample
from pie.experiment import build_world, parse_config, report, run_experiment, run_single, sweep
from pie.oracle import GaussianWorldOracle
from pie.schedule import anchored_schedule, drift_bound, linear_schedule
from pie.synthdata import default_latent_world, render_blob, roi_mask, sample_latent
from pie.theory import (bound_report, fixed_point_gaussian, geometric_ratio_fit, step_differences,
                        theory_iterate)

from test_learned import batch, fd_relative_error, small

ANCHORED = anchored_schedule()
THEORY_WORLD = default_latent_world(16, 4.0, 1.0)
THEORY_ORACLE = GaussianWorldOracle(THEORY_WORLD, ANCHORED)
TREND_WORLD = {"kind": "latent"}  # d=16, var=2, separation 4*sqrt(2)
KAPPA_UNIT = 248.296941283685  # drift bound per unit C1 = C2 on the anchored schedule


def theory_run(seed=0):
    x0 = sample_latent(THEORY_WORLD, 0, np.random.default_rng(seed))
    return theory_iterate(x0, 1, THEORY_ORACLE, ANCHORED, 200, noise_mode="zero")


def dominant_factor_mp() -> float:
    """Contraction factor of the zero-noise k = 1 map, from the schedule and world alone."""
    mp.mp.dps = 40
    a0, a1, var = mp.mpf(ANCHORED[0]), mp.mpf(ANCHORED[1]), mp.mpf(THEORY_WORLD.var)
    slope = mp.sqrt(1 - a1) / (a1 * var + 1 - a1)  # d eps / d x_1 for a Gaussian class
    return float(mp.sqrt(a0) + (mp.sqrt(1 - a0) - mp.sqrt(a0 * (1 - a1) / a1)) * slope * mp.sqrt(a1))


def test_criterion_01_step_envelope(acceptance):
    t0 = time.perf_counter()
    rep = bound_report(theory_run(), ANCHORED)
    dt = time.perf_counter() - t0
    ok = len(rep.violations) == 0 and len(rep.observed) == 200 and dt < 5
    acceptance(1, ok, f"envelope violations={len(rep.violations)} over 200 steps "
                      f"(C1={rep.C1:.4f}, C2={rep.C2:.4f}); {dt:.2f}s < 5s")


def test_criterion_02_total_drift(acceptance):
    t0 = time.perf_counter()
    rep = bound_report(theory_run(), ANCHORED)
    dt = time.perf_counter() - t0
    unit = drift_bound(ANCHORED, 1.0, 1.0)
    ok = (rep.drift_ok and not rep.violations and abs(unit - KAPPA_UNIT) < 1e-9
          and rep.kappa == pytest.approx(drift_bound(ANCHORED, rep.C1, rep.C2)) and dt < 5)
    acceptance(2, ok, f"drift={rep.drift:.4f} <= kappa={rep.kappa:.4f} (slack {rep.slack:.4f}); "
                      f"kappa(1,1)={unit:.6f}; violations={len(rep.violations)}; {dt:.2f}s < 5s")


def test_criterion_03_geometric_decay(acceptance):
    t0 = time.perf_counter()
    fitted = geometric_ratio_fit(step_differences(theory_run()))
    dt = time.perf_counter() - t0
    expected = dominant_factor_mp()
    err = abs(fitted - expected)
    acceptance(3, err <= 1e-6 and dt < 5,
               f"fitted ratio={fitted:.12f} vs affine factor={expected:.12f} (|diff|={err:.2e} <= 1e-6); "
               f"{dt:.2f}s < 5s")


def test_criterion_04_fixed_point(acceptance):
    t0 = time.perf_counter()
    x0 = sample_latent(THEORY_WORLD, 0, np.random.default_rng(0))
    xs = fixed_point_gaussian(THEORY_ORACLE, 1)
    factor = dominant_factor_mp()
    horizon = int(math.ceil(math.log(1e-9 / np.linalg.norm(x0 - xs)) / math.log(factor)))
    traj = theory_iterate(x0, 1, THEORY_ORACLE, ANCHORED, horizon, noise_mode="zero")
    gap = float(np.linalg.norm(traj.states[-1] - xs))
    logp = np.array([THEORY_WORLD.log_density(x, 1) for x in traj.states])
    monotone = bool(np.all(np.diff(logp) >= 0))
    dt = time.perf_counter() - t0
    acceptance(4, gap <= 1e-8 and monotone and dt < 10,
               f"|x(N) - x*|={gap:.2e} <= 1e-8 after N={horizon}; log p(x|y) non-decreasing={monotone}; "
               f"{dt:.2f}s < 10s")


def test_criterion_05_ddim_consistency(acceptance):
    t0 = time.perf_counter()
    s = linear_schedule()
    rng = np.random.default_rng(0)
    worst_identity = 0.0
    for _ in range(1000):
        t = int(rng.integers(1, s.T + 1))
        x0, eps = rng.standard_normal(16), rng.standard_normal(16)
        got = reverse_step(forward_noise(x0, t, eps, s), t, eps, s)
        worst_identity = max(worst_identity, float(np.max(np.abs(got - forward_noise(x0, t - 1, eps, s)))))
    w = default_latent_world(16, 4.0, 1.0)
    o = GaussianWorldOracle(w, s)
    naive, refined = {0: 0.0, 1: 0.0}, 0.0
    k = s.T // 2
    for y in (0, 1):
        for _ in range(20):
            x0 = sample_latent(w, y, rng)
            back = denoise_from(invert(x0, k, o, y, s), k, o, y, s)
            naive[y] = max(naive[y], float(np.linalg.norm(back - x0) / np.linalg.norm(x0)))
            back = denoise_from(invert(x0, k, o, y, s, refine=True), k, o, y, s)
            refined = max(refined, float(np.linalg.norm(back - x0) / np.linalg.norm(x0)))
    dt = time.perf_counter() - t0
    ok = worst_identity <= 1e-12 and max(naive.values()) <= 1e-2 and refined <= 1e-10 and dt < 10
    acceptance(5, ok, f"identity max err={worst_identity:.1e} <= 1e-12; naive roundtrip rel err "
                      f"class0={naive[0]:.2e} class1={naive[1]:.2e} (<= 1e-2); refined={refined:.1e} "
                      f"<= 1e-10; {dt:.2f}s < 10s")


def test_criterion_06_gamma_trend(acceptance, tmp_path):
    t0 = time.perf_counter()
    gammas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
    cfg = parse_config({"world": TREND_WORLD, "schedule": {"kind": "linear", "T": 50}, "pie": {"N": 10},
                        "seeds": list(range(20)), "grids": {"gamma": gammas}}, str(tmp_path))
    summary = report(sweep(cfg, "gamma", str(tmp_path / "gamma")), figures=False)
    dt = time.perf_counter() - t0
    rc, rs = summary["trend"]["spearman_conf"], summary["trend"]["spearman_similarity"]
    conf = ", ".join(f"{c:.3f}" for c in summary["mean_final_conf"])
    acceptance(6, rc >= 0.9 and rs <= -0.5 and dt < 60,
               f"spearman(conf, gamma)={rc:.3f} >= 0.9, spearman(similarity, gamma)={rs:.3f} <= -0.5; "
               f"conf=[{conf}]; {dt:.1f}s < 60s")


def test_criterion_07_steps_trend(acceptance):
    t0 = time.perf_counter()
    cfg = parse_config({"world": TREND_WORLD, "schedule": {"kind": "linear", "T": 50},
                        "pie": {"N": 20, "gamma": 0.5}, "seeds": list(range(300))})
    world = build_world(cfg)
    conf = np.array([[r["conf"] for r in run_single(world, seed).records] for seed in cfg.seeds])
    c1, c10, c20 = conf[:, 1].mean(), conf[:, 10].mean(), conf[:, 20].mean()
    dt = time.perf_counter() - t0
    acceptance(7, c10 - c1 >= 0.2 and abs(c20 - c10) <= 0.05 and dt < 60,
               f"conf(N=1)={c1:.3f}, conf(N=10)={c10:.3f}, conf(N=20)={c20:.3f}; gain={c10 - c1:.3f} >= 0.2, "
               f"plateau={abs(c20 - c10):.3f} <= 0.05 (300 seeds); {dt:.1f}s < 60s")


def test_criterion_08_blend_identities(acceptance, image_world):
    t0 = time.perf_counter()
    spec, s, model = image_world.spec, image_world.schedule, image_world.model
    x0 = render_blob(spec, 0.0, np.random.default_rng(0))
    m = roi_mask(spec)
    frozen = run_progression(x0, 1, m, PieConfig(gamma=0.5, N=5, beta1=0.0, beta2=0.0), model, s, 0)
    constant = all(np.array_equal(x, x0) for x in frozen.states)
    inside = run_progression(x0, 1, m, PieConfig(gamma=0.5, N=5, beta1=0.0, beta2=0.75), model, s, 0)
    outside = m == 0
    leaked = max(float(diff_heatmap(inside, n)[outside].max()) for n in range(inside.N + 1))
    moved = float(diff_heatmap(inside, inside.N)[~outside].sum())
    dt = time.perf_counter() - t0
    acceptance(8, constant and leaked == 0.0 and moved > 0 and dt < 5,
               f"beta1=beta2=0 bitwise constant={constant}; beta1=0 off-ROI heatmap max={leaked} (== 0), "
               f"ROI mass={moved:.3f}; {dt:.2f}s < 5s")


def test_criterion_09_method_ordering(acceptance, tmp_path):
    t0 = time.perf_counter()
    finals = {}
    for method in ("pie", "extrapolation", "interpolation"):
        cfg = parse_config({"world": TREND_WORLD, "schedule": {"kind": "linear", "T": 50},
                            "pie": {"N": 10, "gamma": 0.5}, "method": method, "seeds": list(range(20))},
                           str(tmp_path))
        world = build_world(cfg)
        finals[method] = np.array([run_single(world, seed).records[-1]["conf"] for seed in cfg.seeds])
    dt = time.perf_counter() - t0
    parts, ok = [], dt < 120
    for base in ("extrapolation", "interpolation"):
        wins = int(np.sum(finals["pie"] > finals[base]))
        p = binomtest(wins, 20, 0.5, alternative="greater").pvalue
        ok &= p < 0.01
        parts.append(f"vs {base}: {wins}/20 wins, p={p:.2e} (mean {finals['pie'].mean():.3f} vs "
                     f"{finals[base].mean():.3f})")
    acceptance(9, ok, "; ".join(parts) + f"; sign test p < 0.01; {dt:.1f}s < 120s")


def test_criterion_10_mask_ablation(acceptance, tmp_path, checkpoint):
    t0 = time.perf_counter()
    cfg = parse_config({"world": {"kind": "blob-image"}, "schedule": {"kind": "linear", "T": 50},
                        "denoiser": {"kind": "learned", "checkpoint": checkpoint},
                        "pie": {"N": 10, "gamma": 0.5}, "mask": {"kind": "disk"},
                        "seeds": list(range(10)), "grids": {"mask": [True, False]}}, str(tmp_path))
    out = sweep(cfg, "mask", str(tmp_path / "mask"))
    sims = {}
    for flag in (True, False):
        with open(os.path.join(out, f"mask={'true' if flag else 'false'}", "report.json")) as fh:
            sims[flag] = np.array([r["final_similarity"] for r in json.load(fh)["runs"]])
    wins = int(np.sum(sims[True] > sims[False]))
    dt = time.perf_counter() - t0
    acceptance(10, wins > 5 and dt < 300,
               f"with-mask similarity higher in {wins}/10 seeds (> 5); mean {sims[True].mean():.3f} vs "
               f"{sims[False].mean():.3f}; {dt:.1f}s < 300s")


def test_criterion_11_learned_denoiser(acceptance, image_world):
    rng = np.random.default_rng(7)
    fd = max(fd_relative_error(small(seed), *batch(rng)) for seed in range(20))
    spec, s, model, clf = image_world.spec, image_world.schedule, image_world.model, image_world.classifier
    conf = {}
    for y in (0, 1):
        draws = [sample(model, y, s, seed, (spec.size, spec.size)) for seed in range(50)]
        p = clf.predict_proba(np.stack(draws).reshape(len(draws), -1))
        conf[y] = float(np.mean(p if y == 1 else 1.0 - p))
    train_s = image_world.train_seconds
    ok = fd <= 1e-4 and min(conf.values()) > 0.8 and train_s < 600
    acceptance(11, ok, f"gradient check max rel err={fd:.1e} <= 1e-4 on 20 points; conditional sample "
                       f"confidence healthy={conf[0]:.3f} disease={conf[1]:.3f} (> 0.8); "
                       f"training {train_s:.0f}s < 600s")


def tree_bytes(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for name in files:
            path = os.path.join(root, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, directory)] = fh.read()
    return out


def test_criterion_12_determinism(acceptance, tmp_path, checkpoint):
    configs = {
        "pie": {"world": TREND_WORLD, "schedule": {"kind": "linear", "T": 50}, "pie": {"N": 5}, "seeds": [0, 1, 2]},
        "theory": {"world": TREND_WORLD, "schedule": {"kind": "anchored", "T": 50},
                   "pie": {"N": 50, "noise_mode": "fresh"}, "method": "theory", "seeds": [0, 1]},
        "extrapolation": {"world": TREND_WORLD, "schedule": {"kind": "linear", "T": 50}, "pie": {"N": 5},
                          "method": "extrapolation", "seeds": [0, 1, 2]},
        "interpolation": {"world": TREND_WORLD, "schedule": {"kind": "linear", "T": 50}, "pie": {"N": 5},
                          "method": "interpolation", "seeds": [0, 1, 2]},
        "image": {"world": {"kind": "blob-image", "n_per_severity": 40}, "schedule": {"kind": "linear", "T": 50},
                  "denoiser": {"kind": "learned", "checkpoint": checkpoint}, "pie": {"N": 3},
                  "mask": {"kind": "disk"}, "seeds": [0, 1]},
    }
    mismatched, files = [], 0
    for name, payload in configs.items():
        trees = []
        for rep in ("a", "b"):
            out = run_experiment(parse_config(payload, str(tmp_path)), str(tmp_path / name / rep))
            report(out)
            trees.append(tree_bytes(out))
        files += len(trees[0])
        if trees[0] != trees[1]:
            mismatched.append(name)
    acceptance(12, not mismatched, f"{len(configs)} configs re-run: {files} artifact files byte-identical"
                                   f"{'' if not mismatched else '; differing: ' + ', '.join(mismatched)}")
