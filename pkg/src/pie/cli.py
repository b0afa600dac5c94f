"""Command-line entry point: ``pie run|sweep|report|check|train``.

Exit codes: 0 success, 2 config error, 3 runtime error, 4 failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4


def _cmd_run(args) -> int:
    from .experiment import load_config, run_experiment

    out = run_experiment(load_config(args.config), args.out)
    print(out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .experiment import load_config, sweep

    out = sweep(load_config(args.config), args.grid, args.out)
    print(out)
    return EXIT_OK


def _cmd_report(args) -> int:
    from .experiment import report

    summary = report(args.dir, figures=not args.no_figures)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_check(args) -> int:
    from .experiment import check

    results = check(args.dir)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}\t{name}\t{detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK


def _cmd_train(args) -> int:
    from .learned import MlpDenoiser, TrainConfig, train
    from .schedule import linear_schedule
    from .synthdata import BlobImageSpec, make_dataset

    spec = BlobImageSpec(size=args.size)
    ds = make_dataset(spec, args.n_per_severity, rng=np.random.default_rng(args.data_seed))
    s = linear_schedule(args.T)
    m = MlpDenoiser(spec.size ** 2, 2, s.T, hidden=tuple(args.hidden), seed=args.seed)
    _, losses = train(m, ds.images, ds.labels, s,
                      TrainConfig(steps=args.steps, batch=args.batch, lr=args.lr, seed=args.seed))
    m.save(args.out)
    tail = losses[-min(200, len(losses)):]
    print(f"{args.out}\tsteps={len(losses)}\tfinal_loss={float(np.mean(tail)):.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pie", description="Progressive editing experiments on synthetic worlds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="override the config's output directory")
    r.set_defaults(func=_cmd_run)

    sw = sub.add_parser("sweep", help="sweep one named grid of the config")
    sw.add_argument("config")
    sw.add_argument("--grid", required=True, help="grid name: gamma, N, beta1, beta2 or mask")
    sw.add_argument("--out")
    sw.set_defaults(func=_cmd_sweep)

    rp = sub.add_parser("report", help="summarise a run or sweep directory")
    rp.add_argument("dir")
    rp.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    rp.set_defaults(func=_cmd_report)

    ck = sub.add_parser("check", help="apply trend and bound checks to a directory")
    ck.add_argument("dir")
    ck.set_defaults(func=_cmd_check)

    t = sub.add_parser("train", help="train the image-regime denoiser checkpoint")
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, default=3000)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--lr", type=float, default=0.2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--data-seed", type=int, default=0)
    t.add_argument("--n-per-severity", type=int, default=400)
    t.add_argument("--size", type=int, default=32)
    t.add_argument("--hidden", type=int, nargs=2, default=(256, 256), metavar=("H1", "H2"))
    t.add_argument("--T", type=int, default=50)
    t.set_defaults(func=_cmd_train)
    return p


def main(argv=None) -> int:
    from .experiment import ArtifactError, ConfigError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc.pointer or '/'}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
