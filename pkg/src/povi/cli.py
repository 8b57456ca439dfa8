"""Command-line harness.

Subcommands: sample, train-bnn, eval, gradcheck, compare.
Exit codes: 0 success, 1 numerical divergence / failed check, 2 usage or
config or data error. POVI_THREADS caps compare's worker parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, experiments, io
from .engine import DivergenceError
from .io import ConfigError, IdxFormatError
from .kernels import median_heuristic

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_USAGE = 2


def _load_config(path: str) -> io.RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return io.parse_run_config(text)


def _overridden(args) -> io.RunConfig:
    cfg = _load_config(args.config)
    return experiments.apply_overrides(
        cfg, seed=args.seed, steps=args.steps, rule=args.rule, beta=args.beta
    )


def _out_dir(args, cfg) -> Path:
    out = Path(args.out) if args.out else Path(cfg["name"] + "_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample(args) -> int:
    cfg = _overridden(args)
    out = _out_dir(args, cfg)
    try:
        report, traj = experiments.run_sample(cfg)
    except DivergenceError as exc:
        if exc.trajectory is not None:
            io.dump_trajectory_csv(exc.trajectory, out / "trajectory.csv")
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    io.dump_trajectory_csv(traj, out / "trajectory.csv")
    io.write_report(report, out / "report.json")
    print(json.dumps(report.metrics, indent=2, default=io._json_default))
    return EXIT_OK


def cmd_train_bnn(args) -> int:
    cfg = _overridden(args)
    out = _out_dir(args, cfg)
    try:
        report, traj = experiments.run_train_bnn(cfg)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    io.write_report(report, out / "report.json")
    io.dump_trajectory_csv(traj, out / "trajectory.csv")
    print(json.dumps(report.metrics, indent=2, default=io._json_default))
    return EXIT_OK


def cmd_eval(args) -> int:
    """Re-evaluate a saved trajectory's final snapshot against its config."""
    cfg = _load_config(args.config)
    traj = io.load_trajectory_csv(args.trajectory)
    final = traj.final.particles
    diag = cfg["diagnostics"]
    target = experiments.build_closed_form_target(cfg)
    oracle = target.sample(
        int(diag["mmd_samples"]), np.random.default_rng(diag["oracle_seed"])
    )
    bw = diag["mmd_bandwidth"]
    h = median_heuristic(np.vstack([final, oracle])) if bw == "median" else float(bw)
    metrics = {"mmd2": diagnostics.mmd2(final, oracle, h)}
    if cfg["target"]["kind"] == "gaussian_mixture":
        report = diagnostics.mode_coverage(
            final,
            np.asarray(cfg["target"]["centers"], dtype=float),
            float(diag["mode_radius"]),
            float(diag["mode_threshold"]),
        )
        metrics["mode_report"] = report.to_dict()
        metrics["n_covered"] = report.n_covered
    print(json.dumps(metrics, indent=2, default=io._json_default))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = experiments.gradcheck()
    width = max(len(name) for name, _, _ in results)
    ok = True
    for name, err, passed in results:
        print(f"{name.ljust(width)}  max_rel_err={err:.3e}  {'PASS' if passed else 'FAIL'}")
        ok &= passed
    return EXIT_OK if ok else EXIT_DIVERGED


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    results, columns = experiments.compare(cfg, rules, seeds)
    table = experiments.format_compare_table(results, columns)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.json", "w") as f:
            json.dump({"results": results, "columns": columns}, f, indent=2)
        (out / "compare.txt").write_text(table + "\n")
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run config (TOML)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rule", choices=sorted(experiments.RULE_NAMES), default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--steps", type=int, default=None, help="0 = initial snapshot only")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="povi")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run a closed-form sampling experiment")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("train-bnn", help="train a particle BNN ensemble")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_train_bnn)

    p = sub.add_parser("eval", help="re-evaluate a saved trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--trajectory", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="check all analytic scores vs finite differences")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("compare", help="aggregate metrics over rules and seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--rules", default="ergd,svgd")
    p.add_argument("--seeds", default="0")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, IdxFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
