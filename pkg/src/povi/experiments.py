"""Config-driven experiment drivers shared by the CLI and the test suite."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import diagnostics, io
from .dynamics import BetaSchedule, UpdateRule
from .engine import InitSpec, RunPlan, StepConfig, Trajectory, run
from .io import ConfigError, RunConfig, RunReport
from .kernels import Bandwidth, KernelConfig, median_heuristic
from .nnet import LayerSpec
from .targets import BnnPosterior, GaussianMixture, standard_normal

RULE_NAMES = {"svgd": "svgd", "kde-wgd": "kde_wgd", "ergd": "ergd", "s-ergd": "s_ergd"}


def _beta_schedule(spec: dict | None) -> BetaSchedule | None:
    if spec is None:
        return None
    return BetaSchedule(
        kind=spec["kind"],
        value=float(spec["value"]),
        start=float(spec["start"]),
        beta_max=float(spec["beta_max"]),
        period=int(spec["period"]),
        sharpness=float(spec["sharpness"]),
    )


def _kernel_config(cfg: RunConfig) -> KernelConfig:
    bw = cfg["kernel"]["bandwidth"]
    if bw == "median":
        return KernelConfig(bandwidth=Bandwidth(mode="median"))
    return KernelConfig(bandwidth=Bandwidth(mode="fixed", h=float(bw)))


def _init_spec(cfg: RunConfig) -> InitSpec:
    init = cfg["init"]
    return InitSpec(
        kind=init["kind"],
        x0=tuple(init["x0"]) if init["x0"] is not None else None,
        jitter=float(init["jitter"]),
        mean=float(init["mean"]),
        std=float(init["std"]),
        prior_variance=float(init["prior_variance"]),
    )


def build_plan(cfg: RunConfig, dimension: int) -> RunPlan:
    kernel = _kernel_config(cfg)
    phases = []
    for phase in cfg["phase"]:
        variant = RULE_NAMES.get(phase["rule"], phase["rule"])
        rule = UpdateRule(variant=variant, beta=_beta_schedule(phase["beta"]))
        phases.append(
            StepConfig(
                rule=rule,
                learning_rate=float(phase["learning_rate"]),
                steps=int(phase["steps"]),
                kernel=kernel,
                batch_size=phase["batch_size"],
                snapshot_stride=int(phase["snapshot_stride"]),
            )
        )
    return RunPlan(
        n=cfg["particles"],
        d=dimension,
        init=_init_spec(cfg),
        phases=tuple(phases),
        seed=cfg["seed"],
    )


def apply_overrides(cfg: RunConfig, seed=None, steps=None, rule=None, beta=None) -> RunConfig:
    """CLI overrides; steps = 0 drops all phases (initial snapshot only)."""
    out = RunConfig({k: v for k, v in cfg.items()})
    out["phase"] = [dict(p) for p in cfg["phase"]]
    if seed is not None:
        out["seed"] = int(seed)
    if rule is not None:
        if rule not in RULE_NAMES:
            raise ConfigError(f"unknown rule {rule!r}")
        for phase in out["phase"]:
            phase["rule"] = rule
            if RULE_NAMES[rule] not in ("ergd", "s_ergd"):
                phase["beta"] = None
    if beta is not None:
        for phase in out["phase"]:
            if RULE_NAMES.get(phase["rule"], phase["rule"]) in ("ergd", "s_ergd"):
                phase["beta"] = dict(io._BETA_DEFAULTS, kind="constant", value=float(beta))
    if steps is not None:
        if steps == 0:
            out["phase"] = []
        else:
            for phase in out["phase"]:
                phase["steps"] = int(steps)
    return out


def build_closed_form_target(cfg: RunConfig):
    target_cfg = cfg["target"]
    kind = target_cfg["kind"]
    if kind == "gaussian_mixture":
        return GaussianMixture(
            np.asarray(target_cfg["centers"], dtype=float),
            np.asarray(target_cfg["weights"], dtype=float),
            np.asarray(target_cfg["variances"], dtype=float),
        )
    if kind == "standard_normal":
        return standard_normal(int(target_cfg["dimension"]))
    raise ConfigError(f"target kind {kind!r} is not a closed-form density")


def run_sample(cfg: RunConfig):
    """Mixture/normal sampling experiment: trajectory + mode/MMD diagnostics."""
    start = time.perf_counter()
    target = build_closed_form_target(cfg)
    plan = build_plan(cfg, target.dim)
    traj = run(plan, target)

    diag_cfg = cfg["diagnostics"]
    oracle_rng = np.random.default_rng(diag_cfg["oracle_seed"])
    oracle = target.sample(int(diag_cfg["mmd_samples"]), oracle_rng)
    final = traj.final.particles
    bw = diag_cfg["mmd_bandwidth"]
    h = median_heuristic(np.vstack([final, oracle])) if bw == "median" else float(bw)

    metrics: dict = {"mmd2": diagnostics.mmd2(final, oracle, h)}
    snapshots = []
    if cfg["target"]["kind"] == "gaussian_mixture":
        centers = np.asarray(cfg["target"]["centers"], dtype=float)
        radius = float(diag_cfg["mode_radius"])
        threshold = float(diag_cfg["mode_threshold"])
        report = diagnostics.mode_coverage(final, centers, radius, threshold)
        metrics["mode_report"] = report.to_dict()
        metrics["n_covered"] = report.n_covered
        for snap in traj.snapshots:
            cov = diagnostics.mode_coverage(snap.particles, centers, radius, threshold)
            snapshots.append(
                {"step": snap.step, "beta": snap.beta, "n_covered": cov.n_covered}
            )
    else:
        snapshots = [{"step": s.step, "beta": s.beta} for s in traj.snapshots]

    report = RunReport(
        config=cfg,
        metrics=metrics,
        snapshots=snapshots,
        wall_clock=time.perf_counter() - start,
        seed=cfg["seed"],
    )
    return report, traj


def build_bnn_problem(cfg: RunConfig):
    """Returns (posterior target, layer spec, test set, ood inputs)."""
    t = cfg["target"]
    if t["kind"] == "two_moons_bnn":
        data_seed = int(t["data_seed"])
        train = io.two_moons(int(t["n_train"]), float(t["noise"]), data_seed)
        test = io.two_moons(int(t["n_test"]), float(t["noise"]), data_seed + 1)
        spec = LayerSpec((2, *[int(s) for s in t["hidden"]], 2), t["activation"])
        rng = np.random.default_rng(data_seed + 2)
        # far-field ring around the moons' centroid
        radius = float(t["ood_radius"]) + rng.uniform(0.0, 1.0, int(t["ood_count"]))
        angle = rng.uniform(0.0, 2.0 * np.pi, int(t["ood_count"]))
        ood = np.column_stack(
            [0.5 + radius * np.cos(angle), 0.25 + radius * np.sin(angle)]
        )
    elif t["kind"] == "bnn_idx":
        train = io.load_idx_dataset(
            t["train_images"], t["train_labels"], t["subsample"], cfg["seed"]
        )
        test = io.load_idx_dataset(
            t["test_images"], t["test_labels"], t["subsample"], cfg["seed"] + 1
        )
        n_classes = int(train.labels.max()) + 1
        spec = LayerSpec(
            (train.features.shape[1], *[int(s) for s in t["hidden"]], n_classes),
            t["activation"],
        )
        if t["ood_images"] is not None:
            ood = io.parse_idx(t["ood_images"]).reshape(-1, train.features.shape[1])
        else:
            rng = np.random.default_rng(cfg["seed"] + 7)
            ood = rng.uniform(0.0, 1.0, (256, train.features.shape[1]))
    else:
        raise ConfigError(f"target kind {t['kind']!r} is not a BNN problem")

    posterior = BnnPosterior(
        net=spec,
        features=train.features,
        labels=train.labels,
        prior_variance=float(t["prior_variance"]),
    )
    return posterior, spec, test, ood


def run_train_bnn(cfg: RunConfig, with_baseline: bool = True):
    """Train a particle BNN ensemble and evaluate diversity metrics."""
    start = time.perf_counter()
    posterior, spec, test, ood = build_bnn_problem(cfg)
    plan = build_plan(cfg, posterior.dim)
    traj = run(plan, posterior)
    members = list(traj.final.particles)
    evaluation = diagnostics.ensemble_eval(members, spec, test.features, test.labels, ood)
    metrics = evaluation.to_dict()

    if with_baseline:
        base_cfg = RunConfig({k: v for k, v in cfg.items()})
        base_cfg["particles"] = 1
        base_cfg["phase"] = [dict(p, rule="s-ergd") for p in cfg["phase"]]
        base_plan = build_plan(base_cfg, posterior.dim)
        base_traj = run(base_plan, posterior)
        base_eval = diagnostics.ensemble_eval(
            list(base_traj.final.particles), spec, test.features, test.labels, ood
        )
        metrics["baseline_accuracy"] = base_eval.accuracy

    report = RunReport(
        config=cfg,
        metrics=metrics,
        snapshots=[{"step": s.step, "beta": s.beta} for s in traj.snapshots],
        wall_clock=time.perf_counter() - start,
        seed=cfg["seed"],
    )
    return report, traj


# --- gradcheck -------------------------------------------------------------


def gradcheck_registry():
    """Named (target, point) pairs covering every analytic score."""
    from . import nnet
    from .targets import BayesLogReg

    rng = np.random.default_rng(7)
    entries = []

    gm = GaussianMixture(
        np.array([[213.0, 200.0], [180.0, 200.0], [200.0, 210.0], [200.0, 190.0]]),
        np.array([0.6, 0.3, 0.05, 0.05]),
        np.ones(4),
    )
    entries.append(("gaussian_mixture", gm, np.array([205.0, 201.0])))

    x = rng.standard_normal((8, 3))
    y = (rng.uniform(size=8) < 0.5).astype(int)
    blr = BayesLogReg(x, y, prior_variance=1.0)
    entries.append(("bayes_logreg", blr, rng.standard_normal(3) * 0.5))

    spec = LayerSpec((2, 4, 3))
    feats = rng.standard_normal((5, 2))
    labels = rng.integers(0, 3, size=5)
    bnn = BnnPosterior(spec, feats, labels, prior_variance=0.5)
    entries.append(("bnn_posterior", bnn, 0.3 * rng.standard_normal(bnn.dim)))
    return entries


def gradcheck(step: float = 1e-5, inject_sign_flip: str | None = None):
    """Max relative error of each analytic score vs central finite differences.

    ``inject_sign_flip`` is a fault-injection hook used by tests.
    Returns a list of (name, max_rel_err, passed).
    """
    from . import nnet
    from .targets import finite_diff_score

    entries = gradcheck_registry()
    if not entries:
        raise ValueError("gradcheck registry is empty")
    results = []
    for name, target, point in entries:
        analytic = target.score(point)
        if inject_sign_flip == name:
            analytic = -analytic
        numeric = finite_diff_score(target, point, step)
        denom = max(float(np.linalg.norm(numeric)), 1e-12)
        err = float(np.linalg.norm(analytic - numeric)) / denom
        results.append((name, err, err < 1e-5))

    # nnet backward against finite differences of the mean NLL
    spec = LayerSpec((2, 4, 3))
    rng = np.random.default_rng(11)
    theta = 0.3 * rng.standard_normal(spec.n_params)
    x = rng.standard_normal((5, 2))
    y = rng.integers(0, 3, size=5)
    _, grad = nnet.backward_nll(spec, theta, x, y)
    if inject_sign_flip == "nnet_backward":
        grad = -grad
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        hi, lo = theta.copy(), theta.copy()
        hi[i] += step
        lo[i] -= step
        numeric[i] = (
            nnet.backward_nll(spec, hi, x, y)[0] - nnet.backward_nll(spec, lo, x, y)[0]
        ) / (2 * step)
    err = float(np.linalg.norm(grad - numeric)) / max(float(np.linalg.norm(numeric)), 1e-12)
    results.append(("nnet_backward", err, err < 1e-5))
    return results


# --- compare ---------------------------------------------------------------


def _worker_count(n_cells: int) -> int:
    env = os.environ.get("POVI_THREADS")
    cap = int(env) if env else 1
    return max(1, min(cap, n_cells))


def compare(cfg: RunConfig, rules: list[str], seeds: list[int]):
    """Run every (rule, seed) cell and aggregate metrics per rule."""
    if not rules or not seeds:
        raise ConfigError("compare needs at least one rule and one seed")
    is_bnn = cfg["target"]["kind"] in ("two_moons_bnn", "bnn_idx")

    def cell(rule: str, seed: int):
        run_cfg = apply_overrides(cfg, seed=seed, rule=rule)
        try:
            if is_bnn:
                report, _ = run_train_bnn(run_cfg, with_baseline=False)
            else:
                report, _ = run_sample(run_cfg)
            return {"ok": True, "metrics": report.metrics}
        except Exception as exc:  # cell failures recorded, aggregation continues
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}

    cells = [(rule, seed) for rule in rules for seed in seeds]
    with ThreadPoolExecutor(max_workers=_worker_count(len(cells))) as pool:
        outcomes = list(pool.map(lambda rs: cell(*rs), cells))

    results: dict[str, dict] = {}
    columns = (
        ["accuracy", "nll", "entropy_ratio", "md_ratio"]
        if is_bnn
        else ["mmd2", "n_covered"]
    )
    for rule in rules:
        per_seed = [
            outcomes[i]
            for i, (r, _) in enumerate(cells)
            if r == rule
        ]
        agg: dict = {"failures": [o["error"] for o in per_seed if not o["ok"]]}
        for col in columns:
            values = [
                o["metrics"][col]
                for o in per_seed
                if o["ok"] and o["metrics"].get(col) is not None
            ]
            if values:
                agg[col] = {
                    "mean": float(np.mean(values)),
                    "std": float(np.std(values)),
                }
            else:
                agg[col] = None
        results[rule] = agg
    return results, columns


COLUMN_TITLES = {
    "accuracy": "Accuracy",
    "nll": "NLL",
    "entropy_ratio": "Ho/Ht",
    "md_ratio": "MDo/MDt",
    "mmd2": "MMD^2",
    "n_covered": "Modes",
}


def format_compare_table(results: dict, columns: list[str]) -> str:
    headers = ["Method"] + [COLUMN_TITLES[c] for c in columns]
    rows = []
    for rule, agg in results.items():
        row = [rule]
        for col in columns:
            stat = agg[col]
            row.append("-" if stat is None else f"{stat['mean']:.3f} +/- {stat['std']:.3f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
