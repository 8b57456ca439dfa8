"""Particle ensemble lifecycle: init, Euler steps, phased runs, snapshots.

A run is a sequence of phases over one ensemble (e.g. an exploratory s-ERGD
warm start followed by an ERGD phase with a linear beta anneal). All particle
positions within a step update synchronously from the pre-step snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import BetaSchedule, UpdateRule, beta_at, velocity
from .kernels import KernelConfig, rbf_kernel_and_grad
from .targets import ScoredDensity


class DivergenceError(RuntimeError):
    """A velocity went non-finite; carries the partial trajectory."""

    def __init__(self, step_index: int, particle_index: int, trajectory=None):
        super().__init__(
            f"non-finite velocity at step {step_index}, particle {particle_index}"
        )
        self.step_index = step_index
        self.particle_index = particle_index
        self.trajectory = trajectory


@dataclass
class Ensemble:
    particles: np.ndarray  # (n, d)
    t: int
    rng: np.random.Generator

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def d(self) -> int:
        return self.particles.shape[1]


@dataclass(frozen=True)
class InitSpec:
    """Initial particle distribution.

    kinds: point (x0 plus Gaussian jitter), gaussian (mean, std),
    prior_samples (zero-mean Gaussian with the target prior's variance).
    """

    kind: str = "gaussian"
    x0: tuple | None = None  # point
    jitter: float = 0.0  # point
    mean: float = 0.0  # gaussian
    std: float = 1.0  # gaussian
    prior_variance: float = 0.1  # prior_samples

    def __post_init__(self):
        if self.kind not in ("point", "gaussian", "prior_samples"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "point" and (self.x0 is None or self.jitter < 0):
            raise ValueError("point init needs x0 and jitter >= 0")
        if self.kind == "gaussian" and self.std < 0:
            raise ValueError("gaussian init needs std >= 0")
        if self.kind == "prior_samples" and self.prior_variance <= 0:
            raise ValueError("prior_samples init needs prior_variance > 0")


def init_ensemble(n: int, d: int, init: InitSpec, seed: int) -> Ensemble:
    if n < 1:
        raise ValueError("need at least one particle")
    rng = np.random.default_rng(seed)
    if init.kind == "point":
        x0 = np.asarray(init.x0, dtype=float)
        if x0.shape != (d,):
            raise ValueError(f"x0 must have dimension {d}")
        particles = x0 + init.jitter * rng.standard_normal((n, d))
    elif init.kind == "gaussian":
        particles = init.mean + init.std * rng.standard_normal((n, d))
    else:
        particles = np.sqrt(init.prior_variance) * rng.standard_normal((n, d))
    return Ensemble(particles=particles, t=0, rng=rng)


@dataclass(frozen=True)
class StepConfig:
    """One phase of a run: rule, step size, length, kernel, batching."""

    rule: UpdateRule
    learning_rate: float
    steps: int
    kernel: KernelConfig = field(default_factory=KernelConfig)
    batch_size: int | None = None
    snapshot_stride: int = 100

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be positive")


@dataclass(frozen=True)
class RunPlan:
    n: int
    d: int
    init: InitSpec
    phases: tuple[StepConfig, ...]
    seed: int = 0


@dataclass(frozen=True)
class Snapshot:
    step: int
    particles: np.ndarray
    beta: float  # nan for rules without an explicit beta


@dataclass
class Trajectory:
    snapshots: list[Snapshot] = field(default_factory=list)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


def _draw_batch(ensemble: Ensemble, target: ScoredDensity, cfg: StepConfig):
    n_ex = target.n_examples
    if cfg.batch_size is None or n_ex is None or cfg.batch_size >= n_ex:
        return None
    return ensemble.rng.choice(n_ex, size=cfg.batch_size, replace=False)


def step(
    ensemble: Ensemble, target: ScoredDensity, cfg: StepConfig, beta: float
) -> Ensemble:
    """One synchronous Euler step; raises DivergenceError on non-finite velocity."""
    x = ensemble.particles
    if ensemble.n >= 2:
        h = cfg.kernel.bandwidth.resolve(x)
    else:
        h = cfg.kernel.bandwidth.h if cfg.kernel.bandwidth.mode == "fixed" else 1.0
    # overflow on a diverging ensemble surfaces as the DivergenceError below
    with np.errstate(over="ignore", invalid="ignore"):
        k, grad_k = rbf_kernel_and_grad(x, h)
        batch = _draw_batch(ensemble, target, cfg)
        scores = target.score_all(x, batch=batch)
        v = velocity(cfg.rule, x, scores, k, grad_k, beta)
    bad = ~np.all(np.isfinite(v), axis=1)
    if bad.any():
        raise DivergenceError(ensemble.t, int(np.argmax(bad)))
    ensemble.particles = x + cfg.learning_rate * v
    ensemble.t += 1
    return ensemble


def phase_beta(cfg: StepConfig, t: int) -> float:
    """Beta used at phase-local step t; nan for rules with no explicit beta."""
    if cfg.rule.beta is None:
        return float("nan")
    return beta_at(cfg.rule.beta, t, cfg.steps)


def run(plan: RunPlan, target: ScoredDensity) -> Trajectory:
    """Execute all phases; on divergence the partial trajectory rides the error."""
    ensemble = init_ensemble(plan.n, plan.d, plan.init, plan.seed)
    traj = Trajectory()
    first_beta = phase_beta(plan.phases[0], 0) if plan.phases else float("nan")
    traj.snapshots.append(Snapshot(0, ensemble.particles.copy(), first_beta))
    for cfg in plan.phases:
        if ensemble.d != plan.d:
            raise ValueError("phases must preserve particle dimension")
        for t in range(cfg.steps):
            beta = phase_beta(cfg, t)
            try:
                step(ensemble, target, cfg, beta)
            except DivergenceError as err:
                err.trajectory = traj
                raise
            if ensemble.t % cfg.snapshot_stride == 0:
                # label with beta at the post-step phase time
                traj.snapshots.append(
                    Snapshot(ensemble.t, ensemble.particles.copy(), phase_beta(cfg, t + 1))
                )
    if not traj.snapshots or traj.snapshots[-1].step != ensemble.t:
        last_cfg = plan.phases[-1] if plan.phases else None
        beta = phase_beta(last_cfg, last_cfg.steps) if last_cfg else float("nan")
        traj.snapshots.append(Snapshot(ensemble.t, ensemble.particles.copy(), beta))
    return traj
