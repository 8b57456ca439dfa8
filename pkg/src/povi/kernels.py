"""RBF kernels over particle ensembles: evaluation, gradients, bandwidth selection.

The kernel scale ``h`` divides the squared Euclidean distance directly,
k(x, x') = exp(-||x - x'||^2 / h), so the median-heuristic bandwidth is
med^2 / max(ln n, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Floor for degenerate (all-coincident) ensembles; keeps repulsion finite.
MIN_BANDWIDTH = 1e-12


@dataclass(frozen=True)
class Bandwidth:
    """Bandwidth rule: a fixed positive value or the median heuristic."""

    mode: str = "median"  # "median" | "fixed"
    h: float | None = None

    def __post_init__(self):
        if self.mode not in ("median", "fixed"):
            raise ValueError(f"unknown bandwidth mode {self.mode!r}")
        if self.mode == "fixed":
            if self.h is None or self.h <= 0:
                raise ValueError("fixed bandwidth requires h > 0")

    def resolve(self, particles: np.ndarray) -> float:
        if self.mode == "fixed":
            return float(self.h)
        return median_heuristic(particles)


@dataclass(frozen=True)
class KernelConfig:
    family: str = "rbf"
    bandwidth: Bandwidth = field(default_factory=Bandwidth)

    def __post_init__(self):
        if self.family != "rbf":
            raise ValueError(f"unsupported kernel family {self.family!r}")


def _check_pair(x: np.ndarray, x2: np.ndarray, h: float) -> None:
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")


def rbf_eval(x, x2, h: float) -> float:
    """k(x, x') = exp(-||x - x'||^2 / h), in (0, 1]."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    _check_pair(x, x2, h)
    diff = x - x2
    return float(np.exp(-np.dot(diff, diff) / h))


def rbf_grad_first(x, x2, h: float) -> np.ndarray:
    """Gradient of rbf_eval with respect to its first argument.

    grad_x k(x, x') = -(2/h) (x - x') k(x, x'); antisymmetric under swapping
    the arguments.
    """
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    _check_pair(x, x2, h)
    diff = x - x2
    return -(2.0 / h) * diff * np.exp(-np.dot(diff, diff) / h)


def pairwise_sq_dists(particles: np.ndarray) -> np.ndarray:
    """Dense n x n matrix of squared Euclidean distances."""
    x = np.asarray(particles, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def median_heuristic(particles: np.ndarray) -> float:
    """med^2 / max(ln n, 1) over all pairwise distances, clamped to >= 1e-12."""
    x = np.asarray(particles, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least 2 particles")
    sq = pairwise_sq_dists(x)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(sq[iu])))
    h = med * med / max(np.log(n), 1.0)
    return max(h, MIN_BANDWIDTH)


def kernel_matrix(particles: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Symmetric kernel Gram matrix with unit diagonal."""
    x = np.asarray(particles, dtype=float)
    h = cfg.bandwidth.resolve(x) if x.shape[0] >= 2 else (
        cfg.bandwidth.h if cfg.bandwidth.mode == "fixed" else 1.0
    )
    k = np.exp(-pairwise_sq_dists(x) / h)
    np.fill_diagonal(k, 1.0)
    return k


def rbf_kernel_and_grad(particles: np.ndarray, h: float):
    """Gram matrix K and the pair gradients G[i, j] = grad_{x_i} k(x_i, x_j).

    Returns (K, G) with K of shape (n, n) and G of shape (n, n, d).
    """
    x = np.asarray(particles, dtype=float)
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    diff = x[:, None, :] - x[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    k = np.exp(-sq / h)
    grad = -(2.0 / h) * diff * k[:, :, None]
    return k, grad
