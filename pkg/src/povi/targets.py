"""Target densities exposing log-density and score (grad log pi).

All targets are immutable after construction. Data-dependent targets accept an
optional ``batch`` of example indices; minibatch likelihood terms are rescaled
by N / |batch| so the stochastic score is an unbiased estimate of the
full-data score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .nnet import LayerSpec

LOG_2PI = np.log(2.0 * np.pi)


class ScoredDensity:
    """Interface: dimension, log_density(x) and score(x)."""

    dim: int

    def log_density(self, x, batch=None) -> float:
        raise NotImplementedError

    def score(self, x, batch=None) -> np.ndarray:
        raise NotImplementedError

    def score_all(self, particles: np.ndarray, batch=None) -> np.ndarray:
        """Scores for a whole ensemble, one row per particle."""
        return np.stack([self.score(x, batch=batch) for x in particles])

    @property
    def n_examples(self) -> int | None:
        """Number of data examples, or None for closed-form targets."""
        return None


@dataclass(frozen=True)
class GaussianMixture(ScoredDensity):
    """Isotropic Gaussian mixture with per-component variances."""

    centers: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,)
    variances: np.ndarray  # (m,)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (len(c) == len(w) == len(v) >= 1):
            raise ValueError("centers, weights, variances must have equal length >= 1")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a simplex vector")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _component_logs(self, x: np.ndarray) -> np.ndarray:
        diff = self.centers - x
        sq = np.einsum("md,md->m", diff, diff)
        return (
            np.log(self.weights)
            - 0.5 * self.dim * (LOG_2PI + np.log(self.variances))
            - 0.5 * sq / self.variances
        )

    def log_density(self, x, batch=None) -> float:
        logs = self._component_logs(np.asarray(x, dtype=float))
        m = logs.max()
        return float(m + np.log(np.exp(logs - m).sum()))

    def score(self, x, batch=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        logs = self._component_logs(x)
        resp = np.exp(logs - logs.max())
        resp /= resp.sum()
        return np.einsum("m,md->d", resp / self.variances, self.centers - x)

    def score_all(self, particles, batch=None) -> np.ndarray:
        x = np.asarray(particles, dtype=float)
        diff = self.centers[None, :, :] - x[:, None, :]  # (n, m, d)
        sq = np.einsum("nmd,nmd->nm", diff, diff)
        logs = (
            np.log(self.weights)
            - 0.5 * self.dim * (LOG_2PI + np.log(self.variances))
            - 0.5 * sq / self.variances
        )
        logs -= logs.max(axis=1, keepdims=True)
        resp = np.exp(logs)
        resp /= resp.sum(axis=1, keepdims=True)
        return np.einsum("nm,nmd->nd", resp / self.variances, diff)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draw; used as the oracle sample set in diagnostics."""
        comps = rng.choice(len(self.weights), size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.centers[comps] + np.sqrt(self.variances[comps])[:, None] * noise


def standard_normal(d: int) -> GaussianMixture:
    return GaussianMixture(np.zeros((1, d)), np.ones(1), np.ones(1))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class BayesLogReg(ScoredDensity):
    """Bayesian logistic regression posterior with a Gaussian prior."""

    features: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,) in {0, 1}
    prior_variance: float = 1.0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels)
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError("features and labels must have matching length >= 1")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0/1")
        if self.prior_variance <= 0:
            raise ValueError("prior_variance must be positive")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(float))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    def _batch(self, batch):
        if batch is None:
            return self.features, self.labels
        idx = np.asarray(batch, dtype=int)
        if idx.size == 0:
            raise ValueError("batch must be non-empty")
        return self.features[idx], self.labels[idx]

    def log_posterior_and_score(self, theta, batch=None):
        theta = np.asarray(theta, dtype=float)
        x, y = self._batch(batch)
        scale = self.n_examples / x.shape[0]
        z = x @ theta
        # log sigma(z) = -log(1 + e^{-z}), stable via logaddexp
        loglik = float(np.sum(y * -np.logaddexp(0.0, -z) + (1 - y) * -np.logaddexp(0.0, z)))
        grad_lik = x.T @ (y - _sigmoid(z))
        logp = scale * loglik - 0.5 * np.dot(theta, theta) / self.prior_variance
        grad = scale * grad_lik - theta / self.prior_variance
        return logp, grad

    def log_density(self, x, batch=None) -> float:
        return self.log_posterior_and_score(x, batch)[0]

    def score(self, x, batch=None) -> np.ndarray:
        return self.log_posterior_and_score(x, batch)[1]


@dataclass(frozen=True)
class BnnPosterior(ScoredDensity):
    """Classification BNN posterior: categorical likelihood + Gaussian prior.

    ``likelihood_weight`` is a test hook (0 isolates the prior term).
    """

    net: LayerSpec
    features: np.ndarray  # (N, in)
    labels: np.ndarray  # (N,) in [0, K)
    prior_variance: float = 0.1
    likelihood_weight: float = 1.0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=int)
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError("features and labels must have matching length >= 1")
        if x.shape[1] != self.net.sizes[0]:
            raise ValueError("feature dimension does not match the network input")
        if y.min() < 0 or y.max() >= self.net.n_classes:
            raise ValueError(f"labels must lie in [0, {self.net.n_classes})")
        if self.prior_variance <= 0:
            raise ValueError("prior_variance must be positive")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def dim(self) -> int:
        return self.net.n_params

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    def _batch(self, batch):
        if batch is None:
            return self.features, self.labels
        idx = np.asarray(batch, dtype=int)
        if idx.size == 0:
            raise ValueError("batch must be non-empty")
        return self.features[idx], self.labels[idx]

    def log_posterior_and_score(self, theta, batch=None):
        theta = np.asarray(theta, dtype=float)
        x, y = self._batch(batch)
        nll, grad_nll = nnet.backward_nll(self.net, theta, x, y)
        # mean NLL over the batch scales to the full-data log-likelihood sum
        n = self.n_examples * self.likelihood_weight
        logp = -n * nll - 0.5 * np.dot(theta, theta) / self.prior_variance
        grad = -n * grad_nll - theta / self.prior_variance
        return float(logp), grad

    def log_density(self, x, batch=None) -> float:
        return self.log_posterior_and_score(x, batch)[0]

    def score(self, x, batch=None) -> np.ndarray:
        return self.log_posterior_and_score(x, batch)[1]


def finite_diff_score(target: ScoredDensity, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of log_density; the test oracle for scores."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (target.log_density(hi) - target.log_density(lo)) / (2.0 * step)
    return out
