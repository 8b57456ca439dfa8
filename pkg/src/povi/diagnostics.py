"""Quantitative evaluation: mode coverage, MMD, and ensemble metrics.

Ensemble metrics follow the usual uncertainty-quantification readouts:
Bayesian-model-average accuracy and NLL on a test set, mean predictive
entropy on test and out-of-distribution inputs (nats) and their ratio, and
mean pairwise argmax disagreement (MD) with its OOD/test ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnet
from .nnet import LayerSpec


@dataclass(frozen=True)
class ModeReport:
    """Particle fractions near each center plus an unassigned bucket."""

    fractions: np.ndarray  # one entry per center
    unassigned: float
    covered: np.ndarray  # bool per center

    @property
    def n_covered(self) -> int:
        return int(self.covered.sum())

    def to_dict(self) -> dict:
        return {
            "fractions": [float(f) for f in self.fractions],
            "unassigned": float(self.unassigned),
            "covered": [bool(c) for c in self.covered],
            "n_covered": self.n_covered,
        }


def mode_coverage(particles, centers, radius: float, threshold: float) -> ModeReport:
    """Assign each particle to its nearest center if within radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(particles, dtype=float)
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    dists = np.linalg.norm(x[:, None, :] - c[None, :, :], axis=2)
    nearest = dists.argmin(axis=1)
    within = dists[np.arange(len(x)), nearest] <= radius
    counts = np.bincount(nearest[within], minlength=len(c))
    fractions = counts / len(x)
    return ModeReport(
        fractions=fractions,
        unassigned=float(1.0 - fractions.sum()),
        covered=fractions >= threshold,
    )


def mmd2(x_samples, y_samples, h: float) -> float:
    """Unbiased squared maximum mean discrepancy with an RBF kernel."""
    x = np.atleast_2d(np.asarray(x_samples, dtype=float))
    y = np.atleast_2d(np.asarray(y_samples, dtype=float))
    if len(x) < 2 or len(y) < 2:
        raise ValueError("mmd2 needs at least 2 samples on each side")

    def gram(a, b):
        diff = a[:, None, :] - b[None, :, :]
        return np.exp(-np.einsum("ijk,ijk->ij", diff, diff) / h)

    kxx = gram(x, x)
    kyy = gram(y, y)
    kxy = gram(x, y)
    n, m = len(x), len(y)
    term_x = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def bma_predict(members, spec: LayerSpec, x) -> np.ndarray:
    """Mean softmax over ensemble members; rows are valid distributions."""
    members = list(members)
    if not members:
        raise ValueError("need at least one member")
    probs = np.zeros((np.atleast_2d(x).shape[0], spec.n_classes))
    for theta in members:
        probs += nnet.softmax_rows(nnet.forward(spec, theta, x))
    return probs / len(members)


def _mean_entropy(probs: np.ndarray) -> float:
    # p log p -> 0 as p -> 0, so zero-probability entries contribute nothing
    p = np.asarray(probs, dtype=float)
    safe = np.where(p > 0, p, 1.0)
    return float(np.mean(-(p * np.log(safe)).sum(axis=1)))


def _mean_disagreement(members, spec, x) -> float:
    """Mean over inputs of the fraction of disagreeing ordered member pairs."""
    preds = np.stack(
        [nnet.forward(spec, theta, x).argmax(axis=1) for theta in members]
    )  # (M, B)
    m = preds.shape[0]
    if m < 2:
        return 0.0
    agree = (preds[:, None, :] == preds[None, :, :]).sum(axis=(0, 1)) - m
    return float(np.mean(1.0 - agree / (m * (m - 1))))


@dataclass(frozen=True)
class EnsembleEval:
    accuracy: float
    nll: float
    entropy_test: float
    entropy_ood: float
    md_test: float
    md_ood: float
    entropy_ratio: float | None  # Ho/Ht; None when the denominator is 0
    md_ratio: float | None  # MDo/MDt; None when the denominator is 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "nll": self.nll,
            "entropy_test": self.entropy_test,
            "entropy_ood": self.entropy_ood,
            "md_test": self.md_test,
            "md_ood": self.md_ood,
            "entropy_ratio": self.entropy_ratio,
            "md_ratio": self.md_ratio,
        }


def ensemble_eval(members, spec: LayerSpec, test_x, test_y, ood_x) -> EnsembleEval:
    members = list(members)
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    ood_x = np.atleast_2d(np.asarray(ood_x, dtype=float))
    test_y = np.asarray(test_y, dtype=int)
    if len(test_x) == 0 or len(ood_x) == 0:
        raise ValueError("test and ood sets must be non-empty")

    probs_test = bma_predict(members, spec, test_x)
    probs_ood = bma_predict(members, spec, ood_x)
    accuracy = float(np.mean(probs_test.argmax(axis=1) == test_y))
    nll = float(
        -np.mean(np.log(np.clip(probs_test[np.arange(len(test_y)), test_y], 1e-300, None)))
    )
    h_test = _mean_entropy(probs_test)
    h_ood = _mean_entropy(probs_ood)
    md_test = _mean_disagreement(members, spec, test_x)
    md_ood = _mean_disagreement(members, spec, ood_x)
    return EnsembleEval(
        accuracy=accuracy,
        nll=nll,
        entropy_test=h_test,
        entropy_ood=h_ood,
        md_test=md_test,
        md_ood=md_ood,
        entropy_ratio=(h_ood / h_test) if h_test > 0 else None,
        md_ratio=(md_ood / md_test) if md_test > 0 else None,
    )
