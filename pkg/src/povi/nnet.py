"""Minimal feed-forward classifier with hand-rolled reverse-mode gradients.

Parameters live in a single flat vector so each network is one particle.
Packing order is per layer: weight matrix row-major, then bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths [in, h1, ..., K] plus the hidden activation."""

    sizes: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s < 1 for s in self.sizes):
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]


def unpack(spec: LayerSpec, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flat vector -> list of (W, b) views, one per layer."""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {flat.shape}")
    layers = []
    off = 0
    for a, b in zip(spec.sizes[:-1], spec.sizes[1:]):
        w = flat[off : off + a * b].reshape(a, b)
        off += a * b
        bias = flat[off : off + b]
        off += b
        layers.append((w, bias))
    return layers


def pack(spec: LayerSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=float).ravel())
        parts.append(np.asarray(b, dtype=float).ravel())
    flat = np.concatenate(parts)
    if flat.shape != (spec.n_params,):
        raise ValueError("layer shapes inconsistent with spec")
    return flat


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(a: np.ndarray, z: np.ndarray, kind: str) -> np.ndarray:
    return 1.0 - a * a if kind == "tanh" else (z > 0).astype(float)


def _forward_cached(spec, flat, x):
    layers = unpack(spec, flat)
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != spec.sizes[0]:
        raise ValueError(f"input must be (B, {spec.sizes[0]}), got {a.shape}")
    pre, post = [], [a]
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = _act(z, spec.activation) if i < len(layers) - 1 else z
        post.append(a)
    return a, layers, pre, post


def forward(spec: LayerSpec, flat: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batch of logits, shape (B, K)."""
    logits, *_ = _forward_cached(spec, flat, x)
    return logits


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to 1."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def backward_nll(spec: LayerSpec, flat, x, labels):
    """Mean cross-entropy of softmax(logits) and its gradient w.r.t. flat.

    Returns (nll, grad) with grad of shape (n_params,).
    """
    labels = np.asarray(labels)
    logits, layers, pre, post = _forward_cached(spec, flat, x)
    bsz, k = logits.shape
    if labels.shape != (bsz,):
        raise ValueError(f"labels must be ({bsz},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    probs = softmax_rows(logits)
    nll = -float(np.mean(np.log(probs[np.arange(bsz), labels])))

    delta = probs.copy()
    delta[np.arange(bsz), labels] -= 1.0
    delta /= bsz
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        grads[i] = (post[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ layers[i][0].T) * _act_grad(
                post[i], pre[i - 1], spec.activation
            )
    return nll, pack(spec, grads)


def init_params(spec: LayerSpec, rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
    """Gaussian parameter draw, matching a Normal(0, scale) prior variance."""
    return rng.normal(0.0, np.sqrt(scale), size=spec.n_params)
