"""Data ingestion, run-config parsing, and result serialization.

Covers IDX image/label files (big-endian, as distributed for FMNIST-style
datasets), the seeded two-moons generator, TOML run configs with strict
unknown-key rejection, JSON run reports, and full-precision trajectory CSVs.
"""

from __future__ import annotations

import csv
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .engine import Snapshot, Trajectory

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
# guards against absurd dimension fields in corrupt headers
MAX_IDX_ELEMENTS = 1 << 31


class IdxFormatError(ValueError):
    """Malformed IDX payload; message carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(ValueError):
    pass


def _read_be32(buf: bytes, offset: int) -> int:
    if offset + 4 > len(buf):
        raise IdxFormatError("truncated header", offset)
    return struct.unpack_from(">I", buf, offset)[0]


def parse_idx_bytes(buf: bytes) -> np.ndarray:
    """Decode an IDX byte string: images to float in [0, 1], labels to int."""
    magic = _read_be32(buf, 0)
    if magic == IDX_IMAGE_MAGIC:
        ndim = 3
    elif magic == IDX_LABEL_MAGIC:
        ndim = 1
    else:
        raise IdxFormatError(f"bad magic 0x{magic:08x}", 0)
    dims = []
    offset = 4
    for _ in range(ndim):
        dims.append(_read_be32(buf, offset))
        offset += 4
    count = int(np.prod(dims, dtype=np.int64)) if dims else 0
    if count < 0 or count > MAX_IDX_ELEMENTS:
        raise IdxFormatError(f"dimension overflow {dims}", 4)
    if len(buf) - offset != count:
        raise IdxFormatError(
            f"payload has {len(buf) - offset} bytes, expected {count}", offset
        )
    data = np.frombuffer(buf, dtype=np.uint8, offset=offset).reshape(dims)
    if magic == IDX_IMAGE_MAGIC:
        return data.astype(float) / 255.0
    return data.astype(int)


def parse_idx(path) -> np.ndarray:
    with open(path, "rb") as f:
        return parse_idx_bytes(f.read())


def write_idx_images(path, images: np.ndarray) -> None:
    """Inverse of parse_idx for 3-D uint8 image tensors; used for desk-scale data."""
    images = np.asarray(images)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise ValueError("images must be a 3-D uint8 tensor")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,)
    name: str = ""
    source: str = ""
    normalization: str = "none"

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels must have matching length")


def two_moons(n: int, noise: float, seed: int) -> Dataset:
    """Interleaved half-circles with Gaussian noise; balanced binary classes."""
    if n < 2:
        raise ValueError("need at least 2 points")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    features = np.vstack([upper, lower]) + noise * rng.standard_normal((n, 2))
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    return Dataset(features, labels, name="two_moons", normalization="none")


def load_idx_dataset(images_path, labels_path, subsample=None, seed=0) -> Dataset:
    images = parse_idx(images_path)
    labels = parse_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError("image/label counts differ", 4)
    features = images.reshape(images.shape[0], -1)
    if subsample is not None and subsample < features.shape[0]:
        idx = np.random.default_rng(seed).choice(
            features.shape[0], size=subsample, replace=False
        )
        features, labels = features[idx], labels[idx]
    return Dataset(
        features,
        labels,
        name="idx",
        source=str(images_path),
        normalization="pixels/255",
    )


# --- run configs -----------------------------------------------------------

_TARGET_DEFAULTS = {
    "gaussian_mixture": {
        "kind": None,
        "centers": None,
        "weights": None,
        "variances": None,
    },
    "standard_normal": {"kind": None, "dimension": 1},
    "two_moons_bnn": {
        "kind": None,
        "n_train": 200,
        "n_test": 200,
        "noise": 0.1,
        "data_seed": 0,
        "hidden": [16, 16],
        "activation": "tanh",
        "prior_variance": 0.1,
        "ood_radius": 3.0,
        "ood_count": 200,
    },
    "bnn_idx": {
        "kind": None,
        "train_images": None,
        "train_labels": None,
        "test_images": None,
        "test_labels": None,
        "ood_images": None,
        "subsample": 1000,
        "hidden": [16, 16],
        "activation": "tanh",
        "prior_variance": 0.1,
    },
}

_INIT_DEFAULTS = {
    "kind": "gaussian",
    "x0": None,
    "jitter": 0.0,
    "mean": 0.0,
    "std": 1.0,
    "prior_variance": 0.1,
}

_PHASE_DEFAULTS = {
    "rule": None,
    "learning_rate": None,
    "steps": None,
    "snapshot_stride": 100,
    "batch_size": None,
    "beta": None,
}

_BETA_DEFAULTS = {
    "kind": "constant",
    "value": 1.0,
    "start": 1.6,
    "beta_max": 1.6,
    "period": 100,
    "sharpness": 5.0,
}

_DIAG_DEFAULTS = {
    "mode_radius": 3.0,
    "mode_threshold": 0.01,
    "mmd_samples": 1000,
    "mmd_bandwidth": "median",
    "oracle_seed": 12345,
}


def _merge(section: dict, defaults: dict, where: str) -> dict:
    for key in section:
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in {where}")
    out = {}
    for key, default in defaults.items():
        if key in section:
            out[key] = section[key]
        elif default is None and key != "beta" and key not in (
            "x0",
            "batch_size",
            "ood_images",
        ):
            raise ConfigError(f"missing required key {key!r} in {where}")
        else:
            out[key] = default
    return out


class RunConfig(dict):
    """Fully-normalized run description; every default is materialized."""


def parse_run_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    top_defaults = {
        "name": "run",
        "seed": 0,
        "particles": None,
        "target": None,
        "init": None,
        "kernel": None,
        "phase": None,
        "diagnostics": None,
    }
    for key in raw:
        if key not in top_defaults:
            raise ConfigError(f"unknown key {key!r} at top level")

    cfg = RunConfig()
    cfg["name"] = raw.get("name", "run")
    cfg["seed"] = int(raw.get("seed", 0))
    if "particles" not in raw:
        raise ConfigError("missing required key 'particles' at top level")
    cfg["particles"] = int(raw["particles"])

    target = raw.get("target")
    if not isinstance(target, dict) or "kind" not in target:
        raise ConfigError("missing [target] section with a 'kind' key")
    kind = target["kind"]
    if kind not in _TARGET_DEFAULTS:
        raise ConfigError(f"unknown target kind {kind!r}")
    cfg["target"] = _merge(target, _TARGET_DEFAULTS[kind], "[target]")

    cfg["init"] = _merge(raw.get("init", {}), _INIT_DEFAULTS, "[init]")

    kernel = raw.get("kernel", {})
    for key in kernel:
        if key != "bandwidth":
            raise ConfigError(f"unknown key {key!r} in [kernel]")
    bw = kernel.get("bandwidth", "median")
    if bw != "median" and not (isinstance(bw, (int, float)) and bw > 0):
        raise ConfigError("kernel bandwidth must be 'median' or a positive number")
    cfg["kernel"] = {"bandwidth": bw}

    phases = raw.get("phase")
    if not phases:
        raise ConfigError("need at least one [[phase]] section")
    cfg["phase"] = []
    for i, phase in enumerate(phases):
        merged = _merge(phase, _PHASE_DEFAULTS, f"[[phase]] #{i}")
        if merged["beta"] is not None:
            merged["beta"] = _merge(merged["beta"], _BETA_DEFAULTS, f"[[phase]] #{i} beta")
        cfg["phase"].append(merged)

    cfg["diagnostics"] = _merge(raw.get("diagnostics", {}), _DIAG_DEFAULTS, "[diagnostics]")
    return cfg


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise TypeError(f"cannot render {type(value)} as TOML")


def _render_table(lines: list[str], header: str, table: dict) -> None:
    lines.append(header)
    deferred = []
    for key, value in table.items():
        if value is None:
            continue
        if isinstance(value, dict):
            deferred.append((key, value))
        else:
            lines.append(f"{key} = {_toml_scalar(value)}")
    lines.append("")
    prefix = header.strip("[]")
    for key, value in deferred:
        _render_table(lines, f"[{prefix}.{key}]", value)


def render_run_config(cfg: RunConfig) -> str:
    """RunConfig back to TOML text; parse(render(cfg)) == cfg."""
    lines = []
    for key in ("name", "seed", "particles"):
        lines.append(f"{key} = {_toml_scalar(cfg[key])}")
    lines.append("")
    _render_table(lines, "[target]", cfg["target"])
    _render_table(lines, "[init]", cfg["init"])
    _render_table(lines, "[kernel]", cfg["kernel"])
    for phase in cfg["phase"]:
        scalar = {k: v for k, v in phase.items() if k != "beta"}
        _render_table(lines, "[[phase]]", scalar)
        if phase.get("beta") is not None:
            _render_table(lines, "[phase.beta]", phase["beta"])
    _render_table(lines, "[diagnostics]", cfg["diagnostics"])
    return "\n".join(lines)


# --- reports & trajectories ------------------------------------------------


@dataclass
class RunReport:
    """Self-contained result document; re-runnable from the echoed config."""

    config: RunConfig
    metrics: dict
    snapshots: list = field(default_factory=list)
    wall_clock: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "config": render_run_config(self.config),
            "metrics": self.metrics,
            "snapshots": self.snapshots,
            "wall_clock": self.wall_clock,
            "seed": self.seed,
        }


def write_report(report: RunReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, default=_json_default)
        f.write("\n")


def read_report(path) -> dict:
    with open(path) as f:
        return json.load(f)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def dump_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns: step, particle_index, x_0..x_{d-1}, beta; full-precision floats."""
    d = traj.snapshots[0].particles.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "particle_index"] + [f"x_{i}" for i in range(d)] + ["beta"])
        for snap in traj.snapshots:
            for i, row in enumerate(snap.particles):
                writer.writerow(
                    [snap.step, i] + [repr(float(v)) for v in row] + [repr(float(snap.beta))]
                )


def load_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        d = len(header) - 3
        groups: dict[int, list] = {}
        betas: dict[int, float] = {}
        for row in reader:
            t = int(row[0])
            groups.setdefault(t, []).append([float(v) for v in row[2 : 2 + d]])
            betas[t] = float(row[-1])
    snapshots = [
        Snapshot(t, np.asarray(groups[t]), betas[t]) for t in sorted(groups)
    ]
    return Trajectory(snapshots)


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - start
