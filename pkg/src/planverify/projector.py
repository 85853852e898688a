"""Latent projector and safety classifier.

A three-layer perceptron ``x -> relu(W1 x + b1) -> relu(W2 . + b2) -> W3 . + b3 = z``
maps an embedding to the latent space; an affine head ``z -> Wc z + bc`` gives
two logits (index 0 = unsafe, 1 = safe).  Training minimizes the summed
softmax cross-entropy over each mini-batch with Adam (default) or plain SGD.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .oracles import DimensionMismatch

LAYERS = ("W1", "b1", "W2", "b2", "W3", "b3", "Wc", "bc")
MAGIC = b"PVCKPT"
FORMAT_VERSION = 1
OPTIMIZERS = ("adam", "sgd")


class DegenerateLabels(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    input_dim: int = 1536
    hidden1: int = 128
    hidden2: int = 32
    latent_dim: int = 10
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 20
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")

    def to_doc(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_doc(cls, doc: Mapping) -> "TrainConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training keys {sorted(unknown)}")
        return cls(**doc)


@dataclass
class ProjectorParams:
    config: TrainConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def parameter_count(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    def copy(self) -> "ProjectorParams":
        return ProjectorParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays.values())


def layer_shapes(cfg: TrainConfig) -> dict[str, tuple[int, ...]]:
    d, h1, h2, m = cfg.input_dim, cfg.hidden1, cfg.hidden2, cfg.latent_dim
    return {
        "W1": (d, h1), "b1": (h1,),
        "W2": (h1, h2), "b2": (h2,),
        "W3": (h2, m), "b3": (m,),
        "Wc": (m, 2), "bc": (2,),
    }


def init_params(cfg: TrainConfig) -> ProjectorParams:
    """Uniform ``±1/sqrt(fan_in)`` initialization for weights and biases."""
    rng = np.random.default_rng(cfg.seed)
    arrays = {}
    shapes = layer_shapes(cfg)
    for w, b in (("W1", "b1"), ("W2", "b2"), ("W3", "b3"), ("Wc", "bc")):
        fan_in = shapes[w][0]
        bound = 1.0 / np.sqrt(fan_in)
        arrays[w] = rng.uniform(-bound, bound, size=shapes[w])
        arrays[b] = rng.uniform(-bound, bound, size=shapes[b])
    return ProjectorParams(cfg, arrays)


def _as_batch(params: ProjectorParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != params.config.input_dim:
        raise DimensionMismatch(f"expected embeddings of dimension {params.config.input_dim}, got shape {x.shape}")
    return x2


def _forward(p: Mapping[str, np.ndarray], x: np.ndarray):
    a1 = x @ p["W1"] + p["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ p["W2"] + p["b2"]
    h2 = np.maximum(a2, 0.0)
    z = h2 @ p["W3"] + p["b3"]
    logits = z @ p["Wc"] + p["bc"]
    return a1, h1, a2, h2, z, logits


def project(params: ProjectorParams, embedding) -> np.ndarray:
    """Latent vector(s) for one embedding or a batch of embeddings."""
    x = _as_batch(params, embedding)
    z = _forward(params.arrays, x)[4]
    return z[0] if np.asarray(embedding).ndim == 1 else z


def logits_of(params: ProjectorParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.latent_dim:
        raise DimensionMismatch(f"expected latent dimension {params.latent_dim}, got {z.shape[-1]}")
    return z @ params.arrays["Wc"] + params.arrays["bc"]


def classify_logits(logits) -> int | np.ndarray:
    """1 (safe) only when the safe logit is strictly larger; ties go to 0."""
    logits = np.asarray(logits, dtype=np.float64)
    out = (logits[..., 1] > logits[..., 0]).astype(int)
    return int(out) if out.ndim == 0 else out


def classify(params: ProjectorParams, z) -> int | np.ndarray:
    return classify_logits(logits_of(params, z))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    """Summed softmax cross-entropy."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(y, dtype=int).reshape(-1)
    return float(-_log_softmax(logits)[np.arange(len(y)), y].sum())


def loss_and_grads(arrays: Mapping[str, np.ndarray], x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic gradients for a batch."""
    y = np.asarray(y, dtype=int)
    a1, h1, a2, h2, z, logits = _forward(arrays, x)
    logp = _log_softmax(logits)
    n = len(y)
    loss = float(-logp[np.arange(n), y].sum())
    d_logits = np.exp(logp)
    d_logits[np.arange(n), y] -= 1.0
    g = {}
    g["Wc"] = z.T @ d_logits
    g["bc"] = d_logits.sum(axis=0)
    dz = d_logits @ arrays["Wc"].T
    g["W3"] = h2.T @ dz
    g["b3"] = dz.sum(axis=0)
    dh2 = dz @ arrays["W3"].T
    da2 = dh2 * (a2 > 0)
    g["W2"] = h1.T @ da2
    g["b2"] = da2.sum(axis=0)
    dh1 = da2 @ arrays["W2"].T
    da1 = dh1 * (a1 > 0)
    g["W1"] = x.T @ da1
    g["b1"] = da1.sum(axis=0)
    return loss, g


def loss_value(arrays: Mapping[str, np.ndarray], x: np.ndarray, y: np.ndarray) -> float:
    logits = _forward(arrays, x)[5]
    return cross_entropy(logits, y)


def grad_check(params: ProjectorParams, x, y, samples_per_array: int = 12, step: float = 1e-4,
               seed: int = 0, atol: float = 1e-6,
               corrupt: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]] | None = None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Checks a random subsample of entries of every parameter array.  The
    relative error is ``|a - n| / max(|a|, |n|, atol)``.  ``corrupt`` may
    rewrite the analytic gradients first (mutation testing).
    """
    x = _as_batch(params, x)
    y = np.asarray(y, dtype=int)
    arrays = {k: v.copy() for k, v in params.arrays.items()}
    _, grads = loss_and_grads(arrays, x, y)
    if corrupt is not None:
        grads = corrupt({k: v.copy() for k, v in grads.items()})
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in LAYERS:
        arr = arrays[name]
        flat = arr.reshape(-1)
        k = min(samples_per_array, flat.size)
        idx = rng.choice(flat.size, size=k, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_value(arrays, x, y)
            flat[i] = orig - step
            down = loss_value(arrays, x, y)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            analytic = float(grads[name].reshape(-1)[i])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), atol)
            worst = max(worst, err)
    return worst


def canonical_order(x: np.ndarray, y: np.ndarray, keys: Sequence[str] | None = None) -> np.ndarray:
    """Caller-independent ordering of training rows."""
    if keys is None:
        keys = [hashlib.sha256(np.ascontiguousarray(row).tobytes() + bytes([int(label)])).hexdigest() for row, label in zip(x, y)]
    return np.array(sorted(range(len(keys)), key=lambda i: (keys[i], i)), dtype=int)


@dataclass
class TrainResult:
    params: ProjectorParams
    epoch_losses: list[float]
    train_accuracy: float


def _optimizer(cfg: TrainConfig, arrays: dict[str, np.ndarray]) -> Callable[[Mapping[str, np.ndarray]], None]:
    """In-place update closure for ``arrays``."""
    if cfg.optimizer == "sgd":
        def sgd(grads):
            for k in LAYERS:
                arrays[k] -= cfg.lr * grads[k]
        return sgd
    m = {k: np.zeros_like(arrays[k]) for k in LAYERS}
    v = {k: np.zeros_like(arrays[k]) for k in LAYERS}
    t = [0]

    def adam(grads):
        t[0] += 1
        c1 = 1.0 - cfg.beta1 ** t[0]
        c2 = 1.0 - cfg.beta2 ** t[0]
        for k in LAYERS:
            g = grads[k]
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g
            arrays[k] -= cfg.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + cfg.eps)
    return adam


def train(x, y, cfg: TrainConfig = TrainConfig(), keys: Sequence[str] | None = None) -> TrainResult:
    """Mini-batch training on the summed cross-entropy.

    Rows are first put in a canonical order and then shuffled with the
    seeded generator each epoch, so the caller's row order is irrelevant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise DimensionMismatch(f"expected embeddings of dimension {cfg.input_dim}, got shape {x.shape}")
    counts = np.bincount(y, minlength=2)
    if len(counts) > 2 or counts[0] < 2 or counts[1] < 2:
        raise DegenerateLabels(f"need at least 2 samples per class, got {counts.tolist()}")
    order = canonical_order(x, y, keys)
    x, y = x[order], y[order]
    params = init_params(cfg)
    arrays = params.arrays
    rng = np.random.default_rng([cfg.seed, 1])
    step = _optimizer(cfg, arrays)
    losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(arrays, x[batch], y[batch])
            total += loss
            step(grads)
        losses.append(total / len(y))
    acc = float(np.mean(classify(params, project(params, x)) == y))
    return TrainResult(params, losses, acc)


# --- checkpoints ------------------------------------------------------------------


def checkpoint_bytes(params: ProjectorParams, extra: Mapping | None = None) -> bytes:
    """Versioned binary checkpoint: magic, version, JSON header, raw float64 arrays."""
    header = {
        "config": params.config.to_doc(),
        "arrays": [{"name": k, "shape": list(params.arrays[k].shape)} for k in LAYERS],
        "parameter_count": params.parameter_count(),
        "extra": dict(extra or {}),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(hbytes)), hbytes]
    for k in LAYERS:
        parts.append(np.ascontiguousarray(params.arrays[k], dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(blob: bytes) -> ProjectorParams:
    if not blob.startswith(MAGIC):
        raise ValueError("not a projector checkpoint")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<HI", blob, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += struct.calcsize("<HI")
    header = json.loads(blob[off : off + hlen].decode("utf-8"))
    off += hlen
    cfg = TrainConfig.from_doc(header["config"])
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arrays[spec["name"]] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape)
        off += 8 * n
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    expected = layer_shapes(cfg)
    for k in LAYERS:
        if arrays[k].shape != expected[k]:
            raise ValueError(f"array {k} has shape {arrays[k].shape}, expected {expected[k]}")
    return ProjectorParams(cfg, arrays)


def save_params(params: ProjectorParams, path, extra: Mapping | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, extra))


def load_params(path) -> ProjectorParams:
    return params_from_bytes(Path(path).read_bytes())


def with_config(params: ProjectorParams, **changes) -> ProjectorParams:
    return ProjectorParams(replace(params.config, **changes), {k: v.copy() for k, v in params.arrays.items()})
