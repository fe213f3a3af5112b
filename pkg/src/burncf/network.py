"""Deficit estimation network: MLP over (scaled stage vector, time embedding).

Plain numpy with hand-rolled reverse-mode gradients and Adam.  The model is
small (one or two hidden widths mirrored encoder/decoder) and the exactness
of the backward pass is part of the contract, so no autodiff framework is
used.  Softplus of the output logits is the deficit estimate q.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"BURNCF01"


@dataclass(frozen=True)
class NetworkConfig:
    n_items: int
    stages: int
    hidden: tuple[int, ...] = (1000,)
    time_dim: int = 16
    dropout: float = 0.5

    def __post_init__(self):
        if self.n_items < 1 or self.stages < 1:
            raise ValueError("n_items and stages must be positive")
        if not self.hidden:
            raise ValueError("need at least one hidden width")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def widths(self) -> list[int]:
        """Full layer widths, decoder mirroring the encoder."""
        hidden = list(self.hidden)
        return [self.n_items] + hidden + hidden[-2::-1] + [self.n_items]


@dataclass
class ScoreNetParams:
    config: NetworkConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    time_proj: np.ndarray          # time_dim x first hidden width
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0

    def tensors(self) -> list[np.ndarray]:
        """Trainable tensors in a fixed order (weights, biases, time_proj)."""
        return self.weights + self.biases + [self.time_proj]

    def copy(self) -> "ScoreNetParams":
        return ScoreNetParams(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            time_proj=self.time_proj.copy(),
            m=[x.copy() for x in self.m],
            v=[x.copy() for x in self.v],
            step_count=self.step_count,
        )


def init_params(config: NetworkConfig, rng: np.random.Generator) -> ScoreNetParams:
    """Xavier-uniform weights (tanh gain 1), zero biases, fresh Adam state."""
    widths = config.widths
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    limit = np.sqrt(6.0 / (config.time_dim + widths[1]))
    time_proj = rng.uniform(-limit, limit, size=(config.time_dim, widths[1]))
    params = ScoreNetParams(config=config, weights=weights, biases=biases,
                            time_proj=time_proj)
    params.m = [np.zeros_like(t) for t in params.tensors()]
    params.v = [np.zeros_like(t) for t in params.tensors()]
    return params


def time_embedding(steps, dim: int) -> np.ndarray:
    """Sinusoidal features of the (1-based) step index, values in [-1, 1]."""
    steps = np.atleast_1d(np.asarray(steps, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = steps[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


@dataclass
class ForwardCache:
    x_scaled: np.ndarray
    emb: np.ndarray
    activations: list[np.ndarray]   # tanh outputs per hidden layer
    dropped: list[np.ndarray]       # activations after dropout scaling
    masks: list[np.ndarray]         # dropout keep masks (already 1/keep scaled)


def _dropout_masks(config: NetworkConfig, batch: int,
                   rng: np.random.Generator | None) -> list[np.ndarray]:
    hidden_widths = config.widths[1:-1]
    if config.dropout == 0.0:
        return [np.ones((batch, h)) for h in hidden_widths]
    if rng is None:
        raise ValueError("train-mode forward with dropout needs an rng or masks")
    keep = 1.0 - config.dropout
    return [(rng.random((batch, h)) < keep) / keep for h in hidden_widths]


def net_forward(params: ScoreNetParams, x: np.ndarray, steps,
                train_mode: bool = False,
                rng: np.random.Generator | None = None,
                masks: list[np.ndarray] | None = None):
    """Compute output logits; in train mode also return the backward cache.

    x is one stage vector or a batch of them (rows); steps is the matching
    1-based step index (scalar or per-row).  Inputs are scaled by 1/K; the
    projected time embedding is added to the first hidden pre-activation.
    """
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != cfg.n_items:
        raise ValueError(f"input width {x.shape[1]} != n_items {cfg.n_items}")
    x_scaled = x / cfg.stages
    emb = time_embedding(steps, cfg.time_dim)
    if emb.shape[0] == 1 and x.shape[0] > 1:
        emb = np.repeat(emb, x.shape[0], axis=0)
    if emb.shape[0] != x.shape[0]:
        raise ValueError(f"got {emb.shape[0]} step indices for {x.shape[0]} rows")

    if train_mode and masks is None:
        masks = _dropout_masks(cfg, x.shape[0], rng)
    activations: list[np.ndarray] = []
    dropped: list[np.ndarray] = []
    h = x_scaled
    n_hidden = len(cfg.widths) - 2
    for layer in range(n_hidden):
        z = h @ params.weights[layer] + params.biases[layer]
        if layer == 0:
            z += emb @ params.time_proj
        a = np.tanh(z)
        activations.append(a)
        if train_mode:
            a = a * masks[layer]
        dropped.append(a)
        h = a
    logits = h @ params.weights[-1] + params.biases[-1]
    if single:
        logits = logits[0]
    if not train_mode:
        return logits
    cache = ForwardCache(x_scaled=x_scaled, emb=emb, activations=activations,
                         dropped=dropped, masks=masks)
    return logits, cache


def q_estimate(logits) -> np.ndarray:
    """Softplus of the logits: strictly positive deficit estimate."""
    return np.logaddexp(0.0, np.asarray(logits, dtype=np.float64))


def softplus_grad(logits) -> np.ndarray:
    """Derivative of softplus: the logistic sigmoid, computed stably."""
    x = np.asarray(logits, dtype=np.float64)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    time_proj: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        return self.weights + self.biases + [self.time_proj]


def net_backward(params: ScoreNetParams, cache: ForwardCache,
                 dlogits: np.ndarray) -> Gradients:
    """Exact gradients of a scalar loss given dLoss/dlogits.

    Reuses the cached dropout masks, so repeated calls on one cache are
    bit-identical.
    """
    if cache is None:
        raise ValueError("missing forward cache")
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.ndim == 1:
        dlogits = dlogits[None, :]
    n_hidden = len(params.config.widths) - 2
    d_weights = [None] * len(params.weights)
    d_biases = [None] * len(params.biases)

    dz = dlogits
    d_weights[-1] = cache.dropped[-1].T @ dz
    d_biases[-1] = dz.sum(axis=0)
    da = dz @ params.weights[-1].T
    d_time = None
    for layer in range(n_hidden - 1, -1, -1):
        da = da * cache.masks[layer]
        dz = da * (1.0 - cache.activations[layer] ** 2)
        inputs = cache.x_scaled if layer == 0 else cache.dropped[layer - 1]
        d_weights[layer] = inputs.T @ dz
        d_biases[layer] = dz.sum(axis=0)
        if layer == 0:
            d_time = cache.emb.T @ dz
        else:
            da = dz @ params.weights[layer].T
    return Gradients(weights=d_weights, biases=d_biases, time_proj=d_time)


def adam_step(params: ScoreNetParams, grads: Gradients, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place."""
    params.step_count += 1
    t = params.step_count
    for tensor, grad, m, v in zip(params.tensors(), grads.tensors(),
                                  params.m, params.v):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad**2
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        tensor -= lr * m_hat / (np.sqrt(v_hat) + eps)


# -- checkpoint container -----------------------------------------------
#
# Plain deterministic binary: magic, u32 header length, UTF-8 JSON header
# (sorted keys), then raw C-order float64/int64 array bytes in header
# order.  No timestamps, so identical state gives identical bytes.

def _named_arrays(params: ScoreNetParams) -> list[tuple[str, np.ndarray]]:
    named = []
    for i, w in enumerate(params.weights):
        named.append((f"weight.{i}", w))
    for i, b in enumerate(params.biases):
        named.append((f"bias.{i}", b))
    named.append(("time_proj", params.time_proj))
    for i, m in enumerate(params.m):
        named.append((f"adam_m.{i}", m))
    for i, v in enumerate(params.v):
        named.append((f"adam_v.{i}", v))
    return named


def save_checkpoint(path: str, params: ScoreNetParams, config_hash: str) -> None:
    arrays = _named_arrays(params)
    header = {
        "version": 1,
        "config_hash": config_hash,
        "network": {
            "n_items": params.config.n_items,
            "stages": params.config.stages,
            "hidden": list(params.config.hidden),
            "time_dim": params.config.time_dim,
            "dropout": params.config.dropout,
        },
        "step_count": params.step_count,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_checkpoint(path: str, expected_config_hash: str | None = None) -> ScoreNetParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        if expected_config_hash is not None and header["config_hash"] != expected_config_hash:
            raise ValueError(
                "config hash mismatch: checkpoint has "
                f"{header['config_hash']}, current config is {expected_config_hash}")
        arrays = {}
        for meta in header["arrays"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arrays[meta["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    net = header["network"]
    config = NetworkConfig(n_items=net["n_items"], stages=net["stages"],
                           hidden=tuple(net["hidden"]), time_dim=net["time_dim"],
                           dropout=net["dropout"])
    n_layers = len(config.widths) - 1
    params = ScoreNetParams(
        config=config,
        weights=[arrays[f"weight.{i}"] for i in range(n_layers)],
        biases=[arrays[f"bias.{i}"] for i in range(n_layers)],
        time_proj=arrays["time_proj"],
        step_count=int(header["step_count"]),
    )
    n_tensors = 2 * n_layers + 1
    params.m = [arrays[f"adam_m.{i}"] for i in range(n_tensors)]
    params.v = [arrays[f"adam_v.{i}"] for i in range(n_tensors)]
    return params


def checkpoint_config_hash(path: str) -> str:
    """Read just the config hash from a checkpoint header."""
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(hlen).decode("utf-8"))["config_hash"]
