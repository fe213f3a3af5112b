"""Training loop: Monte Carlo corruption draws, weighted deficit loss, Adam.

Each epoch draws one diffusion time per user, corrupts the user's stage
vector, and fits the network's softplus output q to the realized deficit
under a Poisson-style loss q - d*log(q), importance-weighted by the
survival probability (instantaneous form) or by t*exp(-t) (finite-time
form).  Early stopping monitors validation recall at cutoff 20.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .data import DecayCache, InteractionMatrix, normalize
from .kernel import (DecaySchemeConfig, DiffusionSchedule, decay_variant_prob,
                     variant_sample)
from .network import (NetworkConfig, ScoreNetParams, adam_step, init_params,
                      net_backward, net_forward, q_estimate, softplus_grad)
from .recommend import burn_up_scores, rank_users
from .rng import stream

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    stages: int = 300
    schedule: DiffusionSchedule = field(default_factory=DiffusionSchedule)
    gamma: float = 1.0
    objective: str = "instantaneous"   # instantaneous | finite_time
    lr: float = 1e-4
    dropout: float = 0.5
    batch_size: int = 512
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    hidden: tuple[int, ...] = (1000,)
    time_dim: int = 16
    decay_scheme: DecaySchemeConfig = field(default_factory=DecaySchemeConfig)

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.objective not in ("instantaneous", "finite_time"):
            raise ValueError(f"unknown objective {self.objective!r}")


def _network_config(config: TrainConfig, n_items: int) -> NetworkConfig:
    return NetworkConfig(n_items=n_items, stages=config.stages,
                         hidden=config.hidden, time_dim=config.time_dim,
                         dropout=config.dropout)


@dataclass
class LossBreakdown:
    mean: float
    batch_means: list[float]
    n_samples: int


def _weighted_deficit_loss(q: np.ndarray, deficit: np.ndarray, w: np.ndarray):
    """sum w*(q - d*log q) with dL/dq = w*(1 - d/q); q floored only in the log."""
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 0.0):
        raise ValueError("q must be strictly positive")
    loss = float(np.sum(w * (q - deficit * np.log(np.maximum(q, LOG_FLOOR)))))
    dq = w * (1.0 - deficit / q)
    return loss, dq


def elbo_loss(q: np.ndarray, x0: np.ndarray, xt: np.ndarray, f: np.ndarray):
    """Instantaneous objective: per-item weight exp(-f), f the decay exponent."""
    x0 = np.asarray(x0, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if np.any(xt > x0):
        raise ValueError("diffused state cannot exceed the initial state")
    w = np.exp(-np.asarray(f, dtype=np.float64))
    return _weighted_deficit_loss(q, x0 - xt, w)


def finite_time_loss(q: np.ndarray, x0: np.ndarray, xt: np.ndarray, t):
    """Finite-time objective: global weight t*exp(-t) per sample."""
    x0 = np.asarray(x0, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if np.any(xt > x0):
        raise ValueError("diffused state cannot exceed the initial state")
    t = np.asarray(t, dtype=np.float64)
    w = t * np.exp(-t)
    if np.ndim(w) == np.ndim(q) - 1:
        w = w[..., None]  # one time draw per row of a batched q
    w = np.broadcast_to(w, np.shape(q))
    return _weighted_deficit_loss(q, x0 - xt, w)


def composite_dlogits(dq: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Chain dL/dq through softplus to the logits."""
    return dq * softplus_grad(logits)


def _draw_batch(train: InteractionMatrix, users: np.ndarray, cache: DecayCache,
                config: TrainConfig, epoch: int):
    """Per-user corruption draws for one batch, each from its own stream."""
    n = len(users)
    n_items = train.n_items
    schedule = config.schedule
    x0 = np.zeros((n, n_items), dtype=np.int64)
    xt = np.zeros((n, n_items), dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    weights_f = np.zeros((n, n_items), dtype=np.float64)
    coeffs = cache.get_many(users)
    hidden_widths = _network_config(config, n_items).widths[1:-1]
    keep = 1.0 - config.dropout
    masks = [np.ones((n, h)) for h in hidden_widths]
    for b, u in enumerate(users):
        g = stream(config.seed, "train.user", epoch, int(u))
        step = int(g.integers(1, schedule.n_steps + 1))
        steps[b] = step
        t = schedule.time_of(step)
        x0[b, train.row_items(int(u))] = config.stages
        if config.decay_scheme.scheme == "burndown":
            f_row = t / (1.0 + coeffs[b])
            xt[b] = g.binomial(x0[b], np.exp(-f_row))
            weights_f[b] = f_row
        else:
            xt[b] = np.minimum(variant_sample(x0[b], config.decay_scheme, t, g), x0[b])
            prob = decay_variant_prob(config.decay_scheme, t)
            with np.errstate(divide="ignore"):
                weights_f[b] = -np.log(prob) if prob > 0 else np.inf
        if config.dropout > 0:
            for layer, h in enumerate(hidden_widths):
                masks[layer][b] = (g.random(h) < keep) / keep
    return x0, xt, steps, weights_f, masks


def train_epoch(params: ScoreNetParams, train: InteractionMatrix,
                cache: DecayCache, config: TrainConfig, epoch: int) -> LossBreakdown:
    """One pass over all users with interactions, shuffled, batched."""
    degrees = train.user_degrees()
    users = np.nonzero(degrees > 0)[0]
    order = stream(config.seed, "train.shuffle", epoch).permutation(users)
    schedule = config.schedule
    batch_means: list[float] = []
    n_samples = 0
    for lo in range(0, len(order), config.batch_size):
        batch_users = order[lo:lo + config.batch_size]
        x0, xt, steps, f, masks = _draw_batch(train, batch_users, cache, config, epoch)
        logits, fwd_cache = net_forward(params, xt, steps, train_mode=True, masks=masks)
        q = q_estimate(logits)
        if config.objective == "instantaneous":
            loss, dq = elbo_loss(q, x0, xt, f)
        else:
            t = steps * schedule.dt
            loss, dq = finite_time_loss(q, x0, xt, t)
        b = len(batch_users)
        mean_loss = loss / b
        if not np.isfinite(mean_loss):
            raise RuntimeError(
                "non-finite loss in epoch "
                f"{epoch}, users {batch_users[:8].tolist()}...: loss={mean_loss}, "
                f"q range [{q.min()}, {q.max()}]")
        dlogits = composite_dlogits(dq, logits) / b
        grads = net_backward(params, fwd_cache, dlogits)
        adam_step(params, grads, config.lr)
        batch_means.append(mean_loss)
        n_samples += b
    mean = float(np.average(batch_means,
                            weights=[min(config.batch_size, len(order) - i)
                                     for i in range(0, len(order), config.batch_size)]))
    return LossBreakdown(mean=mean, batch_means=batch_means, n_samples=n_samples)


def validation_recall(params: ScoreNetParams, train: InteractionMatrix,
                      valid: InteractionMatrix, cache: DecayCache,
                      config: TrainConfig, epoch: int, cutoff: int = 20,
                      mode: str | None = None) -> float:
    """Recall@cutoff of sampled recommendations against the holdout."""
    truth_users = np.nonzero(valid.user_degrees() > 0)[0]
    if len(truth_users) == 0:
        raise ValueError("validation split is empty")
    schedule = config.schedule
    if mode is not None and mode != schedule.mode:
        schedule = DiffusionSchedule(horizon=schedule.horizon,
                                     n_steps=schedule.n_steps,
                                     reverse_horizon=schedule.reverse_horizon,
                                     mode=mode, rate_mode=schedule.rate_mode)
    scores = burn_up_scores(params, train, cache, schedule, config.stages,
                            config.seed, "fit.valid", truth_users, extra_index=epoch)
    recs = rank_users(train, truth_users, scores, cutoff, config.seed)
    ranked = {r.user: list(r.items) for r in recs}
    vals = [metrics.recall_at_k(ranked[int(u)], set(valid.row_items(int(u)).tolist()), cutoff)
            for u in truth_users]
    return float(np.mean(vals))


@dataclass
class FitResult:
    params: ScoreNetParams
    best_epoch: int
    best_recall: float
    history: list[dict]


def fit(train: InteractionMatrix, valid: InteractionMatrix,
        config: TrainConfig, cache: DecayCache | None = None,
        log_fn=None) -> FitResult:
    """Train with early stopping on validation Recall@20.

    Keeps the parameter snapshot from the best epoch; stops once `patience`
    epochs pass without improvement.  All stochastic draws are keyed by
    (seed, purpose, epoch, user), so a rerun capped at the best epoch
    reproduces the returned checkpoint bit-exactly.
    """
    if valid.nnz == 0:
        raise ValueError("validation split is empty")
    if cache is None:
        cache = DecayCache(normalize(train), config.gamma)
    net_config = _network_config(config, train.n_items)
    params = init_params(net_config, stream(config.seed, "init"))
    best = params.copy()
    best_epoch = 0
    best_recall = -1.0
    history: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        breakdown = train_epoch(params, train, cache, config, epoch)
        recall = validation_recall(params, train, valid, cache, config, epoch)
        elapsed = time.perf_counter() - t0
        history.append({"epoch": epoch, "loss": breakdown.mean,
                        "valid_recall20": recall, "seconds": elapsed})
        if log_fn is not None:
            log_fn(epoch, breakdown.mean, recall, elapsed)
        if recall > best_recall:
            best_recall = recall
            best_epoch = epoch
            best = params.copy()
        elif epoch - best_epoch >= config.patience:
            break
    return FitResult(params=best, best_epoch=best_epoch,
                     best_recall=best_recall, history=history)
