"""Reverse burn-up sampling and top-K ranking.

The burn-up loop starts from the user's full-strength history, asks the
estimator for the remaining deficit per item, clamps it to the headroom
K - X, and restores a binomial-bridge (or Poisson) increment per step.
The final integer scores are ranked with the training history masked out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DecayCache, InteractionMatrix
from .kernel import (DiffusionSchedule, bridge_ratio, bridge_sample,
                     poisson_step, stage_init)
from .network import ScoreNetParams, net_forward, q_estimate
from .rng import stream


@dataclass(frozen=True)
class RecommendationList:
    user: int
    items: np.ndarray    # ranked item ids, training history excluded
    scores: np.ndarray   # final interest counts of the ranked items


def network_estimator(params: ScoreNetParams):
    """Wrap trained parameters as a (state, step) -> deficit estimate callable."""
    def estimate(x: np.ndarray, step: int) -> np.ndarray:
        return q_estimate(net_forward(params, x, step, train_mode=False))
    return estimate


def burn_up(estimator, r_u: np.ndarray, coeffs, schedule: DiffusionSchedule,
            stages: int, rng: np.random.Generator,
            start: np.ndarray | None = None) -> np.ndarray:
    """Run the reverse loop for one user and return the final stage vector.

    estimator(x, step) returns the raw deficit estimate; it is clamped to
    [0, stages - x] before sampling.  start overrides the default
    initialization stages * r_u (used e.g. to resume from a diffused state).
    """
    x = stage_init(r_u, stages) if start is None else np.asarray(start, dtype=np.int64).copy()
    dt = schedule.dt
    for step in range(schedule.n_reverse_steps, 0, -1):
        t = step * dt
        headroom = stages - x
        q = np.clip(np.asarray(estimator(x, step), dtype=np.float64), 0.0, headroom)
        if schedule.mode == "bridge":
            ratio = bridge_ratio(coeffs if schedule.rate_mode == "personalized" else 0.0,
                                 t, dt, schedule.rate_mode)
            dx = bridge_sample(np.round(q).astype(np.int64), ratio, rng)
        else:
            dx = poisson_step(q, t, dt, rng, cap=headroom)
        x = x + dx
    return x


def burn_up_scores(params: ScoreNetParams, train: InteractionMatrix,
                   cache: DecayCache | None, schedule: DiffusionSchedule,
                   stages: int, seed: int, purpose: str, users,
                   extra_index: int | None = None) -> np.ndarray:
    """Batched burn-up for many users: one network pass per step.

    Per-user draws come from streams keyed (seed, purpose, user[, extra]),
    so results do not depend on batch composition or order.
    """
    users = np.asarray(users, dtype=np.int64)
    n = len(users)
    indices = (extra_index,) if extra_index is not None else ()
    rngs = [stream(seed, purpose, int(u), *indices) for u in users]
    x = np.zeros((n, train.n_items), dtype=np.int64)
    for b, u in enumerate(users):
        x[b, train.row_items(int(u))] = stages
    personalized = schedule.mode == "bridge" and schedule.rate_mode == "personalized"
    coeffs = cache.get_many(users) if (cache is not None and personalized) else None
    dt = schedule.dt
    for step in range(schedule.n_reverse_steps, 0, -1):
        t = step * dt
        logits = net_forward(params, x, step, train_mode=False)
        q_all = q_estimate(logits)
        headroom = stages - x
        q_all = np.clip(q_all, 0.0, headroom)
        if schedule.mode == "bridge":
            if personalized:
                ratios = bridge_ratio(coeffs, t, dt, "personalized")
            else:
                ratios = np.full_like(q_all, bridge_ratio(0.0, t, dt, "global"))
            trials = np.round(q_all).astype(np.int64)
            for b in range(n):
                x[b] += bridge_sample(trials[b], ratios[b], rngs[b])
        else:
            for b in range(n):
                x[b] += poisson_step(q_all[b], t, dt, rngs[b], cap=headroom[b])
    return x


def top_k(x_hat: np.ndarray, history_mask: np.ndarray, cutoff: int,
          rng: np.random.Generator, user: int = 0) -> RecommendationList:
    """Rank non-history items by final score, ties broken by a seeded hash.

    Returns at most `cutoff` items; fewer if the candidate pool is smaller.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    x_hat = np.asarray(x_hat)
    candidates = np.nonzero(~np.asarray(history_mask, dtype=bool))[0]
    if len(candidates) == 0:
        return RecommendationList(user=user, items=np.array([], dtype=np.int64),
                                  scores=np.array([], dtype=np.int64))
    tie = rng.random(x_hat.shape[0])
    order = np.lexsort((tie[candidates], -x_hat[candidates].astype(np.float64)))
    chosen = candidates[order[:cutoff]]
    return RecommendationList(user=user, items=chosen.astype(np.int64),
                              scores=x_hat[chosen].astype(np.int64))


def rank_users(train: InteractionMatrix, users, scores: np.ndarray,
               cutoff: int, seed: int) -> list[RecommendationList]:
    """Apply history masking and tie-broken top-K per user of a score matrix."""
    out = []
    for b, u in enumerate(np.asarray(users, dtype=np.int64)):
        mask = np.zeros(train.n_items, dtype=bool)
        mask[train.row_items(int(u))] = True
        out.append(top_k(scores[b], mask, cutoff,
                         stream(seed, "tiebreak", int(u)), user=int(u)))
    return out


def write_recommendations(path: str, recs: list[RecommendationList]) -> None:
    """TSV lines: user_id, item_id, score, 1-based rank."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in recs:
            for rank, (item, score) in enumerate(zip(rec.items, rec.scores), start=1):
                fh.write(f"{rec.user}\t{item}\t{score}\t{rank}\n")


def read_recommendations(path: str) -> dict[int, list[int]]:
    """Load ranked item lists from the TSV format written above."""
    ranked: dict[int, list[tuple[int, int]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 columns")
            u, item, _score, rank = (int(p) for p in parts)
            ranked.setdefault(u, []).append((rank, item))
    return {u: [item for _, item in sorted(pairs)] for u, pairs in ranked.items()}
