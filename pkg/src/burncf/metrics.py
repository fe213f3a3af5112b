"""Ranking metrics: Recall@K, NDCG@K, popularity-group breakdowns.

Binary relevance, macro-averaged over users that have held-out truth.
Group metrics restrict each user's truth set to the group's items.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionMatrix

GROUP_NAMES = ("popular", "medium", "personal")


def recall_at_k(ranked: list[int], truth: set[int], k: int) -> float:
    if not truth:
        raise ValueError("truth set must be nonempty")
    hits = sum(1 for item in ranked[:k] if item in truth)
    return hits / len(truth)


def ndcg_at_k(ranked: list[int], truth: set[int], k: int) -> float:
    if not truth:
        raise ValueError("truth set must be nonempty")
    dcg = sum(1.0 / math.log2(pos + 1)
              for pos, item in enumerate(ranked[:k], start=1) if item in truth)
    ideal = sum(1.0 / math.log2(pos + 1)
                for pos in range(1, min(k, len(truth)) + 1))
    return dcg / ideal


def popularity_groups(train: InteractionMatrix) -> np.ndarray:
    """Partition items into popular/medium/personal thirds by training count.

    Items are ordered by count descending, id ascending on ties; the first
    ceil(n/3) are popular, the next ceil(2n/3) - ceil(n/3) medium, the rest
    personal.  Returns the group index per item (0, 1, 2).
    """
    counts = train.item_degrees()
    n = train.n_items
    order = np.lexsort((np.arange(n), -counts))
    first = math.ceil(n / 3)
    second = math.ceil(2 * n / 3)
    groups = np.empty(n, dtype=np.int64)
    groups[order[:first]] = 0
    groups[order[first:second]] = 1
    groups[order[second:]] = 2
    return groups


@dataclass
class MetricsReport:
    cutoffs: tuple[int, ...]
    recall: dict[int, float]
    ndcg: dict[int, float]
    n_users: int
    skipped_users: int
    groups: dict[str, dict] = field(default_factory=dict)
    config_hash: str = ""
    git_revision: str = ""

    def to_dict(self) -> dict:
        out = {
            "cutoffs": list(self.cutoffs),
            "recall": {str(k): self.recall[k] for k in self.cutoffs},
            "ndcg": {str(k): self.ndcg[k] for k in self.cutoffs},
            "n_users": self.n_users,
            "skipped_users": self.skipped_users,
            "config_hash": self.config_hash,
            "git_revision": self.git_revision,
        }
        if self.groups:
            out["groups"] = self.groups
        return out


def _macro(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def evaluate(recommendations: dict[int, list[int]], test: InteractionMatrix,
             groups: np.ndarray | None = None,
             cutoffs: tuple[int, ...] = (10, 20, 50),
             train: InteractionMatrix | None = None) -> MetricsReport:
    """Macro-averaged metrics of ranked lists against held-out interactions.

    Users absent from the test set (or with empty truth) are skipped.  A
    ranked list shorter than the largest cutoff is an error unless the
    user's candidate pool (known when `train` is given) is itself smaller.
    """
    max_k = max(cutoffs)
    recall_vals: dict[int, list[float]] = {k: [] for k in cutoffs}
    ndcg_vals: dict[int, list[float]] = {k: [] for k in cutoffs}
    group_vals = {name: {"recall": {k: [] for k in cutoffs},
                         "ndcg": {k: [] for k in cutoffs}}
                  for name in GROUP_NAMES} if groups is not None else {}
    n_eval = 0
    skipped = 0
    test_degrees = test.user_degrees()
    for u in range(test.n_users):
        if test_degrees[u] == 0:
            skipped += 1
            continue
        truth = set(int(i) for i in test.row_items(u))
        ranked = recommendations.get(u, [])
        if len(ranked) < max_k:
            pool = None
            if train is not None and u < train.n_users:
                pool = train.n_items - len(train.row_items(u))
            if pool is None or len(ranked) < min(max_k, pool):
                raise ValueError(
                    f"user {u}: ranked list of length {len(ranked)} is shorter "
                    f"than cutoff {max_k}")
        n_eval += 1
        for k in cutoffs:
            recall_vals[k].append(recall_at_k(ranked, truth, k))
            ndcg_vals[k].append(ndcg_at_k(ranked, truth, k))
        if groups is not None:
            for gid, name in enumerate(GROUP_NAMES):
                gtruth = {i for i in truth if groups[i] == gid}
                if not gtruth:
                    continue
                for k in cutoffs:
                    group_vals[name]["recall"][k].append(recall_at_k(ranked, gtruth, k))
                    group_vals[name]["ndcg"][k].append(ndcg_at_k(ranked, gtruth, k))
    report = MetricsReport(
        cutoffs=cutoffs,
        recall={k: _macro(recall_vals[k]) for k in cutoffs},
        ndcg={k: _macro(ndcg_vals[k]) for k in cutoffs},
        n_users=n_eval,
        skipped_users=skipped,
    )
    if groups is not None:
        report.groups = {
            name: {
                "recall": {str(k): _macro(group_vals[name]["recall"][k]) for k in cutoffs},
                "ndcg": {str(k): _macro(group_vals[name]["ndcg"][k]) for k in cutoffs},
                "n_users": len(group_vals[name]["recall"][cutoffs[0]]),
            }
            for name in GROUP_NAMES
        }
    return report
