"""Block-structured synthetic interaction data for desk-scale experiments.

Users and items are assigned to blocks round-robin; a user interacts with
an item of the same block with probability 0.6 and across blocks with
probability 0.02.  A per-user fraction of interactions is held out as the
test set.  Files use the plain-text one-line-per-user format.
"""

from __future__ import annotations

import os

import numpy as np

from .rng import stream

P_IN = 0.6
P_OUT = 0.02


def generate_block_split(n_users: int, n_items: int, n_blocks: int,
                         holdout: float, seed: int,
                         p_in: float = P_IN, p_out: float = P_OUT):
    """Return (train_rows, test_rows) as per-user sorted item-id lists."""
    if n_users < 1 or n_items < 1 or n_blocks < 1:
        raise ValueError("n_users, n_items and n_blocks must be positive")
    if n_blocks > min(n_users, n_items):
        raise ValueError("more blocks than users or items")
    if not 0.0 <= holdout < 1.0:
        raise ValueError(f"holdout must be in [0, 1), got {holdout}")
    item_block = np.arange(n_items) % n_blocks
    train_rows: dict[int, list[int]] = {}
    test_rows: dict[int, list[int]] = {}
    for u in range(n_users):
        g = stream(seed, "synth.user", u)
        probs = np.where(item_block == u % n_blocks, p_in, p_out)
        items = np.nonzero(g.random(n_items) < probs)[0]
        if len(items) == 0:
            own = np.nonzero(item_block == u % n_blocks)[0]
            items = np.array([own[int(g.integers(len(own)))]])
        k_test = int(np.floor(holdout * len(items)))
        if k_test > 0:
            held = set(int(i) for i in g.choice(items, size=k_test, replace=False))
        else:
            held = set()
        train_rows[u] = sorted(int(i) for i in items if int(i) not in held)
        if held:
            test_rows[u] = sorted(held)
    return train_rows, test_rows


def write_rows(rows: dict[int, list[int]], path: str) -> None:
    """Write per-user rows as 'user item item ...' lines, users ascending."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in sorted(rows):
            items = rows[u]
            if not items:
                continue
            fh.write(str(u) + " " + " ".join(str(i) for i in items) + "\n")


def generate_files(out_dir: str, n_users: int, n_items: int, n_blocks: int,
                   holdout: float, seed: int) -> dict:
    """Generate train.txt / test.txt under out_dir; byte-stable per seed."""
    os.makedirs(out_dir, exist_ok=True)
    train_rows, test_rows = generate_block_split(n_users, n_items, n_blocks,
                                                 holdout, seed)
    train_path = os.path.join(out_dir, "train.txt")
    test_path = os.path.join(out_dir, "test.txt")
    write_rows(train_rows, train_path)
    write_rows(test_rows, test_path)
    n_train = sum(len(v) for v in train_rows.values())
    n_test = sum(len(v) for v in test_rows.values())
    return {
        "train_path": train_path,
        "test_path": test_path,
        "n_users": n_users,
        "n_items": n_items,
        "n_train_interactions": n_train,
        "n_test_interactions": n_test,
    }
