"""Interaction data: loading, degree normalization, Gram filtering, splits.

Interactions are implicit-feedback pairs stored as a binary sparse matrix.
The item-item Gram filter G = A^T A (A the degree-normalized adjacency) is
only ever applied as two sparse matvecs; it is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rng import stream


class InteractionFormatError(ValueError):
    """Raised when an interaction file cannot be parsed."""


@dataclass(frozen=True)
class InteractionMatrix:
    """Binary user-item interactions in CSR form (data values are all 1.0)."""

    matrix: sp.csr_matrix

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row_items(self, u: int) -> np.ndarray:
        """Sorted item ids interacted by user u."""
        self._check_user(u)
        lo, hi = self.matrix.indptr[u], self.matrix.indptr[u + 1]
        return self.matrix.indices[lo:hi]

    def row_vector(self, u: int) -> np.ndarray:
        """Dense binary interaction vector of user u."""
        r = np.zeros(self.n_items, dtype=np.float64)
        r[self.row_items(u)] = 1.0
        return r

    def dense(self) -> np.ndarray:
        return np.asarray(self.matrix.todense(), dtype=np.float64)

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def item_degrees(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel().astype(np.int64)

    def _check_user(self, u: int) -> None:
        if not 0 <= u < self.n_users:
            raise KeyError(f"unknown user id {u} (have {self.n_users} users)")


def from_rows(rows: dict[int, set[int]] | list[tuple[int, int]],
              n_users: int | None = None,
              n_items: int | None = None) -> InteractionMatrix:
    """Build an InteractionMatrix from (user, item) pairs or a per-user dict."""
    if isinstance(rows, dict):
        pairs = [(u, i) for u, items in rows.items() for i in items]
    else:
        pairs = list(rows)
    pairs = sorted(set(pairs))
    if not pairs:
        raise InteractionFormatError("no interactions")
    users = np.array([p[0] for p in pairs], dtype=np.int64)
    items = np.array([p[1] for p in pairs], dtype=np.int64)
    nu = int(users.max()) + 1 if n_users is None else n_users
    ni = int(items.max()) + 1 if n_items is None else n_items
    if users.max() >= nu:
        raise InteractionFormatError(f"user id {users.max()} >= declared n_users {nu}")
    if items.max() >= ni:
        raise InteractionFormatError(f"item id {items.max()} >= declared n_items {ni}")
    mat = sp.csr_matrix((np.ones(len(pairs)), (users, items)), shape=(nu, ni))
    mat.sum_duplicates()
    mat.data[:] = 1.0
    return InteractionMatrix(mat)


def load_interactions(path: str,
                      n_users: int | None = None,
                      n_items: int | None = None) -> InteractionMatrix:
    """Load a plain-text interaction file.

    One line per user: whitespace-separated integers, first token the user
    id, remaining tokens item ids (LightGCN convention).  Duplicate (u, i)
    pairs are collapsed.  Dimensions default to max id + 1.
    """
    pairs: list[tuple[int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                ids = [int(t) for t in tokens]
            except ValueError as exc:
                raise InteractionFormatError(
                    f"{path}: line {lineno}: malformed token ({exc})") from None
            if any(i < 0 for i in ids):
                raise InteractionFormatError(f"{path}: line {lineno}: negative id")
            u = ids[0]
            pairs.extend((u, i) for i in ids[1:])
    if not pairs:
        raise InteractionFormatError(f"{path}: no interactions")
    try:
        return from_rows(pairs, n_users=n_users, n_items=n_items)
    except InteractionFormatError as exc:
        raise InteractionFormatError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Degree-normalized adjacency: entry (u, i) = 1/sqrt(deg(u) * deg(i)).

    Keeps a CSC mirror so the transpose matvec of the Gram product is a
    column-major pass instead of an implicit transpose per call.
    """

    csr: sp.csr_matrix
    csc: sp.csc_matrix

    @property
    def n_users(self) -> int:
        return self.csr.shape[0]

    @property
    def n_items(self) -> int:
        return self.csr.shape[1]

    def row_items(self, u: int) -> np.ndarray:
        lo, hi = self.csr.indptr[u], self.csr.indptr[u + 1]
        return self.csr.indices[lo:hi]

    def binary_row(self, u: int) -> np.ndarray:
        if not 0 <= u < self.n_users:
            raise KeyError(f"unknown user id {u} (have {self.n_users} users)")
        r = np.zeros(self.n_items, dtype=np.float64)
        r[self.row_items(u)] = 1.0
        return r


def normalize(interactions: InteractionMatrix) -> NormalizedAdjacency:
    """Scale each interaction by 1/sqrt(user degree * item degree).

    Zero-degree rows/columns hold no entries, so they contribute nothing
    (no 0^(-1/2) is ever evaluated).
    """
    mat = interactions.matrix.astype(np.float64).copy()
    du = interactions.user_degrees().astype(np.float64)
    di = interactions.item_degrees().astype(np.float64)
    inv_su = np.zeros_like(du)
    np.divide(1.0, np.sqrt(du), out=inv_su, where=du > 0)
    inv_si = np.zeros_like(di, dtype=np.float64)
    np.divide(1.0, np.sqrt(di), out=inv_si, where=di > 0)
    # scale data in place: entry (u, i) -> inv_su[u] * inv_si[i]
    row_of = np.repeat(np.arange(mat.shape[0]), np.diff(mat.indptr))
    mat.data *= inv_su[row_of] * inv_si[mat.indices]
    return NormalizedAdjacency(csr=mat, csc=mat.tocsc())


def gram_matvec(adj: NormalizedAdjacency, v: np.ndarray) -> np.ndarray:
    """Apply the item Gram filter A^T A to an item vector via two matvecs."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (adj.n_items,):
        raise ValueError(
            f"vector length {v.shape} does not match n_items {adj.n_items}")
    return adj.csc.T @ (adj.csr @ v)


def gram_matmat(adj: NormalizedAdjacency, rows: sp.csr_matrix) -> np.ndarray:
    """Gram filter applied to a stack of item vectors (rows: B x n_items)."""
    tmp = adj.csr @ rows.T.toarray() if sp.issparse(rows) else adj.csr @ rows.T
    return (adj.csc.T @ tmp).T


@dataclass(frozen=True)
class DecayCoefficients:
    """Per-item decay slowdown for one user: c = gamma * (A^T A r_u). All >= 0."""

    user: int
    coeffs: np.ndarray


def decay_coefficients(adj: NormalizedAdjacency, u: int, gamma: float) -> DecayCoefficients:
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    r = adj.binary_row(u)
    return DecayCoefficients(user=u, coeffs=gamma * gram_matvec(adj, r))


class DecayCache:
    """Lazy per-user cache of decay coefficient rows.

    Caches everything while the dense table fits in ``memory_cap`` bytes
    (default 4 GiB); beyond that each request is recomputed from the two
    sparse matvecs, which is the dominant preprocessing cost either way.
    """

    def __init__(self, adj: NormalizedAdjacency, gamma: float,
                 memory_cap: int = 4 << 30):
        if gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {gamma}")
        self.adj = adj
        self.gamma = gamma
        self._caching = adj.n_users * adj.n_items * 8 <= memory_cap
        self._rows: dict[int, np.ndarray] = {}

    def get(self, u: int) -> np.ndarray:
        if self._caching and u in self._rows:
            return self._rows[u]
        row = decay_coefficients(self.adj, u, self.gamma).coeffs
        if self._caching:
            self._rows[u] = row
        return row

    def get_many(self, users) -> np.ndarray:
        return np.stack([self.get(int(u)) for u in users])


def split_validation(interactions: InteractionMatrix, fraction: float,
                     seed: int) -> tuple[InteractionMatrix, InteractionMatrix]:
    """Per-user random holdout of floor(fraction * degree) items.

    Users whose floor is zero keep their whole row in the train part.
    Deterministic for a fixed seed; train and holdout partition the input.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    train_pairs: list[tuple[int, int]] = []
    valid_pairs: list[tuple[int, int]] = []
    for u in range(interactions.n_users):
        items = interactions.row_items(u)
        k = int(np.floor(fraction * len(items)))
        if k == 0:
            train_pairs.extend((u, int(i)) for i in items)
            continue
        held = stream(seed, "split.holdout", u).choice(items, size=k, replace=False)
        held_set = set(int(i) for i in held)
        for i in items:
            (valid_pairs if int(i) in held_set else train_pairs).append((u, int(i)))
    train = from_rows(train_pairs, interactions.n_users, interactions.n_items)
    valid = (from_rows(valid_pairs, interactions.n_users, interactions.n_items)
             if valid_pairs else
             InteractionMatrix(sp.csr_matrix((interactions.n_users,
                                              interactions.n_items))))
    return train, valid
