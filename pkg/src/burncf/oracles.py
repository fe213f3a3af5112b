"""Independent brute-force oracles backing the test suite.

Everything here is deliberately slow and dense: exact enumeration with
integer binomial coefficients, per-coordinate finite differences, dense
eigendecompositions.  These validate the fast paths, they never scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PosteriorTable:
    """Exact reverse-transition distribution over m in {k, ..., n}."""

    n: int
    k: int
    support: np.ndarray
    enumerated: np.ndarray   # Bayes enumeration
    closed_form: np.ndarray  # C(n-k, m-k) r^{m-k} (1-r)^{n-m}

    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.enumerated - self.closed_form)))


def _binom_pmf(n: int, p: float, k: int) -> float:
    # exact integer coefficient; independent of the kernel's log-space path
    return math.comb(n, k) * p**k * (1.0 - p) ** (n - k)


def reverse_posterior_oracle(n: int, k: int, p_prev: float, p_now: float) -> PosteriorTable:
    """Exact distribution of the pre-step state m given endpoints (k, n).

    p_prev and p_now are the survival probabilities at times t-dt and t.
    Enumerates Bayes' rule directly and pairs it with the closed form
    Binomial(n-k, r) on m-k, with r = (p_prev - p_now) / (1 - p_now).
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < p_now <= p_prev <= 1.0:
        raise ValueError(
            f"need 0 < p_now <= p_prev <= 1, got p_prev={p_prev}, p_now={p_now}")
    step_survival = p_now / p_prev
    support = np.arange(k, n + 1)
    joint = np.array([
        _binom_pmf(m, step_survival, k) * _binom_pmf(n, p_prev, m)
        for m in support
    ])
    total = joint.sum()
    if total <= 0:
        raise ValueError(f"impossible configuration n={n}, k={k}: zero mass")
    enumerated = joint / total

    if p_now >= 1.0:
        closed = np.where(support == n, 1.0, 0.0)
    else:
        r = (p_prev - p_now) / (1.0 - p_now)
        closed = np.array([
            _binom_pmf(n - k, r, m - k) for m in support
        ])
    return PosteriorTable(n=n, k=k, support=support,
                          enumerated=enumerated, closed_form=closed)


def finite_diff_grad(loss_fn, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a time."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    flat = params.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        f_plus = loss_fn(params)
        flat[idx] = orig - h
        f_minus = loss_fn(params)
        flat[idx] = orig
        gflat[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest deviation relative to the gradient scale.

    Scaled by the max-norm of the larger vector, not per coordinate:
    central differences carry O(eps/h) absolute noise, so coordinates near
    zero would otherwise report spurious huge ratios.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-12)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


@dataclass(frozen=True)
class DecayOrderingReport:
    """Outcome of the expected-value decay ordering checks on one instance."""

    item_pairs: int
    item_violations: int
    spectral_pairs: int
    spectral_violations: int

    @property
    def clean(self) -> bool:
        return self.item_violations == 0 and self.spectral_violations == 0


def spectral_decay_check(adj_dense: np.ndarray, r_u: np.ndarray, gamma: float,
                         t: float, tol: float = 1e-9) -> DecayOrderingReport:
    """Check that collaborative affinity ordering predicts decay-rate ordering.

    Works on the expectation dynamics x_i(t) = x_i(0) * exp(-t/(1+c_i))
    with c = gamma * (A^T A) r_u.  Item level: larger c_i must mean a larger
    surviving fraction at every probe time.  Spectral level: eigenvectors of
    diag(c) with larger Rayleigh quotient v^T diag(c) v must show a smaller
    fitted decay rate of their projected component.
    """
    adj_dense = np.asarray(adj_dense, dtype=np.float64)
    if adj_dense.shape[1] > 50:
        raise ValueError("dense spectral check is capped at 50 items")
    if t <= 0:
        raise ValueError(f"probe time must be positive, got {t}")
    gram = adj_dense.T @ adj_dense
    c = gamma * (gram @ np.asarray(r_u, dtype=np.float64))
    rates = 1.0 / (1.0 + c)
    probe_times = np.linspace(t / 4.0, t, 4)

    # item level: survival fraction exp(-t*rate) ordering must match c ordering
    n = c.size
    item_pairs = 0
    item_violations = 0
    for ti in probe_times:
        frac = np.exp(-ti * rates)
        for i in range(n):
            for j in range(n):
                if c[i] > c[j] + tol:
                    item_pairs += 1
                    if not frac[i] > frac[j]:
                        item_violations += 1

    # spectral level: project x(t) = exp(-t*rate) (unit initial interest per
    # item) onto eigenvectors of diag(c); fit the log-linear decay rate
    eigvals, eigvecs = np.linalg.eigh(np.diag(c))
    x0 = np.ones(n)
    grid = np.linspace(0.0, t, 5)
    traj = np.exp(-np.outer(grid, rates)) * x0  # len(grid) x n
    proj = traj @ eigvecs                        # component per eigenvector
    fitted = np.full(n, np.nan)
    for v in range(n):
        comp = proj[:, v]
        if np.min(np.abs(comp)) < 1e-12 or np.any(np.sign(comp) != np.sign(comp[0])):
            continue  # unmeasurable component (zero or sign-crossing signal)
        slope = np.polyfit(grid, np.log(np.abs(comp)), 1)[0]
        fitted[v] = -slope
    rayleigh = eigvals  # v^T diag(c) v equals the eigenvalue for unit v

    spectral_pairs = 0
    spectral_violations = 0
    for a in range(n):
        for b in range(n):
            if np.isnan(fitted[a]) or np.isnan(fitted[b]):
                continue
            if rayleigh[a] > rayleigh[b] + tol:
                spectral_pairs += 1
                if not fitted[a] < fitted[b]:
                    spectral_violations += 1

    return DecayOrderingReport(item_pairs=item_pairs,
                               item_violations=item_violations,
                               spectral_pairs=spectral_pairs,
                               spectral_violations=spectral_violations)
