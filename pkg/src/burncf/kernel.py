"""Burn-down/burn-up diffusion kernel.

Forward process: each of the K interest stages of an item survives time t
with probability exp(-t / (1 + c_i)), where c_i >= 0 slows decay on items
collaboratively close to the user's history.  The reverse process restores
the deficit through binomial-bridge (or Poisson) increments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class DiffusionSchedule:
    """Time discretization and sampler switches.

    horizon is the forward time range T, split into n_steps equal steps;
    reverse_horizon (T', defaults to T) bounds the burn-up loop.
    """

    horizon: float = 4.0
    n_steps: int = 100
    reverse_horizon: float | None = None
    mode: str = "bridge"              # bridge | poisson
    rate_mode: str = "personalized"   # personalized | global

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.mode not in ("bridge", "poisson"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.rate_mode not in ("personalized", "global"):
            raise ValueError(f"unknown rate mode {self.rate_mode!r}")
        if self.reverse_horizon is not None and self.reverse_horizon > self.horizon + 1e-12:
            raise ValueError("reverse_horizon must not exceed horizon")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_reverse_steps(self) -> int:
        if self.reverse_horizon is None:
            return self.n_steps
        return max(1, int(round(self.reverse_horizon / self.dt)))

    def time_of(self, step: int) -> float:
        """Continuous time of a 1-based step index."""
        if not 1 <= step <= self.n_steps:
            raise ValueError(f"step {step} outside [1, {self.n_steps}]")
        return step * self.dt


@dataclass(frozen=True)
class DecaySchemeConfig:
    """Selects the decay law used to corrupt training inputs.

    burndown is the personalized binomial survival; the other three are
    study variants (power / linear binomial probabilities, plus a
    deterministic exponential rescaling).
    """

    scheme: str = "burndown"
    alpha: float = 1.0   # power: (1+t)^(-alpha)
    beta: float = 0.25   # linear: max(0, 1 - beta*t)
    lam: float = 1.0     # exponential_deterministic: scale exp(-lam*t)

    def __post_init__(self):
        if self.scheme not in ("burndown", "exponential_deterministic", "power", "linear"):
            raise ValueError(f"unknown decay scheme {self.scheme!r}")
        if self.scheme == "power" and self.alpha <= 0:
            raise ValueError("power decay needs alpha > 0")
        if self.scheme == "linear" and self.beta <= 0:
            raise ValueError("linear decay needs beta > 0")
        if self.scheme == "exponential_deterministic" and self.lam <= 0:
            raise ValueError("exponential decay needs lam > 0")


def stage_init(r_u: np.ndarray, stages: int) -> np.ndarray:
    """Lift a binary interaction vector to stage counts: K on history, 0 off."""
    if stages < 1:
        raise ValueError(f"stage count must be >= 1, got {stages}")
    r = np.asarray(r_u)
    return (stages * (r > 0)).astype(np.int64)


def survival_prob(coeffs, t: float):
    """Probability exp(-t / (1 + c)) that one interest stage survives to t."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return np.exp(-t / (1.0 + np.asarray(coeffs, dtype=np.float64)))


def forward_sample(x0: np.ndarray, coeffs, t: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw the burnt-down state: Binomial(x0_i, exp(-t/(1+c_i))) per item."""
    x0 = np.asarray(x0, dtype=np.int64)
    p = np.broadcast_to(survival_prob(coeffs, t), x0.shape)
    return rng.binomial(x0, p)


def forward_pmf(n: int, p: float, k: int) -> float:
    """Probability of k survivors out of n at survival probability p.

    Evaluated in log space so counts up to several hundred stay exact to
    double precision.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"survival probability {p} outside [0, 1]")
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    log_choose = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return float(np.exp(log_choose + k * np.log(p) + (n - k) * np.log1p(-p)))


def bridge_ratio(coeffs, t: float, dt: float, rate_mode: str = "personalized"):
    """Per-step restoration probability of the reverse bridge.

    Global mode: (e^{-(t-dt)} - e^{-t}) / (1 - e^{-t}).  Personalized mode
    applies the per-item rate 1/(1+c) to every exponent.  Equals exactly 1
    at the last reverse step (t == dt).
    """
    if t <= 0:
        raise ValueError(f"bridge ratio undefined at t={t} (zero denominator)")
    if not 0 < dt <= t + 1e-12:
        raise ValueError(f"need 0 < dt <= t, got dt={dt}, t={t}")
    if rate_mode == "global":
        rate = 1.0
    elif rate_mode == "personalized":
        rate = 1.0 / (1.0 + np.asarray(coeffs, dtype=np.float64))
    else:
        raise ValueError(f"unknown rate mode {rate_mode!r}")
    # r = e^{-(t-dt)r} * (1 - e^{-dt*r}) / (1 - e^{-t*r}), exact 1.0 at t == dt
    num = np.exp(-(t - dt) * rate) * (-np.expm1(-dt * rate))
    den = -np.expm1(-t * rate)
    return num / den


def bridge_sample(deficit: np.ndarray, ratio, rng: np.random.Generator) -> np.ndarray:
    """Binomial-bridge increment: Binomial(deficit_i, ratio_i) per item."""
    deficit = np.asarray(deficit, dtype=np.int64)
    if np.any(deficit < 0):
        raise ValueError("deficit must be nonnegative")
    p = np.broadcast_to(np.asarray(ratio, dtype=np.float64), deficit.shape)
    return rng.binomial(deficit, np.clip(p, 0.0, 1.0))


def poisson_step(q: np.ndarray, t: float, dt: float, rng: np.random.Generator,
                 cap: np.ndarray | None = None) -> np.ndarray:
    """Poisson variant of the reverse increment.

    The rate is the dt-step restoration mass r_t (global form) times the
    estimated deficit q.  If cap is given, draws are clipped so the caller's
    state never exceeds the stage bound.
    """
    q = np.asarray(q, dtype=np.float64)
    if np.any(q < 0):
        raise ValueError("q must be nonnegative")
    lam = bridge_ratio(0.0, t, dt, rate_mode="global") * q
    draw = rng.poisson(lam)
    if cap is not None:
        draw = np.minimum(draw, np.asarray(cap, dtype=np.int64))
    return draw


def decay_variant_prob(cfg: DecaySchemeConfig, t: float):
    """Survival probability (or deterministic scale) of a study decay scheme."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if cfg.scheme == "burndown":
        raise ValueError("burndown uses survival_prob, not a variant scheme")
    if cfg.scheme == "power":
        return (1.0 + t) ** (-cfg.alpha)
    if cfg.scheme == "linear":
        return max(0.0, 1.0 - cfg.beta * t)
    # exponential_deterministic: not a probability; caller applies
    # x_t = round(x0 * scale)
    return float(np.exp(-cfg.lam * t))


def variant_sample(x0: np.ndarray, cfg: DecaySchemeConfig, t: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Corrupt x0 under a study decay scheme (used by the trainer ablation)."""
    x0 = np.asarray(x0, dtype=np.int64)
    scale = decay_variant_prob(cfg, t)
    if cfg.scheme == "exponential_deterministic":
        return np.round(x0 * scale).astype(np.int64)
    return rng.binomial(x0, scale)
