"""End-to-end pipeline operations shared by the HTTP service and the CLI.

Each operation takes explicit paths plus a RunConfig, writes its artifacts
under an output directory, and returns a JSON-ready summary.  Reports and
checkpoints are byte-deterministic for a fixed config and seed.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import metrics as metrics_mod
from . import synth
from .data import (DecayCache, InteractionMatrix, load_interactions,
                   normalize, split_validation)
from .kernel import DecaySchemeConfig, DiffusionSchedule, bridge_ratio
from .network import (load_checkpoint, save_checkpoint, ScoreNetParams)
from .oracles import (relative_error, reverse_posterior_oracle,
                      spectral_decay_check, finite_diff_grad)
from .recommend import (burn_up, burn_up_scores, network_estimator,
                        rank_users, read_recommendations,
                        write_recommendations)
from .rng import stream
from .training import TrainConfig, fit, validation_recall

DEFAULT_CUTOFFS = (10, 20, 50)


@dataclass(frozen=True)
class RunConfig:
    """Everything that shapes a training run; hashed into every artifact."""

    stages: int = 300
    horizon: float = 4.0
    n_steps: int = 100
    reverse_horizon: float | None = None
    mode: str = "bridge"
    rate_mode: str = "personalized"
    gamma: float = 1.0
    objective: str = "instantaneous"
    lr: float = 1e-4
    dropout: float = 0.5
    batch_size: int = 512
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    hidden: tuple[int, ...] = (1000,)
    time_dim: int = 16
    decay_scheme: str = "burndown"
    decay_alpha: float = 1.0
    decay_beta: float = 0.25
    decay_lam: float = 1.0
    valid_fraction: float = 0.1
    workers: int = 1

    def schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule(horizon=self.horizon, n_steps=self.n_steps,
                                 reverse_horizon=self.reverse_horizon,
                                 mode=self.mode, rate_mode=self.rate_mode)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            stages=self.stages, schedule=self.schedule(), gamma=self.gamma,
            objective=self.objective, lr=self.lr, dropout=self.dropout,
            batch_size=self.batch_size, patience=self.patience,
            max_epochs=self.max_epochs, seed=self.seed,
            hidden=tuple(self.hidden), time_dim=self.time_dim,
            decay_scheme=DecaySchemeConfig(scheme=self.decay_scheme,
                                           alpha=self.decay_alpha,
                                           beta=self.decay_beta,
                                           lam=self.decay_lam))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def config_from_dict(d: dict) -> RunConfig:
    base = RunConfig()
    known = set(asdict(base).keys())
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = {**asdict(base), **d}
    merged["hidden"] = tuple(merged["hidden"])
    return RunConfig(**merged)


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path: str) -> None:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"missing input file: {path}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# -- synth ----------------------------------------------------------------

def run_synth(out_dir: str, n_users: int, n_items: int, n_blocks: int,
              holdout: float, seed: int) -> dict:
    return synth.generate_files(out_dir, n_users, n_items, n_blocks,
                                holdout, seed)


# -- train ----------------------------------------------------------------

def run_train(config: RunConfig, train_path: str, out_dir: str) -> dict:
    _require_file(train_path)
    os.makedirs(out_dir, exist_ok=True)
    interactions = load_interactions(train_path)
    train, valid = split_validation(interactions, config.valid_fraction,
                                    config.seed)
    if valid.nnz == 0:
        raise ValueError(
            "validation split is empty; every user has fewer than "
            f"{1.0 / config.valid_fraction:.0f} interactions")
    cache = DecayCache(normalize(train), config.gamma)
    tc = config.train_config()
    log_path = os.path.join(out_dir, "training_log.txt")
    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        def log_fn(epoch, loss, recall, seconds):
            log.write(f"epoch={epoch} loss={loss:.6f} "
                      f"valid_recall20={recall:.6f} seconds={seconds:.2f}\n")
            log.flush()
        result = fit(train, valid, tc, cache=cache, log_fn=log_fn)
    chash = config.config_hash()
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    save_checkpoint(ckpt_path, result.params, chash)
    curve = [{"epoch": h["epoch"], "loss": h["loss"],
              "valid_recall20": h["valid_recall20"]} for h in result.history]
    _write_json(os.path.join(out_dir, "validation_curve.json"), {
        "curve": curve, "best_epoch": result.best_epoch,
        "best_valid_recall20": result.best_recall, "config_hash": chash,
    })
    _write_json(os.path.join(out_dir, "config.json"), config.to_dict())
    return {
        "checkpoint_path": ckpt_path,
        "best_epoch": result.best_epoch,
        "best_valid_recall20": result.best_recall,
        "epochs_run": len(result.history),
        "config_hash": chash,
        "checkpoint_sha256": sha256_file(ckpt_path),
        "log_path": log_path,
    }


# -- recommend --------------------------------------------------------------

def run_recommend(config: RunConfig, checkpoint_path: str, train_path: str,
                  out_dir: str, cutoff: int = 50,
                  mode_override: str | None = None) -> dict:
    _require_file(checkpoint_path)
    _require_file(train_path)
    os.makedirs(out_dir, exist_ok=True)
    chash = config.config_hash()
    params = load_checkpoint(checkpoint_path, expected_config_hash=chash)
    train = load_interactions(train_path)
    if train.n_items != params.config.n_items:
        raise ValueError(
            f"checkpoint was trained on {params.config.n_items} items, "
            f"data has {train.n_items}")
    schedule = config.schedule()
    if mode_override is not None:
        schedule = replace(schedule, mode=mode_override)
    cache = DecayCache(normalize(train), config.gamma)
    users = np.arange(train.n_users)
    scores = burn_up_scores(params, train, cache, schedule, config.stages,
                            config.seed, "recommend", users)
    recs = rank_users(train, users, scores, cutoff, config.seed)
    n_empty = sum(1 for r in recs if len(r.items) == 0)
    out_path = os.path.join(out_dir, "recommendations.tsv")
    write_recommendations(out_path, recs)
    return {
        "output_path": out_path,
        "n_users": int(train.n_users),
        "n_empty_lists": n_empty,
        "cutoff": cutoff,
        "config_hash": chash,
    }


# -- evaluate ---------------------------------------------------------------

def run_evaluate(recommendations_path: str, test_path: str, train_path: str,
                 out_dir: str | None = None,
                 cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS,
                 config_hash: str = "") -> dict:
    _require_file(recommendations_path)
    _require_file(test_path)
    _require_file(train_path)
    train = load_interactions(train_path)
    test = load_interactions(test_path, n_users=train.n_users,
                             n_items=train.n_items)
    ranked = read_recommendations(recommendations_path)
    groups = metrics_mod.popularity_groups(train)
    report = metrics_mod.evaluate(ranked, test, groups=groups,
                                  cutoffs=cutoffs, train=train)
    report.config_hash = config_hash
    report.git_revision = git_revision()
    payload = report.to_dict()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_json(os.path.join(out_dir, "metrics.json"), payload)
        payload["report_path"] = os.path.join(out_dir, "metrics.json")
    return payload


# -- popularity baseline ------------------------------------------------------

def popularity_ranking(train: InteractionMatrix) -> np.ndarray:
    """Items by training interaction count descending (id ascending on ties)."""
    counts = train.item_degrees()
    return np.lexsort((np.arange(train.n_items), -counts))


def popularity_recommendations(train: InteractionMatrix, cutoff: int) -> dict[int, list[int]]:
    ranking = popularity_ranking(train)
    out = {}
    for u in range(train.n_users):
        history = set(int(i) for i in train.row_items(u))
        out[u] = [int(i) for i in ranking if int(i) not in history][:cutoff]
    return out


# -- verify -------------------------------------------------------------------

def _suite_reverse_posterior() -> dict:
    grid = np.linspace(0.1, 0.9, 5)
    worst = 0.0
    checked = 0
    for n in range(0, 7):
        for k in range(0, n + 1):
            for p_prev in grid:
                for frac in np.linspace(0.2, 1.0, 5):
                    p_now = p_prev * frac
                    table = reverse_posterior_oracle(n, k, p_prev, p_now)
                    worst = max(worst, table.max_abs_diff())
                    if abs(table.enumerated.sum() - 1.0) > 1e-12:
                        return {"passed": False,
                                "detail": f"posterior not normalized at n={n}, k={k}"}
                    checked += 1
    # the implementation's restoration probability must match the oracle's r
    for t, dt in ((4.0, 0.04), (1.0, 0.5), (0.5, 0.1), (2.0, 2.0)):
        p_prev, p_now = np.exp(-(t - dt)), np.exp(-t)
        r_impl = float(bridge_ratio(0.0, t, dt, "global"))
        r_ref = (p_prev - p_now) / (1.0 - p_now)
        worst = max(worst, abs(r_impl - r_ref))
    return {"passed": worst <= 1e-12,
            "detail": f"{checked} tables, max abs diff {worst:.3e}"}


def _suite_gradient_checks(n_instances: int = 20) -> dict:
    from .network import NetworkConfig, init_params, net_backward, net_forward, q_estimate
    from .training import composite_dlogits, elbo_loss
    worst_elbo = 0.0
    worst_net = 0.0
    for trial in range(n_instances):
        g = stream(1000 + trial, "verify.grad")
        n_items = 5
        q = g.uniform(0.5, 3.0, n_items)
        x0 = g.integers(0, 6, n_items)
        xt = np.minimum(g.integers(0, 6, n_items), x0)
        f = g.uniform(0.0, 2.0, n_items)
        _, dq = elbo_loss(q, x0, xt, f)
        num = finite_diff_grad(lambda qq: elbo_loss(qq, x0, xt, f)[0],
                               q.copy(), h=1e-6)
        worst_elbo = max(worst_elbo, relative_error(dq, num))

        # alternate dropout-free and fixed-mask instances; masks must be
        # frozen so the finite-difference function stays deterministic
        dropout = 0.0 if trial % 2 == 0 else 0.5
        cfg = NetworkConfig(n_items=n_items, stages=4, hidden=(8,),
                            time_dim=6, dropout=dropout)
        params = init_params(cfg, g)
        x = g.integers(0, 5, n_items).astype(np.float64)
        step = 3
        masks = _dropout_masks_for(cfg, stream(1, "verify.mask", trial))

        def loss_of(_ignored):
            logits, _ = net_forward(params, x, step, train_mode=True, masks=masks)
            qv = q_estimate(logits)
            return elbo_loss(qv, x0, xt, f)[0]

        logits, cache2 = net_forward(params, x, step, train_mode=True, masks=masks)
        qv = q_estimate(logits)
        _, dq2 = elbo_loss(qv, x0, xt, f)
        grads = net_backward(params, cache2, composite_dlogits(dq2, logits))
        for tensor, grad in zip(params.tensors(), grads.tensors()):
            num = finite_diff_grad(lambda _t: loss_of(params), tensor, h=1e-5)
            worst_net = max(worst_net, relative_error(grad, num))
    passed = worst_elbo <= 1e-6 and worst_net <= 1e-4
    return {"passed": passed,
            "detail": f"elbo rel err {worst_elbo:.2e}, composite rel err {worst_net:.2e} "
                      f"({n_instances} instances)"}


def _dropout_masks_for(cfg, rng) -> list[np.ndarray]:
    hidden = cfg.widths[1:-1]
    if cfg.dropout == 0.0:
        return [np.ones((1, h)) for h in hidden]
    keep = 1.0 - cfg.dropout
    return [(rng.random((1, h)) < keep) / keep for h in hidden]


def _suite_bridge_recovery() -> dict:
    from .kernel import forward_sample, stage_init
    failures = 0
    for trial in range(100):
        g = stream(5000 + trial, "verify.recovery")
        n_items = int(g.integers(2, 8))
        stages = int(g.integers(2, 12))
        r = (g.random(n_items) < 0.7).astype(np.float64)
        coeffs = g.uniform(0.0, 2.0, n_items)
        schedule = DiffusionSchedule(horizon=2.0, n_steps=int(g.integers(3, 12)),
                                     rate_mode="personalized")
        x0 = stage_init(r, stages)
        x_t = forward_sample(x0, coeffs, schedule.horizon, g)

        def oracle(x, step, x0=x0):
            return (x0 - x).astype(np.float64)

        final = burn_up(oracle, r, coeffs, schedule, stages, g, start=x_t)
        if not np.array_equal(final, x0):
            failures += 1
    return {"passed": failures == 0, "detail": f"{failures} failures in 100 runs"}


def _suite_thinning_composition(n_samples: int = 100_000) -> dict:
    from scipy.stats import chi2
    from .kernel import forward_pmf, forward_sample
    cells = [(c, t1, t2)
             for c in (0.0, 1.0, 3.0)
             for t1, t2 in ((0.5, 0.5), (1.0, 1.0), (0.3, 0.7), (1.0, 2.0),
                            (0.2, 1.8), (2.0, 2.0))]
    cells += [(0.0, 0.1, 0.1), (1.0, 0.4, 0.4)]  # 20 cells total
    stages = 10
    failures = 0
    for idx, (c, t1, t2) in enumerate(cells):
        g = stream(7100 + idx, "verify.thinning")
        x0 = np.full(n_samples, stages, dtype=np.int64)
        x1 = forward_sample(x0, c, t1, g)
        x2 = forward_sample(x1, c, t2, g)
        p_total = float(np.exp(-(t1 + t2) / (1.0 + c)))
        expected = np.array([forward_pmf(stages, p_total, k)
                             for k in range(stages + 1)]) * n_samples
        observed = np.bincount(x2, minlength=stages + 1).astype(np.float64)
        # merge tail bins with expectation below 5
        keep = expected >= 5.0
        obs = np.append(observed[keep], observed[~keep].sum())
        exp = np.append(expected[keep], expected[~keep].sum())
        if exp[-1] == 0.0:
            obs, exp = obs[:-1], exp[:-1]
        stat = float(np.sum((obs - exp) ** 2 / exp))
        dof = len(exp) - 1
        if stat > chi2.ppf(0.99, dof):
            failures += 1
    return {"passed": failures <= 1,
            "detail": f"{failures} of 20 cells outside the 99% band"}


def _suite_decay_ordering() -> dict:
    bad = 0
    for trial in range(20):
        g = stream(9000 + trial, "verify.ordering")
        n_users, n_items = 8, 10
        dense = (g.random((n_users, n_items)) < 0.4).astype(np.float64)
        dense[0, :3] = 1.0  # anchor user has history
        du = dense.sum(axis=1, keepdims=True)
        di = dense.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            adj = np.where((du > 0) & (di > 0), dense / np.sqrt(du * di), 0.0)
        r_u = dense[0]
        report = spectral_decay_check(adj, r_u, gamma=1.0, t=4.0)
        if not report.clean:
            bad += 1
    return {"passed": bad == 0, "detail": f"{bad} of 20 instances had violations"}


def _suite_stationarity(n_samples: int = 100_000) -> dict:
    from .kernel import forward_sample
    stages = 5
    coeffs = np.array([0.0, 1.0, 3.0])
    c_max = float(coeffs.max())
    t = 10.0 * (1.0 + c_max)
    g = stream(11000, "verify.stationarity")
    x0 = np.full((n_samples, coeffs.size), stages, dtype=np.int64)
    draws = forward_sample(x0, coeffs, t, g)
    p_hat = (draws > 0).mean(axis=0)
    bound = stages * np.exp(-t / (1.0 + coeffs))
    sigma = np.sqrt(np.maximum(bound * (1.0 - bound), 1e-300) / n_samples)
    ok = bool(np.all(p_hat <= bound + 3.0 * sigma))
    detail = ", ".join(f"c={c:g}: p={p:.2e} bound={b:.2e}"
                       for c, p, b in zip(coeffs, p_hat, bound))
    return {"passed": ok, "detail": detail}


VERIFY_SUITES = {
    "reverse_posterior": _suite_reverse_posterior,
    "gradient_checks": _suite_gradient_checks,
    "bridge_recovery": _suite_bridge_recovery,
    "thinning_composition": _suite_thinning_composition,
    "decay_ordering": _suite_decay_ordering,
    "stationarity_bound": _suite_stationarity,
}


def run_verify(suites: list[str] | None = None) -> dict:
    names = suites if suites is not None else list(VERIFY_SUITES)
    unknown = [n for n in names if n not in VERIFY_SUITES]
    if unknown:
        raise ValueError(f"unknown verify suites: {unknown}")
    results = []
    for name in names:
        t0 = time.perf_counter()
        outcome = VERIFY_SUITES[name]()
        results.append({"name": name, "passed": bool(outcome["passed"]),
                        "detail": outcome["detail"],
                        "seconds": round(time.perf_counter() - t0, 3)})
    return {"passed": all(r["passed"] for r in results), "suites": results}
