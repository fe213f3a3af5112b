"""Request/response models of the pipeline service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ConfigSpec(BaseModel):
    """Training/inference configuration; defaults match the CLI."""

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
    hidden: list[int] = Field(default_factory=lambda: [1000])
    time_dim: int = 16
    decay_scheme: str = "burndown"
    decay_alpha: float = 1.0
    decay_beta: float = 0.25
    decay_lam: float = 1.0
    valid_fraction: float = 0.1
    workers: int = 1


class SynthRequest(BaseModel):
    out_dir: str
    n_users: int = 200
    n_items: int = 100
    n_blocks: int = 2
    holdout: float = 0.2
    seed: int = 0


class SynthResponse(BaseModel):
    train_path: str
    test_path: str
    n_users: int
    n_items: int
    n_train_interactions: int
    n_test_interactions: int


class TrainRequest(BaseModel):
    train_path: str
    out_dir: str
    config: ConfigSpec = Field(default_factory=ConfigSpec)


class TrainResponse(BaseModel):
    checkpoint_path: str
    best_epoch: int
    best_valid_recall20: float
    epochs_run: int
    config_hash: str
    checkpoint_sha256: str
    log_path: str


class RecommendRequest(BaseModel):
    checkpoint_path: str
    train_path: str
    out_dir: str
    cutoff: int = 50
    mode_override: str | None = None
    config: ConfigSpec = Field(default_factory=ConfigSpec)


class RecommendResponse(BaseModel):
    output_path: str
    n_users: int
    n_empty_lists: int
    cutoff: int
    config_hash: str


class EvaluateRequest(BaseModel):
    recommendations_path: str
    test_path: str
    train_path: str
    out_dir: str | None = None
    cutoffs: list[int] = Field(default_factory=lambda: [10, 20, 50])
    config_hash: str = ""


class GroupMetrics(BaseModel):
    recall: dict[str, float]
    ndcg: dict[str, float]
    n_users: int


class EvaluateResponse(BaseModel):
    cutoffs: list[int]
    recall: dict[str, float]
    ndcg: dict[str, float]
    n_users: int
    skipped_users: int
    config_hash: str
    git_revision: str
    groups: dict[str, GroupMetrics] | None = None
    report_path: str | None = None


class VerifyRequest(BaseModel):
    suites: list[str] | None = None


class SuiteResult(BaseModel):
    name: str
    passed: bool
    detail: str
    seconds: float


class VerifyResponse(BaseModel):
    passed: bool
    suites: list[SuiteResult]


class HealthResponse(BaseModel):
    status: str
    version: str
