"""Burn-down diffusion collaborative filtering."""

__version__ = "0.1.0"

from .data import (DecayCache, InteractionMatrix, NormalizedAdjacency,
                   decay_coefficients, gram_matvec, load_interactions,
                   normalize, split_validation)
from .kernel import (DecaySchemeConfig, DiffusionSchedule, bridge_ratio,
                     bridge_sample, decay_variant_prob, forward_pmf,
                     forward_sample, poisson_step, stage_init, survival_prob)
from .metrics import MetricsReport, evaluate, ndcg_at_k, popularity_groups, recall_at_k
from .network import (NetworkConfig, ScoreNetParams, adam_step, init_params,
                      load_checkpoint, net_backward, net_forward, q_estimate,
                      save_checkpoint)
from .pipeline import RunConfig, run_evaluate, run_recommend, run_synth, run_train, run_verify
from .recommend import RecommendationList, burn_up, network_estimator, top_k
from .training import TrainConfig, elbo_loss, finite_time_loss, fit, train_epoch
