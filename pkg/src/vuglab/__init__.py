"""Desk-scale lab for fairness-aware cross-domain recommendation with
virtual user generation, plus an information-theoretic verifier of the
overlap advantage.
"""

from .channels import (
    NONOVERLAPPING,
    OVERLAPPING,
    ChannelSpec,
    bayes_error,
    bias_experiment,
    exact_joint,
    fano_bound,
    info_quantities,
    sample_pairs,
)
from .data import (
    CrossDomainDataset,
    DomainDataset,
    SplitDataset,
    binarize,
    build_cross,
    dedupe,
    k_core_filter,
    load_interactions,
    split_per_user,
)
from .generator import (
    GeneratorParams,
    attention_weights,
    generate_all,
    generate_virtual,
    item_profile,
    knn_generate,
    user_attention_logits,
)
from .limiter import LimiterConfig, constrain_loss, generator_objective, super_loss
from .metrics import EvalReport, evaluate, hit_rate_at_k, ndcg_at_k, ugf
from .model import CDR, CDR_VUG, TARGET_ONLY, CdrModel, TrainBatch, sample_negatives
from .params import AdamConfig, ParameterStore, finite_diff_check, init_embeddings
from .training import KNN_VUG, Trainer, TrainConfig, TrainLog, fit

__version__ = "0.1.0"
