"""Autoregressive sequence policies that emit dispatch heuristics."""

from .lstm import LstmPolicy
from .rewards import rank_covariance, shaped_reward
from .sampling import (
    DEFAULT_MAX_LEN,
    allowed_token_mask,
    log_prob,
    masked_log_softmax,
    sample_sequence,
)
from .training import (
    AdamState,
    SearchStats,
    TrainState,
    load_policy_checkpoint,
    save_policy_checkpoint,
    standalone_search,
    train_step,
    vpg_loss,
)
from .transformer import TransformerPolicy, attention, causal_mask
from .vocab import Vocabulary, default_vocabulary

__all__ = [
    "AdamState",
    "DEFAULT_MAX_LEN",
    "LstmPolicy",
    "SearchStats",
    "TrainState",
    "TransformerPolicy",
    "Vocabulary",
    "allowed_token_mask",
    "attention",
    "causal_mask",
    "default_vocabulary",
    "load_policy_checkpoint",
    "log_prob",
    "masked_log_softmax",
    "rank_covariance",
    "sample_sequence",
    "save_policy_checkpoint",
    "shaped_reward",
    "standalone_search",
    "train_step",
    "vpg_loss",
]
