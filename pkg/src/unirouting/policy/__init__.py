from .checkpoint import CheckpointError, load, save
from .model import (
    BRANCHES,
    DECODER_SITES,
    PolicyConfig,
    UnifiedPolicy,
    aafm,
    aafm_naive,
    adaptation_bias,
    bias_sites,
)
from .rollout import RolloutBatch, Trajectory, default_starts, encode_instances, rollout, run_policy

__all__ = [
    "CheckpointError", "load", "save", "BRANCHES", "DECODER_SITES", "PolicyConfig", "UnifiedPolicy",
    "aafm", "aafm_naive", "adaptation_bias", "bias_sites", "RolloutBatch", "Trajectory",
    "default_starts", "encode_instances", "rollout", "run_policy",
]
