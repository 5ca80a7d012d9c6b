"""Learned memory-bank update policies for fixed-capacity video trackers.

The package provides the bank and its episodic control environment, a
closed-form synthetic tracker plus scripted replay tables, quality /
accuracy / robustness metrics, a from-scratch PPO trainer, reference
baselines with an exact dynamic-programming oracle, and a line-delimited
bridge protocol for external tracker processes.
"""

from .bank import (
    Action,
    DEFAULT_CAPACITY,
    MemoryBank,
    MemoryEntry,
    action_from_index,
    action_space,
    action_to_index,
    apply_action,
    auto_append,
    bank_from_frames,
    encode_observation,
    new_bank,
)
from .baselines import (
    FifoPolicy,
    GreedyPolicy,
    LearnedPolicy,
    OraclePolicy,
    OracleSolution,
    RandomPolicy,
    dp_oracle,
    fifo_policy,
    greedy_policy,
    random_policy,
)
from .bridge import (
    BridgeConnection,
    RemoteTracker,
    connect_remote_tracker,
    format_number,
    open_endpoint,
)
from .env import (
    DEFAULT_STATE_BUDGET,
    EpisodeTrace,
    StepInfo,
    StepOutcome,
    TraceStep,
    TrackingEnv,
    enumerate_reachable_states,
    episode_return,
    legal_transitions,
    rollout,
)
from .estimator import MemoryPolicyPPO
from .metrics import (
    FrameResult,
    MetricSummary,
    accuracy,
    comparison_table,
    compute_summary,
    frame_results_from_trace,
    quality,
    robustness,
    trace_quality,
)
from .ppo import (
    RolloutBatch,
    TrainConfig,
    TrainResult,
    TrainerState,
    collect_rollouts,
    compute_gae,
    load_checkpoint,
    normalize_advantages,
    ppo_loss,
    ppo_update,
    sample_action,
    save_checkpoint,
    train,
)
from .trackers import (
    ScriptedTable,
    ScriptedTracker,
    SimParams,
    SyntheticTracker,
    dump_scripted_table,
    simulate,
)
from .videos import FAMILIES, FrameSpec, VideoSpec, generate_video, load_video, save_video

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BridgeConnection",
    "DEFAULT_CAPACITY",
    "DEFAULT_STATE_BUDGET",
    "EpisodeTrace",
    "FAMILIES",
    "FifoPolicy",
    "FrameResult",
    "FrameSpec",
    "GreedyPolicy",
    "LearnedPolicy",
    "MemoryBank",
    "MemoryEntry",
    "MemoryPolicyPPO",
    "MetricSummary",
    "OraclePolicy",
    "OracleSolution",
    "RandomPolicy",
    "RemoteTracker",
    "RolloutBatch",
    "ScriptedTable",
    "ScriptedTracker",
    "SimParams",
    "StepInfo",
    "StepOutcome",
    "SyntheticTracker",
    "TraceStep",
    "TrackingEnv",
    "TrainConfig",
    "TrainResult",
    "TrainerState",
    "VideoSpec",
    "accuracy",
    "action_from_index",
    "action_space",
    "action_to_index",
    "apply_action",
    "auto_append",
    "bank_from_frames",
    "collect_rollouts",
    "comparison_table",
    "compute_gae",
    "compute_summary",
    "connect_remote_tracker",
    "dp_oracle",
    "dump_scripted_table",
    "encode_observation",
    "enumerate_reachable_states",
    "episode_return",
    "fifo_policy",
    "format_number",
    "frame_results_from_trace",
    "generate_video",
    "greedy_policy",
    "legal_transitions",
    "load_checkpoint",
    "load_video",
    "new_bank",
    "normalize_advantages",
    "open_endpoint",
    "ppo_loss",
    "ppo_update",
    "quality",
    "random_policy",
    "robustness",
    "rollout",
    "sample_action",
    "save_checkpoint",
    "save_video",
    "simulate",
    "trace_quality",
    "train",
]
