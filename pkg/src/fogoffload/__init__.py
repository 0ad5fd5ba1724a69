"""Online task offloading in a non-stationary fog network.

Discounted-UCB learner with delayed feedback, a slot-level simulator,
baseline schedulers, regret metrics and an experiment CLI.
"""

from .kernels import BACKEND
from .policy import (
    CompletedFeedback,
    PolicyConfig,
    PolicyState,
    TaskContext,
    TodPolicy,
    advance_slot,
    estimate_latency,
    new_policy,
    normalize_feedback,
    select_node,
    ucb_score,
)
from .env import EnvConfig, FogEnv, QueueParams

__version__ = "0.1.0"
