"""Discounted-UCB offloading learner with delayed feedback.

Nodes are indexed ``0..K-1``; index ``K-1`` is the local (task) node.  Slots
are 1-based as in the learner's own clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels


class InvalidConfig(ValueError):
    pass


class StaleFeedback(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    K: int
    gamma: float
    xi: float = 0.6
    tau_max: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InvalidConfig(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.xi > 0.5:
            raise InvalidConfig(f"xi must exceed 1/2, got {self.xi}")
        if self.K < 2:
            raise InvalidConfig(f"need at least 2 nodes, got K={self.K}")
        if self.tau_max < 1:
            raise InvalidConfig(f"tau_max must be >= 1, got {self.tau_max}")


@dataclass(frozen=True)
class ArmStats:
    """Read-only snapshot of one arm's discounted statistics."""

    n_disc: float
    w_bar: float
    p_bar: float
    pending: int


@dataclass(frozen=True)
class TaskContext:
    """What the task node sees at the start of slot ``task_id``."""

    task_id: int
    length: float
    tx_cost: np.ndarray
    queue: np.ndarray


@dataclass(frozen=True)
class CompletedFeedback:
    """A feedback arriving during slot ``receipt_slot - 1``.

    ``kind`` is ``"ok"`` for a normal report, ``"censored"`` for a
    synthesized timeout observation, and ``"dropped"`` for a timed-out task
    that carries no observation (it only clears the pending count).
    """

    task_id: int
    node: int
    receipt_slot: int
    w_obs: float
    p_obs: float
    kind: str = "ok"


def normalize_feedback(tau_w, tau_p, queue_at_issue, length):
    """Per-KB waiting and processing observations from reported delays.

    A task that met an empty queue has no waiting to normalize; its waiting
    observation is 0.
    """
    if length <= 0:
        raise ValueError(f"task length must be positive, got {length}")
    if tau_w < 0 or tau_p < 0:
        raise ValueError("reported delays must be non-negative")
    w_obs = tau_w / queue_at_issue if queue_at_issue > 0 else 0.0
    return w_obs, tau_p / length


@dataclass
class PolicyState:
    config: PolicyConfig
    t: int = 1
    n_disc: np.ndarray = field(default=None)
    w_bar: np.ndarray = field(default=None)
    p_bar: np.ndarray = field(default=None)
    pending: np.ndarray = field(default=None)
    n_total: float = 0.0

    def __post_init__(self):
        K = self.config.K
        for name in ("n_disc", "w_bar", "p_bar"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(K))
        if self.pending is None:
            self.pending = np.zeros(K, dtype=np.int64)
        self._scores = np.empty(K)
        self._add = np.zeros((3, K))

    @property
    def arms(self) -> list[ArmStats]:
        return [ArmStats(float(n), float(w), float(p), int(g))
                for n, w, p, g in zip(self.n_disc, self.w_bar, self.p_bar, self.pending)]


def new_policy(config: PolicyConfig) -> PolicyState:
    return PolicyState(config)


def estimate_latency(state: PolicyState, ctx: TaskContext, node: int) -> float:
    return (ctx.length * ctx.tx_cost[node]
            + ctx.queue[node] * state.w_bar[node]
            + ctx.length * state.p_bar[node])


def padding(state: PolicyState, node: int) -> float:
    """Exploration bonus for ``node``; ``inf`` for an arm with no data."""
    cfg = state.config
    n_i = state.n_disc[node]
    if n_i <= 0.0:
        return math.inf
    log_n = math.log(state.n_total) if state.n_total > 1.0 else 0.0
    return 2.0 * cfg.tau_max * math.sqrt(cfg.xi * log_n / n_i)


def estimated_reward(state: PolicyState, ctx: TaskContext, node: int) -> float:
    return state.config.tau_max - estimate_latency(state, ctx, node)


def ucb_score(state: PolicyState, ctx: TaskContext, node: int) -> float:
    bonus = padding(state, node)
    if math.isinf(bonus):
        return math.inf
    return estimated_reward(state, ctx, node) + bonus


def ucb_scores(state: PolicyState, ctx: TaskContext, explore: bool = True) -> np.ndarray:
    """All K scores at once (through the compiled kernel when available)."""
    cfg = state.config
    out = np.empty(cfg.K)
    kernels.ucb_scores(state.n_disc, state.w_bar, state.p_bar, float(ctx.length),
                       np.asarray(ctx.tx_cost, dtype=float),
                       np.asarray(ctx.queue, dtype=float),
                       float(cfg.tau_max), float(cfg.xi), float(state.n_total),
                       explore, out)
    return out


def argmax_lowest(scores: Sequence[float]) -> int:
    best, best_score = 0, -math.inf
    for i, s in enumerate(scores):
        if s > best_score:
            best, best_score = i, s
    return best


def select_node(state: PolicyState, ctx: TaskContext) -> int:
    if ctx.task_id != state.t:
        raise ValueError(f"context is for slot {ctx.task_id}, policy is at slot {state.t}")
    cfg = state.config
    if state.t <= cfg.K:
        return state.t - 1
    return kernels.ucb_scores(state.n_disc, state.w_bar, state.p_bar, float(ctx.length),
                              ctx.tx_cost, ctx.queue, float(cfg.tau_max), float(cfg.xi),
                              float(state.n_total), True, state._scores)


def advance_slot(state: PolicyState, completions: Iterable[CompletedFeedback],
                 offloaded_to: Optional[int]) -> PolicyState:
    """Move the learner from slot t to t+1, folding in feedback from (t, t+1].

    The state is updated in place and returned.
    """
    t = state.t
    gamma = state.config.gamma
    add = state._add
    add[:] = 0.0
    if offloaded_to is not None:
        state.pending[offloaded_to] += 1
    for fb in completions:
        if fb.receipt_slot <= t or fb.receipt_slot > t + 1:
            raise StaleFeedback(
                f"feedback for task {fb.task_id} received at {fb.receipt_slot}, "
                f"outside ({t}, {t + 1}]")
        state.pending[fb.node] -= 1
        if fb.kind == "dropped":
            continue
        weight = gamma ** (t + 1 - fb.receipt_slot)
        add[0, fb.node] += weight
        add[1, fb.node] += weight * fb.w_obs
        add[2, fb.node] += weight * fb.p_obs
    state.n_total = kernels.discount_merge(gamma, state.n_disc, state.w_bar, state.p_bar,
                                           add[0], add[1], add[2])
    state.t = t + 1
    return state


class TodPolicy:
    """Object wrapper used by the experiment harness."""

    name = "tod"

    def __init__(self, config: PolicyConfig):
        self.state = new_policy(config)

    def select(self, ctx: TaskContext, realization=None) -> int:
        return select_node(self.state, ctx)

    def advance(self, completions, offloaded_to):
        advance_slot(self.state, completions, offloaded_to)
