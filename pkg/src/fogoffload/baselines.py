"""Reference schedulers sharing the learner's select/advance interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .policy import InvalidConfig, PolicyConfig, TaskContext, advance_slot, new_policy


def greedy_select(realization) -> int:
    """Node with the smallest realized latency (non-causal oracle)."""
    U = getattr(realization, "U", realization)
    return int(np.argmin(U))


def round_robin_select(t: int, K: int) -> int:
    if t < 1:
        raise ValueError("slots start at 1")
    return (t - 1) % K


@dataclass(frozen=True)
class IirConfig:
    gamma: float
    explore_fraction: float
    horizon: int

    def __post_init__(self):
        if not 0.0 < self.explore_fraction < 1.0:
            raise InvalidConfig("explore_fraction must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidConfig("gamma must lie in (0, 1)")

    @property
    def explore_slots(self) -> float:
        return self.explore_fraction * self.horizon


def iir_select(state, ctx: TaskContext, cfg: IirConfig) -> int:
    """Round-robin for the first fraction of the horizon, then exploit the
    discounted estimate with no exploration bonus."""
    if ctx.task_id != state.t:
        raise ValueError(f"context is for slot {ctx.task_id}, policy is at slot {state.t}")
    K = state.config.K
    if state.t <= cfg.explore_slots:
        return round_robin_select(state.t, K)
    return kernels.ucb_scores(state.n_disc, state.w_bar, state.p_bar, float(ctx.length),
                              ctx.tx_cost, ctx.queue, float(state.config.tau_max),
                              float(state.config.xi), float(state.n_total), False,
                              state._scores)


class GreedyPolicy:
    name = "greedy"

    def __init__(self, K: int):
        self.K = K

    def select(self, ctx, realization=None) -> int:
        if realization is None:
            raise ValueError("greedy needs the slot's realization")
        return greedy_select(realization)

    def advance(self, completions, offloaded_to):
        pass


class ExpectedGreedyPolicy:
    """Picks the node with the smallest oracle mean latency."""

    name = "greedy_expected"

    def __init__(self, env):
        self.env = env

    def select(self, ctx, realization=None) -> int:
        return int(np.argmin(self.env.true_expected_latency(ctx.length)))

    def advance(self, completions, offloaded_to):
        pass


class RoundRobinPolicy:
    name = "round_robin"

    def __init__(self, K: int):
        self.K = K

    def select(self, ctx, realization=None) -> int:
        return round_robin_select(ctx.task_id, self.K)

    def advance(self, completions, offloaded_to):
        pass


class IirPolicy:
    name = "iir"

    def __init__(self, config: PolicyConfig, iir: IirConfig):
        self.state = new_policy(config)
        self.iir = iir

    def select(self, ctx, realization=None) -> int:
        return iir_select(self.state, ctx, self.iir)

    def advance(self, completions, offloaded_to):
        advance_slot(self.state, completions, offloaded_to)
