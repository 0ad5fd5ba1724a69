"""Discrete-time fog network simulator.

One task is generated per slot.  Every random quantity a run can consume
(task sizes, complexities, per-node waiting draws, background arrivals) is
drawn up front from counter-based streams keyed by the seed, so the
realization at slot t never depends on which node was picked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .policy import CompletedFeedback, InvalidConfig, TaskContext, normalize_feedback
from .rng import stream

BREAKPOINT_RULES = ("toggle", "band", "history")


class HorizonExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class QueueParams:
    arrival_prob: float = 0.05
    arrival_kb: tuple = (1.0, 3.0)
    # KB drained per slot per unit of cpu; 1/mean(cplx) matches the
    # waiting-delay model.
    service_rate: float = 0.18
    initial_kb: float = 0.0


@dataclass(frozen=True)
class EnvConfig:
    K: int = 10
    horizon: int = 10_000
    slot_ms: float = 20.0
    length_range: tuple = (1.0, 15.0)
    cplx_range: tuple = (1.0, 10.0)
    cpu_range: tuple = (1.0, 10.0)
    tx_range: tuple = (0.01, 1.0 / 15.0)
    breakpoints: int = 150
    breakpoint_factor: float = 16.0
    # toggle:  node alternates between its initial cpu and cpu * factor
    # band:    speed up below the geometric midpoint of cpu_range, else slow down
    # history: speed up below the geometric midpoint of the node's visited range
    breakpoint_rule: str = "toggle"
    queue: QueueParams = field(default_factory=QueueParams)
    tau_max: float = 20.0
    # censor: a timed-out task reports a capped observation at the deadline
    # discard: it only clears the pending count
    timeout_mode: str = "censor"
    # Whether a task that will miss its deadline still joins the node's queue.
    enqueue_failed: bool = False
    seed: int = 0

    def validate(self) -> "EnvConfig":
        if self.K < 2:
            raise InvalidConfig("K must be >= 2")
        if self.horizon < 1:
            raise InvalidConfig("horizon must be >= 1")
        for name in ("length_range", "cplx_range", "cpu_range", "tx_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise InvalidConfig(f"{name} must be an ordered non-negative pair")
        if min(self.length_range[0], self.cpu_range[0], self.cplx_range[0]) <= 0:
            raise InvalidConfig("length, complexity and cpu ranges must be positive")
        if self.length_range[1] * self.tx_range[1] > 1.0 + 1e-12:
            raise InvalidConfig("transmission of the largest task must fit in one slot")
        if not self.breakpoint_factor > 1.0:
            raise InvalidConfig("breakpoint factor must exceed 1")
        if not 0 <= self.breakpoints <= self.horizon:
            raise InvalidConfig("breakpoint count must lie in [0, horizon]")
        if self.breakpoints > self.horizon - self.K:
            raise InvalidConfig("not enough slots after warm-up for the breakpoints")
        if self.breakpoint_rule not in BREAKPOINT_RULES:
            raise InvalidConfig(f"unknown breakpoint rule {self.breakpoint_rule!r}")
        if self.tau_max < 1:
            raise InvalidConfig("tau_max must be >= 1")
        q = self.queue
        if not 0.0 <= q.arrival_prob <= 1.0 or q.service_rate < 0 or q.initial_kb < 0:
            raise InvalidConfig("bad queue parameters")
        if q.arrival_kb[0] < 0 or q.arrival_kb[0] > q.arrival_kb[1]:
            raise InvalidConfig("bad background arrival size range")
        if self.timeout_mode not in ("censor", "discard"):
            raise InvalidConfig(f"unknown timeout mode {self.timeout_mode!r}")
        return self

    def with_(self, **changes) -> "EnvConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class NodeTruth:
    index: int
    cpu: float
    tx: float
    queue_kb: float
    mu_w: float
    mu_p: float


@dataclass(frozen=True)
class TaskRealization:
    """Counterfactual per-node draws for one slot."""

    W: np.ndarray
    P: np.ndarray
    U: np.ndarray


@dataclass(frozen=True)
class BreakpointSchedule:
    slots: np.ndarray
    nodes: np.ndarray
    # +1 multiplies cpu by the factor, -1 divides.
    directions: np.ndarray

    def __len__(self):
        return len(self.slots)

    def entries(self):
        return [(int(s), int(n), "multiply" if d > 0 else "divide")
                for s, n, d in zip(self.slots, self.nodes, self.directions)]


@dataclass(frozen=True)
class SlotOutcome:
    t: int
    queues: np.ndarray
    length: float
    realization: TaskRealization
    mu: np.ndarray
    chosen: int
    completions: list
    realized_latency: float
    opt_expected: int
    opt_realized: int
    success: bool


@dataclass
class _Pending:
    task_id: int
    node: int
    receipt_slot: int
    tau_w: float
    tau_p: float
    queue: float
    length: float
    censored: bool


def make_schedule(cfg: EnvConfig, cpu0: np.ndarray, rng: np.random.Generator) -> BreakpointSchedule:
    """Draw breakpoint slots in (K, horizon] and the node each one hits.

    Direction keeps cpu inside a bounded band: a node below the geometric
    midpoint of its band is sped up, otherwise slowed down.  The band depends
    on ``cfg.breakpoint_rule``.  Since cpu only moves at breakpoints the whole
    schedule is resolved here.
    """
    n = cfg.breakpoints
    f = cfg.breakpoint_factor
    slots = np.sort(rng.choice(np.arange(cfg.K + 1, cfg.horizon + 1), size=n, replace=False))
    nodes = rng.integers(0, cfg.K, size=n)
    cpu = cpu0.copy()
    lo, hi = cpu0.copy(), cpu0.copy()
    directions = np.empty(n, dtype=np.int64)
    for j, node in enumerate(nodes):
        if cfg.breakpoint_rule == "toggle":
            mid = cpu0[node] * math.sqrt(f)
        elif cfg.breakpoint_rule == "band":
            mid = math.sqrt(cfg.cpu_range[0] * cfg.cpu_range[1])
        else:
            mid = math.sqrt(lo[node] * hi[node])
        up = cpu[node] < mid
        directions[j] = 1 if up else -1
        cpu[node] = cpu[node] * f if up else cpu[node] / f
        lo[node] = min(lo[node], cpu[node])
        hi[node] = max(hi[node], cpu[node])
    return BreakpointSchedule(slots.astype(np.int64), nodes.astype(np.int64), directions)


def censored_observation(tau_max: float, queue: float, length: float):
    """Observation standing in for a task that hit the deadline.

    The cap is split evenly between waiting and processing so the implied
    latency at issue time equals ``tau_max``; with an empty queue all of it
    is attributed to processing.
    """
    if queue > 0:
        return normalize_feedback(tau_max / 2.0, tau_max / 2.0, queue, length)
    return normalize_feedback(0.0, tau_max, queue, length)


class FogEnv:
    """Simulator state for one run.  Slots run from 1 to ``horizon``."""

    def __init__(self, config: EnvConfig):
        cfg = config.validate()
        self.config = cfg
        K, T = cfg.K, cfg.horizon
        nodes_rng = stream(cfg.seed, "nodes")
        self.cpu = nodes_rng.uniform(*cfg.cpu_range, size=K)
        self.tx = nodes_rng.uniform(*cfg.tx_range, size=K)
        self.tx[K - 1] = 0.0
        self.schedule = make_schedule(cfg, self.cpu, stream(cfg.seed, "breakpoints"))
        self._bp_at: dict[int, list] = {}
        for s, n, d in zip(self.schedule.slots, self.schedule.nodes, self.schedule.directions):
            self._bp_at.setdefault(int(s), []).append((int(n), int(d)))

        task_rng = stream(cfg.seed, "tasks")
        self._length = task_rng.uniform(*cfg.length_range, size=T)
        self._cplx = task_rng.uniform(*cfg.cplx_range, size=T)
        self._cplx_w = stream(cfg.seed, "waiting").uniform(*cfg.cplx_range, size=(T, K))
        bg_rng = stream(cfg.seed, "background")
        q = cfg.queue
        hits = bg_rng.random(size=(T, K)) < q.arrival_prob
        self._bg = np.where(hits, bg_rng.uniform(*q.arrival_kb, size=(T, K)), 0.0)

        self.cplx_mean = 0.5 * (cfg.cplx_range[0] + cfg.cplx_range[1])
        self.queue = np.full(K, float(q.initial_kb))
        self.t = 1
        self.breakpoints_fired = 0
        self._pending: dict[int, list[_Pending]] = {}
        self._slot = None

    # -- oracle view ----------------------------------------------------
    @property
    def mu_w(self) -> np.ndarray:
        return self.cplx_mean / self.cpu

    @property
    def mu_p(self) -> np.ndarray:
        return self.cplx_mean / self.cpu

    def nodes(self) -> list[NodeTruth]:
        mw, mp = self.mu_w, self.mu_p
        return [NodeTruth(i, float(self.cpu[i]), float(self.tx[i]), float(self.queue[i]),
                          float(mw[i]), float(mp[i]))
                for i in range(self.config.K)]

    def true_expected_latency(self, length: float, node: Optional[int] = None):
        """Oracle mean latency at the current slot; every node if ``node`` is None."""
        mu = length * self.tx + self.queue * self.mu_w + length * self.mu_p
        return mu if node is None else float(mu[node])

    # -- per-slot draws -------------------------------------------------
    def generate_task(self, t: Optional[int] = None):
        t = self.t if t is None else t
        if not 1 <= t <= self.config.horizon:
            raise HorizonExceeded(f"slot {t} outside 1..{self.config.horizon}")
        return float(self._length[t - 1]), float(self._cplx[t - 1])

    def _assemble(self, length, cplx, t):
        K = self.config.K
        W, P, U, mu = np.empty(K), np.empty(K), np.empty(K), np.empty(K)
        opt_mu, opt_u = kernels.realize_slot(length, cplx, self._cplx_w[t - 1], self.cpu,
                                             self.tx, self.queue, self.cplx_mean, W, P, U, mu)
        return TaskRealization(W, P, U), mu, opt_mu, opt_u

    def realize_delays(self, length: float, cplx: float, t: Optional[int] = None) -> TaskRealization:
        return self._assemble(length, cplx, self.t if t is None else t)[0]

    def _prepare(self):
        """Draw the current slot's task and all K realizations, once."""
        if self._slot is not None and self._slot[0] == self.t:
            return self._slot
        length, cplx = self.generate_task()
        real, mu, opt_mu, opt_u = self._assemble(length, cplx, self.t)
        self._slot = (self.t, length, real, mu, opt_mu, opt_u, self.queue.copy())
        return self._slot

    def observe(self) -> TaskContext:
        """Broadcast queues and the new task for the current slot."""
        _, length, _, _, _, _, queues = self._prepare()
        return TaskContext(self.t, length, self.tx, queues)

    def current_realization(self) -> TaskRealization:
        return self._prepare()[2]

    # -- dynamics -------------------------------------------------------
    def apply_breakpoint(self, node: int, direction) -> None:
        f = self.config.breakpoint_factor
        if direction in (1, "multiply"):
            self.cpu[node] *= f
        elif direction in (-1, "divide"):
            self.cpu[node] /= f
        else:
            raise ValueError(f"unknown direction {direction!r}")

    def step(self, chosen: int) -> SlotOutcome:
        cfg = self.config
        t = self.t
        if t > cfg.horizon:
            raise HorizonExceeded(f"run already finished at slot {cfg.horizon}")
        if not 0 <= chosen < cfg.K:
            raise ValueError(f"node {chosen} outside 0..{cfg.K - 1}")
        _, length, real, mu, opt_mu, opt_u, queues = self._prepare()
        latency = float(real.U[chosen])
        success = latency <= cfg.tau_max

        if success:
            receipt = t + max(1, math.ceil(latency))
        else:
            receipt = t + int(math.ceil(cfg.tau_max))
        self._pending.setdefault(receipt, []).append(_Pending(
            t, chosen, receipt, float(queues[chosen] * real.W[chosen]),
            float(length * real.P[chosen]), float(queues[chosen]), length, not success))
        completions = [self._deliver(p) for p in self._pending.pop(t + 1, ())]

        offload = length if (success or cfg.enqueue_failed) else 0.0
        kernels.evolve_queues(self.queue, self._bg[t - 1], self.cpu, cfg.queue.service_rate,
                              chosen, offload)
        for node, d in self._bp_at.get(t + 1, ()):
            self.apply_breakpoint(node, d)
            self.breakpoints_fired += 1

        self.t = t + 1
        return SlotOutcome(t=t, queues=queues, length=length, realization=real, mu=mu,
                           chosen=chosen, completions=completions, realized_latency=latency,
                           opt_expected=opt_mu, opt_realized=opt_u, success=success)

    def _deliver(self, p: _Pending) -> CompletedFeedback:
        if not p.censored:
            w, pr = normalize_feedback(p.tau_w, p.tau_p, p.queue, p.length)
            return CompletedFeedback(p.task_id, p.node, p.receipt_slot, w, pr, "ok")
        if self.config.timeout_mode == "discard":
            return CompletedFeedback(p.task_id, p.node, p.receipt_slot, math.nan, math.nan,
                                     "dropped")
        w, pr = censored_observation(self.config.tau_max, p.queue, p.length)
        return CompletedFeedback(p.task_id, p.node, p.receipt_slot, w, pr, "censored")

    def pending_counts(self) -> np.ndarray:
        counts = np.zeros(self.config.K, dtype=np.int64)
        for plist in self._pending.values():
            for p in plist:
                counts[p.node] += 1
        return counts
