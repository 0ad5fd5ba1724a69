"""Single-run driver: broadcast, select, step, deliver feedback, advance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .analysis import RunHistory, recommended_gamma
from .baselines import ExpectedGreedyPolicy, GreedyPolicy, IirConfig, IirPolicy, RoundRobinPolicy
from .env import EnvConfig, FogEnv
from .policy import PolicyConfig, TodPolicy

POLICIES = ("tod", "greedy", "round_robin", "iir", "greedy_expected")


@dataclass(frozen=True)
class PolicySpec:
    name: str = "tod"
    # None means "derive from the breakpoint count and horizon".
    gamma: Optional[float] = None
    xi: float = 0.6
    explore_fraction: float = 0.1

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ValueError(f"unknown policy {self.name!r}; choose from {', '.join(POLICIES)}")

    def resolve_gamma(self, env_cfg: EnvConfig) -> float:
        if self.gamma is not None:
            return self.gamma
        return recommended_gamma(env_cfg.breakpoints, env_cfg.horizon, env_cfg.tau_max)

    @property
    def label(self) -> str:
        if self.name in ("tod", "iir") and self.gamma is not None:
            extra = f"@{self.gamma:g}"
            if self.name == "iir":
                extra += f",rho={self.explore_fraction:g}"
            return self.name + extra
        if self.name == "iir":
            return f"iir@auto,rho={self.explore_fraction:g}"
        return self.name


def build_policy(spec: PolicySpec, env: FogEnv):
    cfg = env.config
    if spec.name == "greedy":
        return GreedyPolicy(cfg.K)
    if spec.name == "greedy_expected":
        return ExpectedGreedyPolicy(env)
    if spec.name == "round_robin":
        return RoundRobinPolicy(cfg.K)
    pcfg = PolicyConfig(K=cfg.K, gamma=spec.resolve_gamma(cfg), xi=spec.xi, tau_max=cfg.tau_max)
    if spec.name == "tod":
        return TodPolicy(pcfg)
    return IirPolicy(pcfg, IirConfig(pcfg.gamma, spec.explore_fraction, cfg.horizon))


def simulate(env_cfg: EnvConfig, spec: PolicySpec, seed: Optional[int] = None) -> RunHistory:
    if seed is not None:
        env_cfg = env_cfg.with_(seed=seed)
    env = FogEnv(env_cfg)
    policy = build_policy(spec, env)
    T = env_cfg.horizon
    history = RunHistory.allocate(T, env_cfg.K, env_cfg.tau_max)
    wants_realization = spec.name == "greedy"
    for j in range(T):
        ctx = env.observe()
        real = env.current_realization() if wants_realization else None
        chosen = policy.select(ctx, real)
        outcome = env.step(chosen)
        policy.advance(outcome.completions, chosen)
        history.record(j, outcome)
    return history
