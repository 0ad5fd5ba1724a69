"""Run metrics and analytic evaluation of the suboptimal-pull bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class InfeasibleGamma(ValueError):
    pass


@dataclass
class RunHistory:
    """Per-slot trace of one run.  Row ``j`` is slot ``j + 1``."""

    chosen: np.ndarray
    latency: np.ndarray
    success: np.ndarray
    mu: np.ndarray
    U: np.ndarray
    opt_expected: np.ndarray
    opt_realized: np.ndarray
    tau_max: float = 20.0

    @classmethod
    def allocate(cls, T: int, K: int, tau_max: float = 20.0) -> "RunHistory":
        return cls(
            chosen=np.zeros(T, dtype=np.int64), latency=np.zeros(T),
            success=np.zeros(T, dtype=bool), mu=np.zeros((T, K)), U=np.zeros((T, K)),
            opt_expected=np.zeros(T, dtype=np.int64), opt_realized=np.zeros(T, dtype=np.int64),
            tau_max=tau_max)

    @classmethod
    def from_arrays(cls, chosen, mu, U, tau_max=20.0, opt_expected=None, opt_realized=None):
        chosen = np.asarray(chosen, dtype=np.int64)
        mu = np.asarray(mu, dtype=float)
        U = np.asarray(U, dtype=float)
        latency = U[np.arange(len(chosen)), chosen]
        return cls(
            chosen=chosen, latency=latency, success=latency <= tau_max, mu=mu, U=U,
            opt_expected=(np.argmin(mu, axis=1) if opt_expected is None
                          else np.asarray(opt_expected, dtype=np.int64)),
            opt_realized=(np.argmin(U, axis=1) if opt_realized is None
                          else np.asarray(opt_realized, dtype=np.int64)),
            tau_max=tau_max)

    def record(self, j: int, outcome) -> None:
        self.chosen[j] = outcome.chosen
        self.latency[j] = outcome.realized_latency
        self.success[j] = outcome.success
        self.mu[j] = outcome.mu
        self.U[j] = outcome.realization.U
        self.opt_expected[j] = outcome.opt_expected
        self.opt_realized[j] = outcome.opt_realized

    def __len__(self):
        return len(self.chosen)

    @property
    def K(self) -> int:
        return self.mu.shape[1]


def _running_mean(x: np.ndarray) -> np.ndarray:
    return np.cumsum(x) / np.arange(1, len(x) + 1)


def count_suboptimal_pulls(history: RunHistory) -> np.ndarray:
    miss = history.chosen != history.opt_expected
    return np.bincount(history.chosen[miss], minlength=history.K).astype(np.int64)


def pseudo_regret(history: RunHistory, reference: str = "expected") -> np.ndarray:
    """Running average excess latency over the per-slot reference.

    ``expected`` compares against the oracle mean of the expected-optimal
    node, ``realized`` against the smallest realized latency.
    """
    rows = np.arange(len(history))
    if reference == "expected":
        ref = history.mu[rows, history.opt_expected]
    elif reference == "realized":
        ref = history.U[rows, history.opt_realized]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    return _running_mean(history.latency - ref)


def success_ratio(history: RunHistory, tau_max: Optional[float] = None) -> np.ndarray:
    tau_max = history.tau_max if tau_max is None else tau_max
    return _running_mean((history.latency <= tau_max).astype(float))


def latency_cdf(history: RunHistory, grid: Sequence[float], tau_max: Optional[float] = None) -> np.ndarray:
    """Fraction of tasks finished within each grid latency.

    Failed tasks never complete, so they count as infinitely late.
    """
    tau_max = history.tau_max if tau_max is None else tau_max
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return np.zeros(0)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    lat = np.where(history.latency <= tau_max, history.latency, np.inf)
    lat = np.sort(lat)
    return np.searchsorted(lat, grid, side="right") / len(lat)


def measure_delta_mu(history: RunHistory) -> np.ndarray:
    """Smallest oracle gap of each node to the optimum over slots where it
    is not optimal; NaN for a node that is optimal at every slot."""
    rows = np.arange(len(history))
    best = history.mu[rows, history.opt_expected]
    gaps = history.mu - best[:, None]
    not_opt = history.opt_expected[:, None] != np.arange(history.K)[None, :]
    gaps = np.where(not_opt, gaps, np.inf)
    out = gaps.min(axis=0)
    out[np.isinf(out)] = np.nan
    return out


# -- analytic bound ---------------------------------------------------------

def recommended_gamma(upsilon: float, T: float, tau_max: float) -> float:
    if not 0 < upsilon <= T:
        raise ValueError("need 0 < breakpoints <= horizon")
    if tau_max < 1:
        raise ValueError("tau_max must be >= 1")
    gamma = 1.0 - math.sqrt(upsilon / T) / (4.0 * tau_max)
    if gamma <= 0:
        raise ValueError(f"recommended discount {gamma} is not positive")
    return gamma


def feasibility_lhs(gamma: float, tau_max: float) -> float:
    """gamma^tau_max * (1 - gamma^(1/(1-gamma))) / (1 - gamma)."""
    return gamma ** tau_max * (1.0 - gamma ** (1.0 / (1.0 - gamma))) / (1.0 - gamma)


def gamma_feasible(gamma: float, tau_max: float) -> bool:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return feasibility_lhs(gamma, tau_max) > math.e


@dataclass(frozen=True)
class BoundInputs:
    gamma: float
    xi: float
    tau_max: float
    T: int
    upsilon: int
    delta_mu: float
    n_k: float = 10.0


def bound_terms(inp: BoundInputs) -> dict:
    """B, C and the four summands of the bound, evaluated term by term."""
    g, xi, tau, T = inp.gamma, inp.xi, inp.tau_max, inp.T
    if not 0.0 < g < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not xi > 0.5:
        raise ValueError("xi must exceed 1/2")
    if not (inp.delta_mu > 0 and math.isfinite(inp.delta_mu)):
        raise ValueError(f"delta_mu must be positive and finite, got {inp.delta_mu}")
    if not gamma_feasible(g, tau):
        raise InfeasibleGamma(f"gamma={g} violates the feasibility condition at tau_max={tau}")
    one_m = 1.0 - g
    g_tau = g ** tau
    window = T * one_m
    lead = (-16.0 * tau ** 2 * xi * math.log(g_tau * one_m) / inp.delta_mu ** 2 + tau)
    B = lead * (math.ceil(window) / window) * g ** (-1.0 / one_m) \
        + (2.0 / g_tau) * math.log(g_tau / one_m)
    c_arg = one_m * xi * math.log(inp.n_k) if inp.n_k > 0 else -1.0
    if c_arg > 0:
        C = math.log(c_arg) / math.log(g) + tau
    elif inp.upsilon == 0:
        # no breakpoints, so the term drops out whatever C would be
        C = math.nan
    else:
        raise ValueError("C(gamma) undefined: need (1-gamma)*xi*log(n_K) > 0")
    terms = {
        "one": 1.0,
        "stationary": window * B,
        "breakpoints": inp.upsilon * C if inp.upsilon else 0.0,
        "tail": 2.0 / one_m,
    }
    return {"B": B, "C": C, "terms": terms, "bound": sum(terms.values())}


def regret_bound(inp: BoundInputs) -> float:
    return bound_terms(inp)["bound"]
