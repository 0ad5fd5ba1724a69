"""Experiment orchestration and CSV output.

Configs are INI files with one section per component::

    [env]        K, horizon, tau_max, breakpoints, ranges, ...
    [queue]      arrival_prob, arrival_kb, service_rate, initial_kb
    [policy]     name, gamma (auto | sweep | <float>), gamma_grid, xi, ...
    [experiment] seeds, output_dir, downsample

Runs are independent; parallel execution merges results in (key, seed)
order so output bytes never depend on scheduling.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .env import EnvConfig, QueueParams
from .sim import POLICIES, PolicySpec, simulate

log = logging.getLogger(__name__)

DEFAULT_GAMMA_GRID = (0.98, 0.99, 0.995, 0.998, 0.9985, 0.999, 0.9993, 0.9995, 0.9998)
DEFAULT_RHO_GRID = (0.02, 0.05, 0.1, 0.2, 0.3)


class MismatchedConfig(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: str = "tod"
    # "auto" | "fixed" | "sweep"
    gamma_mode: str = "auto"
    gamma: Optional[float] = None
    gamma_grid: tuple = DEFAULT_GAMMA_GRID
    xi: float = 0.6
    explore_fraction: float = 0.1
    rho_grid: tuple = DEFAULT_RHO_GRID
    seeds: tuple = (0,)
    output_dir: str = "out"
    downsample: int = 10

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.gamma_mode not in ("auto", "fixed", "sweep"):
            raise ValueError(f"unknown gamma mode {self.gamma_mode!r}")
        if self.gamma_mode == "fixed" and self.gamma is None:
            raise ValueError("fixed gamma mode needs a gamma value")
        if any(not 0.0 < g < 1.0 for g in self.gamma_grid):
            raise ValueError("gamma grid values must lie in (0, 1)")
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")

    def policy_spec(self, gamma: Optional[float] = None) -> PolicySpec:
        if gamma is None and self.gamma_mode == "fixed":
            gamma = self.gamma
        return PolicySpec(self.policy, gamma, self.xi, self.explore_fraction)

    def with_(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)


def reference_defaults(**overrides) -> ExperimentSpec:
    """K=10 (9 helpers + local), T=10^4, tau_max=20, xi=0.6, 150 breakpoints."""
    return ExperimentSpec(**overrides)


# -- config text ------------------------------------------------------------

def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep "K" distinct from "k"
    return cp


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _parse_like(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(p) for p in parts)
    return text


def dump_config(spec: ExperimentSpec) -> str:
    cp = _parser()
    cp["env"] = {f.name: _fmt(getattr(spec.env, f.name))
                 for f in fields(EnvConfig) if f.name not in ("queue", "seed")}
    cp["queue"] = {f.name: _fmt(getattr(spec.env.queue, f.name)) for f in fields(QueueParams)}
    gamma = spec.gamma_mode if spec.gamma_mode != "fixed" else _fmt(float(spec.gamma))
    cp["policy"] = {
        "name": spec.policy, "gamma": gamma, "gamma_grid": _fmt(spec.gamma_grid),
        "xi": _fmt(spec.xi), "explore_fraction": _fmt(spec.explore_fraction),
        "rho_grid": _fmt(spec.rho_grid),
    }
    cp["experiment"] = {"seeds": _fmt(tuple(spec.seeds)), "output_dir": spec.output_dir,
                        "downsample": _fmt(spec.downsample)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_config(text: str, base: Optional[ExperimentSpec] = None) -> ExperimentSpec:
    base = base or ExperimentSpec()
    cp = _parser()
    cp.read_string(text)
    env_kw, queue_kw = {}, {}
    env_defaults = base.env
    if cp.has_section("env"):
        for key, raw in cp["env"].items():
            if key not in {f.name for f in fields(EnvConfig)} or key in ("queue", "seed"):
                raise ValueError(f"unknown [env] key {key!r}")
            env_kw[key] = _parse_like(raw, getattr(env_defaults, key))
    if cp.has_section("queue"):
        for key, raw in cp["queue"].items():
            if key not in {f.name for f in fields(QueueParams)}:
                raise ValueError(f"unknown [queue] key {key!r}")
            queue_kw[key] = _parse_like(raw, getattr(env_defaults.queue, key))
    env = replace(env_defaults, queue=replace(env_defaults.queue, **queue_kw), **env_kw)

    kw = {}
    if cp.has_section("policy"):
        sec = cp["policy"]
        if "name" in sec:
            kw["policy"] = sec["name"].strip()
        if "gamma" in sec:
            g = sec["gamma"].strip().lower()
            if g in ("auto", "sweep"):
                kw["gamma_mode"], kw["gamma"] = g, None
            else:
                kw["gamma_mode"], kw["gamma"] = "fixed", float(g)
        for key in ("gamma_grid", "xi", "explore_fraction", "rho_grid"):
            if key in sec:
                kw[key] = _parse_like(sec[key], getattr(base, key))
    if cp.has_section("experiment"):
        sec = cp["experiment"]
        if "seeds" in sec:
            kw["seeds"] = tuple(int(s) for s in sec["seeds"].replace(";", ",").split(",") if s.strip())
        if "output_dir" in sec:
            kw["output_dir"] = sec["output_dir"].strip()
        if "downsample" in sec:
            kw["downsample"] = int(sec["downsample"])
    return replace(base, env=env.validate(), **kw)


def load_config(path, base: Optional[ExperimentSpec] = None) -> ExperimentSpec:
    return parse_config(Path(path).read_text(), base)


# -- single runs --------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    label: str
    gamma: Optional[float]
    mean_latency: float
    success: np.ndarray
    regret_r: np.ndarray
    regret_p: np.ndarray
    cdf: np.ndarray
    suboptimal: np.ndarray
    delta_mu: np.ndarray

    @property
    def final_success(self) -> float:
        return float(self.success[-1])

    @property
    def zeta_r(self) -> float:
        return float(self.regret_r[-1])

    @property
    def zeta_p(self) -> float:
        return float(self.regret_p[-1])


def cdf_grid(tau_max: float, step: float = 0.5) -> np.ndarray:
    return np.arange(0.0, tau_max + step / 2, step)


def summarize(history: analysis.RunHistory, seed: int, label: str,
              gamma: Optional[float]) -> RunResult:
    return RunResult(
        seed=seed, label=label, gamma=gamma,
        mean_latency=float(history.latency.mean()),
        success=analysis.success_ratio(history),
        regret_r=analysis.pseudo_regret(history, "realized"),
        regret_p=analysis.pseudo_regret(history, "expected"),
        cdf=analysis.latency_cdf(history, cdf_grid(history.tau_max)),
        suboptimal=analysis.count_suboptimal_pulls(history),
        delta_mu=analysis.measure_delta_mu(history),
    )


def _resolved_gamma(env: EnvConfig, pspec: PolicySpec) -> Optional[float]:
    if pspec.name not in ("tod", "iir"):
        return None
    return pspec.resolve_gamma(env)


def _run_task(task):
    key, env, pspec, seed, keep = task
    history = simulate(env, pspec, seed=seed)
    res = summarize(history, seed, pspec.label, _resolved_gamma(env.with_(seed=seed), pspec))
    return key, seed, res, (history if keep else None)


def run_many(tasks: Sequence[tuple], jobs: int = 1):
    """Execute (key, env, policy_spec, seed, keep_history) tasks.

    Results come back sorted by (key, seed) whatever the worker count.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        out = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_task, tasks))
    out.sort(key=lambda r: (r[0], r[1]))
    return out


# -- experiments --------------------------------------------------------------

def sweep_gamma(spec: ExperimentSpec, grid: Optional[Sequence[float]] = None, jobs: int = 1,
                out_dir: Optional[str] = None):
    """Mean realized latency per discount factor; returns (best_gamma, rows).

    Each row also carries the per-seed results under ``"results"``.
    """
    grid = tuple(spec.gamma_grid if grid is None else grid)
    if not grid:
        raise ValueError("empty gamma grid")
    tasks = [(float(g), spec.env, PolicySpec(spec.policy, float(g), spec.xi, spec.explore_fraction),
              seed, False) for g in grid for seed in spec.seeds]
    results = run_many(tasks, jobs)
    rows = []
    for g in sorted(set(float(x) for x in grid)):
        rs = [r for k, _, r, _ in results if k == g]
        rows.append({"gamma": g, "mean_latency": float(np.mean([r.mean_latency for r in rs])),
                     "seeds": len(rs), "results": rs})
    best = min(rows, key=lambda r: (r["mean_latency"], r["gamma"]))["gamma"]
    if out_dir is not None:
        _write_csv(Path(out_dir) / "sweep.csv", ["gamma", "mean_latency", "seeds"],
                   [[_fmt(r["gamma"]), f"{r['mean_latency']:.6f}", r["seeds"]] for r in rows])
    return best, rows


def search_iir_rho(spec: ExperimentSpec, gamma: float, grid: Optional[Sequence[float]] = None,
                   jobs: int = 1):
    """Exploration fraction minimizing the mean final realized-reference regret."""
    grid = tuple(spec.rho_grid if grid is None else grid)
    tasks = [(float(rho), spec.env, PolicySpec("iir", gamma, spec.xi, float(rho)), seed, False)
             for rho in grid for seed in spec.seeds]
    results = run_many(tasks, jobs)
    rows = []
    for rho in sorted(set(float(x) for x in grid)):
        rs = [r for k, _, r, _ in results if k == rho]
        rows.append({"rho": rho, "zeta_r": float(np.mean([r.zeta_r for r in rs])),
                     "zeta_p": float(np.mean([r.zeta_p for r in rs])), "results": rs})
    best = min(rows, key=lambda r: (r["zeta_r"], r["rho"]))
    return best["rho"], rows


def resolve_gamma(spec: ExperimentSpec, jobs: int = 1, out_dir: Optional[str] = None) -> Optional[float]:
    if spec.policy not in ("tod", "iir"):
        return None
    if spec.gamma_mode == "fixed":
        return spec.gamma
    if spec.gamma_mode == "auto":
        return analysis.recommended_gamma(spec.env.breakpoints, spec.env.horizon, spec.env.tau_max)
    return sweep_gamma(spec, jobs=jobs, out_dir=out_dir)[0]


TRACE_HEADER = ["t", "policy", "chosen", "opt_expected", "opt_realized", "latency_slots",
                "success", "regret_r_cum", "regret_p_cum"]


def trace_rows(history: analysis.RunHistory, label: str):
    rows_idx = np.arange(len(history))
    ref_r = history.U[rows_idx, history.opt_realized]
    ref_p = history.mu[rows_idx, history.opt_expected]
    cum_r = np.cumsum(history.latency - ref_r)
    cum_p = np.cumsum(history.latency - ref_p)
    for j in range(len(history)):
        yield [j + 1, label, int(history.chosen[j]) + 1, int(history.opt_expected[j]) + 1,
               int(history.opt_realized[j]) + 1, f"{history.latency[j]:.6f}",
               int(bool(history.success[j])), f"{cum_r[j]:.6f}", f"{cum_p[j]:.6f}"]


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_experiment(spec: ExperimentSpec, jobs: int = 1, write: bool = True):
    """Run every seed; write per-seed traces plus summary and delta_mu tables.

    Returns ``(gamma, results)`` with one :class:`RunResult` per seed.
    """
    out = Path(spec.output_dir)
    gamma = resolve_gamma(spec, jobs=jobs, out_dir=out if write else None)
    pspec = PolicySpec(spec.policy, gamma, spec.xi, spec.explore_fraction)
    label = spec.policy
    tasks = [(0, spec.env, pspec, seed, write) for seed in spec.seeds]
    results = []
    summary_rows, delta_rows = [], []
    for _, seed, res, history in run_many(tasks, jobs):
        res.label = label
        results.append(res)
        if write:
            _write_csv(out / f"seed_{seed}" / "trace.csv", TRACE_HEADER, trace_rows(history, label))
        summary_rows.append([seed, label, "" if gamma is None else _fmt(float(gamma)),
                             f"{res.mean_latency:.6f}", f"{res.final_success:.6f}",
                             f"{res.zeta_r:.6f}", f"{res.zeta_p:.6f}", int(res.suboptimal.sum())])
        for i, (dm, n) in enumerate(zip(res.delta_mu, res.suboptimal)):
            delta_rows.append([seed, i + 1, "" if np.isnan(dm) else f"{dm:.9g}", int(n)])
    if write:
        _write_csv(out / "summary.csv",
                   ["seed", "policy", "gamma", "mean_latency", "success_ratio", "regret_r",
                    "regret_p", "suboptimal_pulls"], summary_rows)
        _write_csv(out / "delta_mu.csv", ["seed", "node", "delta_mu", "suboptimal_pulls"],
                   delta_rows)
        (out / "config.ini").write_text(dump_config(spec))
    return gamma, results


def _mean_series(results, attr):
    return np.mean([getattr(r, attr) for r in results], axis=0)


def compare(specs: Sequence[ExperimentSpec], jobs: int = 1, out_dir: Optional[str] = None,
            labels: Optional[Sequence[str]] = None, full_resolution: bool = False):
    """Run several policies on one environment and emit the comparison CSVs.

    IIR specs get their exploration fraction from a grid search.  Returns a
    dict label -> list of per-seed results.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("nothing to compare")
    env0, seeds0 = specs[0].env, tuple(specs[0].seeds)
    for s in specs[1:]:
        if s.env != env0 or tuple(s.seeds) != seeds0:
            raise MismatchedConfig("compared specs must share the environment and seeds")
    labels = list(labels) if labels is not None else [s.policy for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError("policy labels must be unique")

    by_label = {}
    for label, spec in zip(labels, specs):
        gamma = resolve_gamma(spec, jobs=jobs)
        if spec.policy == "iir":
            rho, rows = search_iir_rho(spec, gamma, jobs=jobs)
            by_label[label] = next(r["results"] for r in rows if r["rho"] == rho)
            log.info("iir: best exploration fraction %.3f", rho)
            continue
        pspec = PolicySpec(spec.policy, gamma, spec.xi, spec.explore_fraction)
        by_label[label] = [res for _, _, res, _ in run_many(
            [(0, env0, pspec, seed, False) for seed in seeds0], jobs)]

    if out_dir is not None:
        write_compare_csvs(by_label, env0, Path(out_dir),
                           1 if full_resolution else specs[0].downsample)
    return by_label


def write_compare_csvs(by_label, env: EnvConfig, out: Path, step: int):
    grid = cdf_grid(env.tau_max)
    T = env.horizon
    ts = np.arange(step, T + 1, step)
    if ts.size == 0 or ts[-1] != T:
        ts = np.append(ts, T)
    cdf_rows, success_rows, regret_rows, summary_rows = [], [], [], []
    for label in by_label:
        rs = by_label[label]
        cdf = _mean_series(rs, "cdf")
        cdf_rows += [[label, f"{x:g}", f"{y:.6f}"] for x, y in zip(grid, cdf)]
        succ = _mean_series(rs, "success")
        success_rows += [[label, int(t), f"{succ[t - 1]:.6f}"] for t in ts]
        for ref, attr in (("R", "regret_r"), ("P", "regret_p")):
            z = _mean_series(rs, attr)
            regret_rows += [[label, ref, int(t), f"{z[t - 1]:.6f}"] for t in ts]
        summary_rows.append([label, f"{np.mean([r.mean_latency for r in rs]):.6f}",
                             f"{np.mean([r.final_success for r in rs]):.6f}",
                             f"{np.mean([r.zeta_r for r in rs]):.6f}",
                             f"{np.mean([r.zeta_p for r in rs]):.6f}", len(rs)])
    _write_csv(out / "cdf.csv", ["policy", "latency_slots", "fraction"], cdf_rows)
    _write_csv(out / "success.csv", ["policy", "t", "ratio"], success_rows)
    _write_csv(out / "regret.csv", ["policy", "reference", "t", "zeta_hat"], regret_rows)
    _write_csv(out / "compare_summary.csv",
               ["policy", "mean_latency", "success_ratio", "regret_r", "regret_p", "seeds"],
               summary_rows)


def default_compare_specs(spec: ExperimentSpec, gamma_sel: Optional[float] = None, jobs: int = 1):
    """TOD (gamma per ``spec.gamma_mode``), Greedy, Round-Robin and IIR.

    IIR reuses TOD's discount factor, so ``gamma_mode="sweep"`` gives the
    tuned pairing.  ``gamma_sel`` adds a fixed-gamma TOD
    variant labelled ``tod_sel``.
    """
    tod = spec.with_(policy="tod")
    gamma = resolve_gamma(tod, jobs=jobs)
    specs = [tod.with_(gamma_mode="fixed", gamma=gamma), spec.with_(policy="greedy"),
             spec.with_(policy="round_robin"),
             spec.with_(policy="iir", gamma_mode="fixed", gamma=gamma)]
    labels = ["tod", "greedy", "round_robin", "iir"]
    if gamma_sel is not None:
        specs.append(spec.with_(policy="tod", gamma_mode="fixed", gamma=gamma_sel))
        labels.append("tod_sel")
    return specs, labels
