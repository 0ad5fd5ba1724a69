"""Command line entry point: run, sweep-gamma, compare, bound, gamma."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, harness
from .env import InvalidConfig
from .sim import POLICIES

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2
U64_MAX = 2 ** 64 - 1


class CliError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def _float_list(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI experiment config")
    p.add_argument("--paper-defaults", action="store_true",
                   help="start from the reference setup (K=10, T=10000, 150 breakpoints)")
    p.add_argument("--seed", type=_u64, action="append", help="repeatable")
    p.add_argument("--out", help="output directory")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--gamma", help="auto, sweep or a value in (0, 1)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--breakpoints", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fogoffload", description="Fog task offloading experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="seeded runs with per-slot traces")
    _common(p)

    p = sub.add_parser("sweep-gamma", help="mean latency over a grid of discount factors")
    _common(p)
    p.add_argument("--grid", type=_float_list)

    p = sub.add_parser("compare", help="TOD against Greedy, Round-Robin and IIR")
    _common(p)
    p.add_argument("--gamma-sel", type=float, help="extra fixed-gamma TOD series")
    p.add_argument("--full-resolution", action="store_true", help="emit every slot")

    p = sub.add_parser("bound", help="evaluate the suboptimal-pull bound")
    _common(p)
    p.add_argument("--run", dest="run_dir", help="directory written by 'run'")
    p.add_argument("--delta-mu", type=float, help="gap to use instead of measured values")
    p.add_argument("--xi", type=float)
    p.add_argument("--tau-max", type=float)
    p.add_argument("--n-k", type=float, help="log argument in C(gamma); defaults to K")

    p = sub.add_parser("gamma", help="recommended discount factor")
    _common(p)
    p.add_argument("--tau-max", type=float)
    return ap


def spec_from_args(args, base=None) -> harness.ExperimentSpec:
    spec = base or harness.reference_defaults()
    if args.config and base is None:
        try:
            spec = harness.load_config(args.config, spec)
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}")
    env = spec.env
    if args.horizon is not None:
        env = env.with_(horizon=args.horizon)
    if args.breakpoints is not None:
        env = env.with_(breakpoints=args.breakpoints)
    if getattr(args, "tau_max", None) is not None:
        env = env.with_(tau_max=args.tau_max)
    kw = {"env": env.validate()}
    if args.seed:
        kw["seeds"] = tuple(args.seed)
    if args.out:
        kw["output_dir"] = args.out
    if args.policy:
        kw["policy"] = args.policy
    if getattr(args, "xi", None) is not None:
        kw["xi"] = args.xi
    if args.gamma is not None:
        g = args.gamma.strip().lower()
        if g in ("auto", "sweep"):
            kw.update(gamma_mode=g, gamma=None)
        else:
            kw.update(gamma_mode="fixed", gamma=float(g))
    if getattr(args, "grid", None):
        kw["gamma_grid"] = args.grid
    return replace(spec, **kw)


def cmd_run(args, spec):
    gamma, results = harness.run_experiment(spec, jobs=args.jobs)
    for r in results:
        print(f"seed={r.seed} policy={spec.policy} gamma={gamma} mean_latency={r.mean_latency:.4f} "
              f"success={r.final_success:.4f} zeta_r={r.zeta_r:.4f} zeta_p={r.zeta_p:.4f}")
    print(f"wrote {spec.output_dir}")
    return EXIT_OK


def cmd_sweep(args, spec):
    best, rows = harness.sweep_gamma(spec, jobs=args.jobs, out_dir=spec.output_dir)
    for r in rows:
        print(f"gamma={r['gamma']!r:<8} mean_latency={r['mean_latency']:.4f}")
    print(f"best gamma {best!r}")
    return EXIT_OK


def cmd_compare(args, spec):
    specs, labels = harness.default_compare_specs(spec, args.gamma_sel, jobs=args.jobs)
    by_label = harness.compare(specs, jobs=args.jobs, out_dir=spec.output_dir, labels=labels,
                               full_resolution=args.full_resolution)
    for label, rs in by_label.items():
        print(f"{label:<12} latency={np.mean([r.mean_latency for r in rs]):.4f} "
              f"zeta_r={np.mean([r.zeta_r for r in rs]):.4f} "
              f"zeta_p={np.mean([r.zeta_p for r in rs]):.4f}")
    return EXIT_OK


def _read_delta_mu(run_dir: Path):
    """Mean gap and mean suboptimal pulls per node, averaged over seeds."""
    gaps, pulls = {}, {}
    with open(run_dir / "delta_mu.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            node = int(row["node"])
            if row["delta_mu"]:
                gaps.setdefault(node, []).append(float(row["delta_mu"]))
            pulls.setdefault(node, []).append(int(row["suboptimal_pulls"]))
    return ({n: float(np.mean(v)) for n, v in gaps.items()},
            {n: float(np.mean(v)) for n, v in pulls.items()})


def _run_gamma(run_dir: Path):
    with open(run_dir / "summary.csv", newline="") as fh:
        vals = {row["gamma"] for row in csv.DictReader(fh) if row["gamma"]}
    return float(vals.pop()) if len(vals) == 1 else None


def cmd_bound(args, spec):
    run_dir = Path(args.run_dir) if args.run_dir else None
    if run_dir is not None:
        try:
            stored = harness.load_config(run_dir / "config.ini")
            run_gamma = _run_gamma(run_dir)
        except OSError as exc:
            raise CliError(f"cannot read run directory: {exc}")
        if run_gamma is not None:
            stored = replace(stored, gamma_mode="fixed", gamma=run_gamma)
        # explicit flags still win over the stored config
        spec = spec_from_args(args, base=stored)
    env = spec.env
    gamma = spec.gamma if spec.gamma_mode == "fixed" else None
    if gamma is None:
        gamma = analysis.recommended_gamma(env.breakpoints, env.horizon, env.tau_max)
    if not 0.0 < gamma < 1.0:
        raise CliError("gamma must lie in (0, 1)")
    if not analysis.gamma_feasible(gamma, env.tau_max):
        print(f"gamma={gamma!r} is infeasible at tau_max={env.tau_max:g} "
              f"(lhs {analysis.feasibility_lhs(gamma, env.tau_max):.4g} <= e)", file=sys.stderr)
        return EXIT_INFEASIBLE

    if args.delta_mu is not None:
        gaps, pulls = {0: args.delta_mu}, {}
    elif run_dir is not None:
        try:
            gaps, pulls = _read_delta_mu(run_dir)
        except OSError as exc:
            raise CliError(f"cannot read delta_mu.csv: {exc}")
    else:
        raise CliError("bound needs --run or --delta-mu")

    n_k = args.n_k if args.n_k is not None else float(env.K)
    for node in sorted(gaps):
        dm = gaps[node]
        if not dm > 0:
            print(f"node={node} delta_mu={dm:g} skipped")
            continue
        res = analysis.bound_terms(analysis.BoundInputs(
            gamma=gamma, xi=spec.xi, tau_max=env.tau_max, T=env.horizon,
            upsilon=env.breakpoints, delta_mu=dm, n_k=n_k))
        line = f"node={node} delta_mu={dm:.6g} bound={res['bound']:.6g}"
        if node in pulls:
            line += f" measured={pulls[node]:.6g}"
        print(line)
    return EXIT_OK


def cmd_gamma(args, spec):
    env = spec.env
    g = analysis.recommended_gamma(env.breakpoints, env.horizon, env.tau_max)
    print(f"{g:.10g}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep-gamma": cmd_sweep, "compare": cmd_compare,
            "bound": cmd_bound, "gamma": cmd_gamma}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
        return COMMANDS[args.command](args, spec)
    except analysis.InfeasibleGamma as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if args.command == "bound" else EXIT_CONFIG
    except (CliError, InvalidConfig, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
