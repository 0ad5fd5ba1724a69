import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogoffload import harness
from fogoffload.env import EnvConfig, QueueParams

ENV = EnvConfig(K=4, horizon=300, breakpoints=6)


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def spec(tmp_path, **kw):
    base = dict(env=ENV, seeds=(1, 2), output_dir=str(tmp_path / "out"))
    base.update(kw)
    return harness.ExperimentSpec(**base)


class TestSpec:
    def test_needs_seeds(self):
        with pytest.raises(ValueError):
            harness.ExperimentSpec(seeds=())

    def test_grid_range(self):
        with pytest.raises(ValueError):
            harness.ExperimentSpec(gamma_grid=(0.5, 1.0))

    def test_fixed_needs_value(self):
        with pytest.raises(ValueError):
            harness.ExperimentSpec(gamma_mode="fixed")

    def test_defaults_are_reference_setup(self):
        s = harness.reference_defaults()
        assert (s.env.K, s.env.horizon, s.env.breakpoints, s.env.tau_max, s.xi) == \
               (10, 10_000, 150, 20.0, 0.6)


class TestConfig:
    def test_round_trip_default(self):
        s = harness.reference_defaults()
        assert harness.parse_config(harness.dump_config(s)) == s

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 30), st.integers(100, 20_000), st.floats(0.01, 0.99),
           st.sampled_from(["auto", "sweep", "fixed"]), st.floats(0.5, 0.99999),
           st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=5),
           st.sampled_from(["tod", "greedy", "round_robin", "iir"]),
           st.floats(0.0, 1.0), st.booleans())
    def test_round_trip(self, K, T, bp_frac, mode, g, seeds, policy, p_bg, enq):
        env = EnvConfig(K=K, horizon=T, breakpoints=int(bp_frac * (T - K)),
                        queue=QueueParams(arrival_prob=p_bg), enqueue_failed=enq)
        s = harness.ExperimentSpec(env=env, policy=policy, gamma_mode=mode,
                                   gamma=g if mode == "fixed" else None,
                                   seeds=tuple(seeds))
        text = harness.dump_config(s)
        again = harness.parse_config(text)
        assert again == s
        assert harness.dump_config(again) == text

    def test_partial_file_keeps_defaults(self):
        s = harness.parse_config("[env]\nhorizon = 500\n[policy]\ngamma = 0.99\n")
        assert s.env.horizon == 500 and s.env.K == 10
        assert s.gamma_mode == "fixed" and s.gamma == 0.99

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            harness.parse_config("[env]\nbogus = 1\n")

    def test_invalid_env(self):
        with pytest.raises(ValueError):
            harness.parse_config("[env]\nbreakpoints = 20000\n")


class TestRun:
    def test_trace_schema(self, tmp_path):
        s = spec(tmp_path)
        gamma, results = harness.run_experiment(s)
        assert gamma == pytest.approx(harness.analysis.recommended_gamma(6, 300, 20))
        rows = read(tmp_path / "out" / "seed_1" / "trace.csv")
        assert rows[0] == harness.TRACE_HEADER
        assert len(rows) == 301
        chosen = {int(r[2]) for r in rows[1:]}
        assert chosen <= set(range(1, 5))
        assert [int(r[0]) for r in rows[1:]] == list(range(1, 301))
        summary = read(tmp_path / "out" / "summary.csv")
        assert [r[0] for r in summary[1:]] == ["1", "2"]
        # cumulative regret column ends at T times the running mean
        assert float(rows[-1][7]) == pytest.approx(300 * results[0].zeta_r, abs=1e-3)

    def test_deterministic_bytes(self, tmp_path):
        a = spec(tmp_path, output_dir=str(tmp_path / "a"))
        b = spec(tmp_path, output_dir=str(tmp_path / "b"))
        harness.run_experiment(a)
        harness.run_experiment(b)
        for name in ("seed_1/trace.csv", "seed_2/trace.csv", "summary.csv", "delta_mu.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_greedy_summary_has_zero_realized_regret(self, tmp_path):
        harness.run_experiment(spec(tmp_path, policy="greedy"))
        rows = read(tmp_path / "out" / "summary.csv")
        assert all(float(r[5]) == 0.0 for r in rows[1:])

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            harness.run_experiment(spec(tmp_path, output_dir=str(blocker / "sub")))


class TestSweep:
    def test_rows_and_choice(self, tmp_path):
        s = spec(tmp_path)
        best, rows = harness.sweep_gamma(s, grid=(0.99, 0.9, 0.999), out_dir=tmp_path)
        assert [r["gamma"] for r in rows] == [0.9, 0.99, 0.999]
        assert best == min(rows, key=lambda r: r["mean_latency"])["gamma"]
        table = read(tmp_path / "sweep.csv")
        assert table[0] == ["gamma", "mean_latency", "seeds"] and len(table) == 4

    def test_singleton(self, tmp_path):
        assert harness.sweep_gamma(spec(tmp_path), grid=(0.97,))[0] == 0.97

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            harness.sweep_gamma(spec(tmp_path), grid=())

    def test_parallel_matches_serial(self, tmp_path):
        s = spec(tmp_path, seeds=(5, 6, 7))
        harness.sweep_gamma(s, grid=(0.95, 0.999), jobs=1, out_dir=tmp_path / "j1")
        harness.sweep_gamma(s, grid=(0.95, 0.999), jobs=3, out_dir=tmp_path / "j3")
        assert (tmp_path / "j1" / "sweep.csv").read_bytes() == \
               (tmp_path / "j3" / "sweep.csv").read_bytes()

    def test_sweep_mode_resolves(self, tmp_path):
        s = spec(tmp_path, gamma_mode="sweep", gamma_grid=(0.97,))
        assert harness.resolve_gamma(s) == 0.97


class TestCompare:
    def test_four_policies(self, tmp_path):
        s = spec(tmp_path, rho_grid=(0.05, 0.2))
        specs, labels = harness.default_compare_specs(s)
        out = tmp_path / "cmp"
        by = harness.compare(specs, out_dir=out, labels=labels)
        assert set(by) == {"tod", "greedy", "round_robin", "iir"}
        regret = read(out / "regret.csv")
        assert regret[0] == ["policy", "reference", "t", "zeta_hat"]
        assert {(r[0], r[1]) for r in regret[1:]} == \
               {(p, ref) for p in labels for ref in ("R", "P")}
        # every 10th slot by default
        assert sorted({int(r[2]) for r in regret[1:]})[:3] == [10, 20, 30]
        cdf = read(out / "cdf.csv")
        assert cdf[0] == ["policy", "latency_slots", "fraction"]
        for label in labels:
            vals = [float(r[2]) for r in cdf[1:] if r[0] == label]
            assert np.all(np.diff(vals) >= 0)
        assert read(out / "success.csv")[0] == ["policy", "t", "ratio"]

    def test_single_policy_full_resolution(self, tmp_path):
        s = spec(tmp_path, policy="round_robin")
        harness.compare([s], out_dir=tmp_path / "one", full_resolution=True)
        rows = read(tmp_path / "one" / "success.csv")
        assert len(rows) == 1 + 300 and {r[0] for r in rows[1:]} == {"round_robin"}

    def test_mismatch(self, tmp_path):
        a = spec(tmp_path)
        b = a.with_(env=ENV.with_(horizon=400))
        with pytest.raises(harness.MismatchedConfig):
            harness.compare([a, b])
        with pytest.raises(harness.MismatchedConfig):
            harness.compare([a, a.with_(seeds=(9,), policy="greedy")])

    def test_gamma_sel_series(self, tmp_path):
        specs, labels = harness.default_compare_specs(spec(tmp_path), gamma_sel=0.98)
        assert labels[-1] == "tod_sel" and specs[-1].gamma == 0.98
