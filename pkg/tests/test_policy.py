import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogoffload.policy import (
    CompletedFeedback, InvalidConfig, PolicyConfig, StaleFeedback, TaskContext, TodPolicy,
    advance_slot, argmax_lowest, estimate_latency, estimated_reward, new_policy,
    normalize_feedback, padding, select_node, ucb_score, ucb_scores,
)

from .oracles import direct_estimates, random_trace, replay


def ctx_for(state, length=3.0, tx=None, queue=None):
    K = state.config.K
    tx = np.zeros(K) if tx is None else np.asarray(tx, float)
    queue = np.zeros(K) if queue is None else np.asarray(queue, float)
    return TaskContext(state.t, length, tx, queue)


def fb(node, receipt, w=1.0, p=1.0, task=0, kind="ok"):
    return CompletedFeedback(task, node, receipt, w, p, kind)


class TestConfig:
    def test_full_scale_state(self):
        s = new_policy(PolicyConfig(K=10, gamma=0.9985, xi=0.6, tau_max=20))
        assert s.t == 1 and s.n_total == 0.0
        assert len(s.arms) == 10
        assert all(a.n_disc == 0 and a.w_bar == 0 and a.p_bar == 0 and a.pending == 0
                   for a in s.arms)

    def test_minimal(self):
        s = new_policy(PolicyConfig(K=2, gamma=0.5, xi=0.6, tau_max=1))
        assert s.config.K == 2

    @pytest.mark.parametrize("kw", [dict(gamma=1.0), dict(gamma=0.0), dict(xi=0.5),
                                    dict(K=1), dict(tau_max=0.5)])
    def test_rejects(self, kw):
        base = dict(K=10, gamma=0.9, xi=0.6, tau_max=20)
        base.update(kw)
        with pytest.raises(InvalidConfig):
            PolicyConfig(**base)


class TestNormalize:
    def test_arithmetic(self):
        assert normalize_feedback(8, 6, 4, 3) == (2.0, 2.0)

    def test_no_wait(self):
        assert normalize_feedback(0, 5, 10, 5) == (0.0, 1.0)

    def test_empty_queue(self):
        assert normalize_feedback(3, 6, 0, 3) == (0.0, 2.0)

    @pytest.mark.parametrize("args", [(1, 1, 1, 0), (1, 1, 1, -2), (-1, 1, 1, 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            normalize_feedback(*args)


def _three_arm_state():
    s = new_policy(PolicyConfig(K=3, gamma=0.9, xi=0.6, tau_max=20))
    s.n_disc[:] = [2.0, 3.0, 5.0]
    s.w_bar[:] = [0.5, 0.1, 1.0]
    s.p_bar[:] = [2.0, 1.0, 3.0]
    s.n_total = 10.0
    s.t = 20
    return s


class TestScores:
    def test_latency_estimate(self):
        s = _three_arm_state()
        ctx = ctx_for(s, 3.0, tx=[0.1, 0, 0], queue=[4, 0, 0])
        assert estimate_latency(s, ctx, 0) == pytest.approx(8.3, abs=1e-12)

    def test_fresh_arm_is_transmission_only(self):
        s = new_policy(PolicyConfig(K=3, gamma=0.9))
        assert estimate_latency(s, ctx_for(s, 3.0, tx=[0.1, 0, 0]), 0) == pytest.approx(0.3)

    def test_local_node(self):
        s = _three_arm_state()
        ctx = ctx_for(s, 3.0, tx=[0.1, 0.05, 0.0], queue=[1, 1, 0])
        assert estimate_latency(s, ctx, 2) == 3.0 * s.p_bar[2]

    def test_ucb_example_against_mpmath(self):
        s = _three_arm_state()
        ctx = ctx_for(s, 3.0, tx=[0.1, 0, 0], queue=[4, 0, 0])
        mpmath.mp.dps = 40
        ref = 20 - mpmath.mpf("8.3") + 40 * mpmath.sqrt(mpmath.mpf("0.6") * mpmath.log(10) / 2)
        assert ucb_score(s, ctx, 0) == pytest.approx(float(ref), rel=1e-12)
        assert float(ref) == pytest.approx(44.945, abs=5e-4)
        assert ucb_scores(s, ctx)[0] == pytest.approx(float(ref), rel=1e-12)

    def test_log_clamp(self):
        s = new_policy(PolicyConfig(K=2, gamma=0.9, tau_max=20))
        s.n_disc[:] = [1.0, 0.0]
        s.p_bar[:] = [5.0 / 3.0, 0.0]
        s.n_total = 1.0
        ctx = ctx_for(s, 3.0)
        assert padding(s, 0) == 0.0
        assert ucb_score(s, ctx, 0) == pytest.approx(15.0)

    def test_unplayed_is_infinite(self):
        s = _three_arm_state()
        s.n_disc[1] = 0.0
        assert ucb_score(s, ctx_for(s), 1) == math.inf
        assert ucb_scores(s, ctx_for(s))[1] == math.inf

    def test_reward_latency_identity(self):
        s = _three_arm_state()
        ctx = ctx_for(s, 7.0, tx=[0.1, 0.05, 0], queue=[3, 2, 1])
        for i in range(3):
            assert estimated_reward(s, ctx, i) + estimate_latency(s, ctx, i) == pytest.approx(20.0)


class TestSelect:
    def test_warm_up(self):
        s = new_policy(PolicyConfig(K=10, gamma=0.9))
        s.t = 3
        assert select_node(s, ctx_for(s)) == 2

    def test_argmax(self):
        assert argmax_lowest([13.7, 44.9, 12.0]) == 1

    def test_tie(self):
        assert argmax_lowest([5.0, 5.0]) == 0

    def test_kernel_tie_breaks_low(self):
        s = new_policy(PolicyConfig(K=3, gamma=0.9))
        s.n_disc[:] = 1.0
        s.p_bar[:] = 1.0
        s.n_total = 3.0
        s.t = 5
        assert select_node(s, ctx_for(s)) == 0

    def test_wrong_slot(self):
        s = new_policy(PolicyConfig(K=3, gamma=0.9))
        with pytest.raises(ValueError):
            select_node(s, TaskContext(2, 1.0, np.zeros(3), np.zeros(3)))

    def test_warm_up_coverage(self):
        pol = TodPolicy(PolicyConfig(K=6, gamma=0.9))
        picks = []
        for t in range(1, 7):
            picks.append(pol.select(ctx_for(pol.state)))
            pol.advance([], picks[-1])
        assert sorted(picks) == list(range(6))

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=12), st.floats(-1e3, 1e3))
    def test_argmax_shift_invariance(self, scores, c):
        shifted = [x + c for x in scores]
        # only meaningful when the shift does not merge distinct scores
        if len(set(shifted)) == len(set(scores)) and \
                sorted(range(len(scores)), key=lambda i: (-scores[i], i)) == \
                sorted(range(len(scores)), key=lambda i: (-shifted[i], i)):
            assert argmax_lowest(shifted) == argmax_lowest(scores)


class TestAdvance:
    def test_decay_only(self):
        s = new_policy(PolicyConfig(K=2, gamma=0.5))
        s.n_disc[:] = [1.75, 0.0]
        s.w_bar[:] = [2.0, 0.0]
        s.p_bar[:] = [3.0, 0.0]
        s.n_total = 1.75
        advance_slot(s, [], None)
        assert s.n_disc[0] == 0.875
        assert (s.w_bar[0], s.p_bar[0]) == (2.0, 3.0)
        assert s.t == 2

    def test_two_feedbacks(self):
        # observations land at slots 2 and 3; at slot 3 the weights are 0.5 and 1
        s = new_policy(PolicyConfig(K=2, gamma=0.5))
        advance_slot(s, [fb(0, 2, w=2.0)], 0)
        advance_slot(s, [fb(0, 3, w=4.0)], None)
        assert s.n_disc[0] == pytest.approx(1.5)
        assert s.w_bar[0] == pytest.approx((0.5 * 2 + 1 * 4) / 1.5, rel=1e-12)

    def test_three_in_a_row(self):
        s = new_policy(PolicyConfig(K=2, gamma=0.5))
        for t in (1, 2, 3):
            advance_slot(s, [fb(0, t + 1)], 0)
        assert s.n_disc[0] == pytest.approx(1.75)
        assert s.n_total == pytest.approx(1.75)

    @pytest.mark.parametrize("receipt", [1, 3])
    def test_stale(self, receipt):
        s = new_policy(PolicyConfig(K=2, gamma=0.5))
        with pytest.raises(StaleFeedback):
            advance_slot(s, [fb(0, receipt)], None)

    def test_pending_and_dropped(self):
        s = new_policy(PolicyConfig(K=2, gamma=0.5))
        advance_slot(s, [], 1)
        assert s.pending[1] == 1
        advance_slot(s, [fb(1, 3, math.nan, math.nan, kind="dropped")], None)
        assert s.pending[1] == 0 and s.n_disc[1] == 0.0 and s.w_bar[1] == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.5, 0.9999))
    def test_matches_direct_sums(self, seed, gamma):
        rng = np.random.default_rng(seed)
        trace = random_trace(rng, K=4, slots=120, tau_max=20)
        states = replay(trace, K=4, gamma=gamma, tau_max=20)
        for t, state in states:
            n, w, p = direct_estimates(trace, t, K=4, gamma=gamma)
            np.testing.assert_allclose(state[0], n, rtol=1e-9, atol=0)
            mask = n > 0
            np.testing.assert_allclose(state[1][mask], w[mask], rtol=1e-9, atol=1e-300)
            np.testing.assert_allclose(state[2][mask], p[mask], rtol=1e-9, atol=1e-300)
            assert state[3] == pytest.approx(n.sum(), rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.5, 0.9999),
           st.floats(0.0, 50.0), st.floats(0.01, 50.0))
    def test_constant_data_fixed_point(self, seed, gamma, w0, p0):
        rng = np.random.default_rng(seed)
        trace = [(s, node, r, w0, p0) for s, node, r, _, _ in random_trace(rng, 3, 60, 20)]
        for _, (n, w, p, _) in replay(trace, K=3, gamma=gamma, tau_max=20):
            assert np.all(w[n > 0] == pytest.approx(w0, rel=1e-12, abs=1e-12))
            assert np.all(p[n > 0] == pytest.approx(p0, rel=1e-12))

    @given(st.floats(0.5, 0.9999), st.floats(0.0, 100.0))
    def test_decay_factor(self, gamma, n0):
        s = new_policy(PolicyConfig(K=2, gamma=gamma))
        s.n_disc[:] = [n0, 1.0]
        s.n_total = n0 + 1.0
        advance_slot(s, [fb(1, 2)], None)
        assert s.n_disc[0] == pytest.approx(gamma * n0, rel=1e-15)

    @given(st.floats(1.0, 1e4), st.floats(1e-3, 1e4), st.floats(1e-3, 1e4))
    def test_bonus_monotone(self, n_total, a, b):
        s = new_policy(PolicyConfig(K=2, gamma=0.9))
        s.n_total = n_total
        s.n_disc[:] = sorted([a, b])
        assert padding(s, 0) >= padding(s, 1) >= 0.0
