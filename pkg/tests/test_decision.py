import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cotswitch.core import Query, ReasoningMode
from cotswitch.decision import (
    DEFAULT_TAU,
    LC_ONLY,
    SC_ONLY,
    Policy,
    apply_policy,
    decide,
    parse_policies,
    parse_policy,
    random_uniform,
)
from cotswitch.errors import ConfigurationError, NumericError
from cotswitch.llm import HashingEmbedder
from cotswitch.switcher import SwitcherArchitecture, SwitcherModel

Q = Query("q", "What is 2 + 2?", "4")
unit = st.floats(0, 1, allow_nan=False)


class TestDecide:
    def test_examples(self):
        assert decide(0.70, 0.80, 0.05).mode is ReasoningMode.LC
        assert decide(0.70, 0.74, 0.05).mode is ReasoningMode.SC

    def test_boundary_uses_ge(self):
        assert decide(0.50, 0.55, 0.05).mode is ReasoningMode.LC
        # exactly representable margin equal to tau
        assert decide(0.25, 0.375, 0.125).mode is ReasoningMode.LC

    def test_diagnostics(self):
        d = decide(0.25, 0.5, 0.1)
        assert (d.y_hat_sc, d.y_hat_lc, d.margin, d.tau) == (0.25, 0.5, 0.25, 0.1)

    def test_nan(self):
        with pytest.raises(NumericError):
            decide(float("nan"), 0.5, 0.05)
        with pytest.raises(NumericError):
            decide(0.5, 0.5, float("inf"))

    @given(unit, unit, st.floats(-2, 2), st.floats(-2, 2))
    def test_monotone_in_tau(self, sc, lc, t1, t2):
        lo, hi = sorted((t1, t2))
        if decide(sc, lc, hi).mode is ReasoningMode.LC:
            assert decide(sc, lc, lo).mode is ReasoningMode.LC

    @given(unit, unit)
    def test_extremes(self, sc, lc):
        assert decide(sc, lc, 1.01).mode is ReasoningMode.SC
        assert decide(sc, lc, -1.0).mode is ReasoningMode.LC

    @given(unit, unit, st.floats(-2, 2))
    def test_rule(self, sc, lc, tau):
        d = decide(sc, lc, tau)
        assert (d.mode is ReasoningMode.LC) == (d.margin >= tau)


class TestPolicyGrammar:
    def test_parse(self):
        assert parse_policy("sc-only") is SC_ONLY
        assert parse_policy("lc_only") is LC_ONLY
        assert parse_policy("switcher:tau=0.05") == Policy.switcher(0.05)
        assert parse_policy("random:p_lc=0.75,seed=7") == Policy.random(0.75, 7)

    def test_list_keeps_options_together(self):
        got = parse_policies("sc-only,lc-only,switcher:tau=0.05,random:p_lc=0.75,seed=7")
        assert [p.describe() for p in got] == ["sc-only", "lc-only", "switcher:tau=0.05", "random:p_lc=0.75,seed=7"]

    @pytest.mark.parametrize("bad", ["bogus", "switcher:tau=abc", "random:seed=1", "random:p_lc=1.5", "sc-only:x=1", ""])
    def test_rejects(self, bad):
        with pytest.raises(ConfigurationError, match="expected"):
            parse_policies(bad)

    def test_describe_roundtrip(self):
        for p in (SC_ONLY, LC_ONLY, Policy.switcher(-0.3), Policy.random(0.1, 3)):
            assert parse_policy(p.describe()) == p

    def test_default_taus(self):
        assert DEFAULT_TAU == {"1.5B": 0.04, "7B": 0.05, "14B": 0.03}


class TestApplyPolicy:
    def test_static(self):
        assert apply_policy(SC_ONLY, Q).mode is ReasoningMode.SC
        assert apply_policy(LC_ONLY, Q).mode is ReasoningMode.LC
        assert apply_policy(LC_ONLY, Q).margin is None

    def test_random_rate(self):
        p = Policy.random(0.9, seed=123)
        n = 10_000
        lc = sum(apply_policy(p, Query(f"id{i}", "t", "1")).mode is ReasoningMode.LC for i in range(n))
        assert abs(lc / n - 0.9) <= 3 * math.sqrt(0.09 / n)

    def test_random_second_number_is_lc_probability(self):
        p = parse_policy("random:p_lc=0.9,seed=1")
        frac = np.mean([apply_policy(p, Query(f"x{i}", "t", "1")).mode is ReasoningMode.LC for i in range(2000)])
        assert frac > 0.85

    def test_random_order_independent(self):
        p = Policy.random(0.5, seed=4)
        ids = [f"q{i}" for i in range(50)]
        fwd = {i: apply_policy(p, Query(i, "t", "1")).mode for i in ids}
        rev = {i: apply_policy(p, Query(i, "t", "1")).mode for i in reversed(ids)}
        assert fwd == rev

    def test_uniform_in_range(self):
        u = [random_uniform(s, f"q{s}") for s in range(1000)]
        assert min(u) >= 0 and max(u) < 1

    def test_switcher_requires_model(self):
        with pytest.raises(ConfigurationError):
            apply_policy(Policy.switcher(0.05), Q)

    def test_switcher_pure(self):
        model = SwitcherModel.init(SwitcherArchitecture(32, (16,)), seed=0).eval()
        emb = HashingEmbedder(32)
        a = apply_policy(Policy.switcher(0.0), Q, model, emb)
        b = apply_policy(Policy.switcher(0.0), Q, model, emb)
        assert a == b
        assert 0 <= a.y_hat_sc <= 1 and 0 <= a.y_hat_lc <= 1

    def test_switcher_extreme_tau(self):
        model = SwitcherModel.init(SwitcherArchitecture(32, (16,)), seed=0).eval()
        emb = HashingEmbedder(32)
        for i in range(30):
            q = Query(f"q{i}", f"question number {i}", "1")
            assert apply_policy(Policy.switcher(1.01), q, model, emb).mode is ReasoningMode.SC
            assert apply_policy(Policy.switcher(-1.0), q, model, emb).mode is ReasoningMode.LC

    def test_invalid_policy(self):
        with pytest.raises(ConfigurationError):
            Policy("always-lc")
        with pytest.raises(ConfigurationError):
            Policy.random(-0.1)
