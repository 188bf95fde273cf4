import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotswitch.core import Query
from cotswitch.decision import LC_ONLY, SC_ONLY, Policy
from cotswitch.errors import DomainError, TransportError
from cotswitch.evaluation import (
    DEFAULT_TAU_GRID,
    CurvePoint,
    EvalCache,
    TradeoffCurve,
    auc_ac,
    auc_ac_lb,
    curve_metrics,
    evaluate,
    export_curve,
    nauc_ac,
    read_curve,
    sweep_tau,
)
from cotswitch.llm.mock import mock_backend, planted_corpus, planted_rates

from auc_oracle import riemann_auc


def curve(points, sc, lc):
    return TradeoffCurve.build([CurvePoint(i, x, y) for i, (x, y) in enumerate(points)], sc, lc)


class TestAuc:
    def test_rectangle(self):
        assert auc_ac(curve([(1000, 0.8), (2000, 0.8)], (1000, 0.8), (2000, 0.8))) == pytest.approx(800)

    def test_trapezoid(self):
        assert auc_ac(curve([(1000, 0.4), (2000, 0.6)], (1000, 0.4), (2000, 0.6))) == pytest.approx(500)

    def test_constant_extension(self):
        c = curve([(1200, 0.5), (1800, 0.7)], (1000, 0.5), (2000, 0.7))
        assert auc_ac(c) == pytest.approx(0.5 * 200 + 0.6 * 600 + 0.7 * 200)

    def test_single_point(self):
        assert auc_ac(curve([(1500, 0.9)], (1000, 0.4), (2000, 0.6))) == pytest.approx(900)

    def test_points_outside_range_clip(self):
        c = curve([(500, 0.0), (2500, 1.0)], (1000, 0.0), (2000, 1.0))
        assert auc_ac(c) == pytest.approx(riemann_auc([500, 2500], [0, 1], 1000, 2000), rel=1e-9)

    def test_domain(self):
        with pytest.raises(DomainError):
            auc_ac(curve([(1, 1)], (2000, 0.5), (1000, 0.5)))
        with pytest.raises(DomainError):
            auc_ac(TradeoffCurve([], (1, 0), (2, 1)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12))
    def test_matches_riemann_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        t_sc, t_lc = sorted(rng.uniform(100, 10_000, 2))
        if t_lc - t_sc < 1:
            t_lc = t_sc + 1
        xs = np.sort(rng.uniform(t_sc - 200, t_lc + 200, n))
        ys = rng.random(n)
        c = curve(list(zip(xs, ys)), (t_sc, ys[0]), (t_lc, ys[-1]))
        oracle = riemann_auc([p.avg_tokens for p in c.points], [p.accuracy for p in c.points], t_sc, t_lc)
        assert auc_ac(c) == pytest.approx(oracle, rel=1e-9)


class TestLowerBound:
    def test_lower_bound_example(self):
        assert auc_ac_lb(0.460, 0.646, 1079, 7617) == pytest.approx(3615.514)

    def test_degenerate(self):
        assert auc_ac_lb(0.3, 0.3, 10, 30) == pytest.approx(6.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            auc_ac_lb(0.5, 0.6, 100, 100)

    def test_nauc(self):
        assert nauc_ac(5000, 4801) == 199
        assert nauc_ac(3.25, 3.25) == 0

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(1, 1e4), st.floats(1, 1e4))
    def test_chord_equals_lower_bound(self, a_sc, a_lc, t0, width):
        c = curve([(t0, a_sc), (t0 + width, a_lc)], (t0, a_sc), (t0 + width, a_lc))
        lb = auc_ac_lb(a_sc, a_lc, t0, t0 + width)
        assert auc_ac(c) == pytest.approx(lb, rel=1e-12, abs=1e-12)
        assert curve_metrics(c).nauc_ac == pytest.approx(0.0, abs=1e-9 * max(1.0, lb))

    def test_above_chord_is_positive(self):
        c = curve([(1000, 0.4), (1200, 0.7), (2000, 0.8)], (1000, 0.4), (2000, 0.8))
        assert curve_metrics(c).nauc_ac > 0


class TestCurveConstruction:
    def test_sorted_and_merged(self):
        c = TradeoffCurve.build(
            [CurvePoint(0.3, 500, 0.5), CurvePoint(0.1, 200, 0.4), CurvePoint(0.2, 500, 0.6)], (200, 0.4), (500, 0.6)
        )
        assert [p.avg_tokens for p in c.points] == [200, 500]
        assert c.points[1].accuracy == 0.6

    def test_csv_roundtrip(self, tmp_path):
        c = curve([(1000.5, 0.1 + 0.2), (1500, 1 / 3), (1999.25, 0.7)], (1000.5, 0.3), (1999.25, 0.7))
        path = tmp_path / "c.csv"
        export_curve(c, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "tau,avg_tokens,accuracy" and len(lines) == 6
        assert lines[-2].startswith("sc_only,") and lines[-1].startswith("lc_only,")
        back = read_curve(path)
        assert back.points == c.points
        assert back.sc_endpoint == c.sc_endpoint and back.lc_endpoint == c.lc_endpoint

    def test_empty_curve_not_written(self, tmp_path):
        path = tmp_path / "e.csv"
        with pytest.raises(ValueError):
            export_curve(TradeoffCurve([], (0, 0), (1, 1)), path)
        assert not path.exists()

    def test_default_grid(self):
        assert DEFAULT_TAU_GRID[0] == -1.0 and 1.0 in DEFAULT_TAU_GRID
        assert 1.01 in DEFAULT_TAU_GRID and -1.01 in DEFAULT_TAU_GRID
        assert len(set(DEFAULT_TAU_GRID)) == 103


class TestEvaluate:
    def test_lc_only_all_correct_when_rates_are_one(self):
        corpus = [Query(f"z{i}", f"easy {i}", str(i), 0.0) for i in range(20)]
        res = evaluate(LC_ONLY, corpus, mock_backend(corpus, 0), n_samples_per_query=4)
        assert res.accuracy == 1.0

    def test_sc_cheaper_than_lc(self, corpus, backend):
        sc = evaluate(SC_ONLY, corpus, backend)
        lc = evaluate(LC_ONLY, corpus, backend)
        assert sc.avg_tokens < lc.avg_tokens

    def test_record_invariants(self, corpus, backend):
        res = evaluate(Policy.random(0.5, 1), corpus, backend, n_samples_per_query=3)
        assert res.accuracy == pytest.approx(np.mean([r.correct for r in res.records]))
        assert res.avg_tokens == pytest.approx(np.mean([r.tokens for r in res.records]))
        assert res.n_queries == len(corpus) and not res.partial

    def test_deterministic_given_seed(self, corpus, backend):
        a = evaluate(SC_ONLY, corpus, backend, seed=5)
        b = evaluate(SC_ONLY, corpus, mock_backend(corpus, 0), seed=5)
        assert a.to_dict(True) == b.to_dict(True)

    def test_sc_accuracy_converges_to_planted(self):
        corpus = planted_corpus(100, seed=6)
        n = 64
        res = evaluate(SC_ONLY, corpus, mock_backend(corpus, 0), n_samples_per_query=n)
        p = np.array([planted_rates(q.difficulty_hint)[0] for q in corpus])
        sigma = np.sqrt(np.sum(p * (1 - p)) / n) / len(corpus)
        assert abs(res.accuracy - p.mean()) <= 3 * sigma

    def test_backend_failures_flag_partial(self, corpus, backend):
        class Dead:
            fingerprint = "dead"

            def complete(self, *a, **k):
                raise TransportError("down")

        res = evaluate(SC_ONLY, corpus[:3], Dead())
        assert res.partial and res.accuracy == 0.0 and all(r.errors == 1 for r in res.records)

    def test_switcher_needs_model(self, corpus, backend):
        with pytest.raises(ValueError):
            evaluate(Policy.switcher(0.0), corpus, backend)

    def test_empty_corpus(self, backend):
        with pytest.raises(ValueError):
            evaluate(SC_ONLY, [], backend)

    def test_cache_is_transparent(self, corpus, backend):
        cache = EvalCache()
        a = evaluate(LC_ONLY, corpus, backend, cache=cache)
        b = evaluate(LC_ONLY, corpus, backend, cache=cache)
        c = evaluate(LC_ONLY, corpus, backend)
        assert a.to_dict(True) == b.to_dict(True) == c.to_dict(True)


class TestSweep:
    def test_extreme_grid_hits_endpoints(self, small_trained):
        corpus, be, model, _ = small_trained
        c = sweep_tau(model, corpus, be, [-2.0, 2.0])
        by_tau = {r.policy: r for r in c.sweep}
        assert by_tau["switcher:tau=-2.0"].avg_tokens == c.lc_endpoint[0]
        assert by_tau["switcher:tau=2.0"].avg_tokens == c.sc_endpoint[0]
        assert curve_metrics(c).nauc_ac == pytest.approx(0.0, abs=1e-9)

    def test_duplicates_deduplicated(self, small_trained):
        corpus, be, model, _ = small_trained
        c = sweep_tau(model, corpus[:40], be, [0.1, 0.1, 0.0, 0.1])
        assert len(c.sweep) == 2

    def test_lc_fraction_monotone(self, small_trained):
        corpus, be, model, _ = small_trained
        grid = [-1.0, -0.5, -0.2, 0.0, 0.05, 0.1, 0.2, 0.4, 1.01]
        c = sweep_tau(model, corpus, be, grid)
        fracs = [r.lc_fraction for r in c.sweep]
        assert all(a >= b for a, b in zip(fracs, fracs[1:]))

    def test_endpoints_match_standalone(self, small_trained):
        corpus, be, model, _ = small_trained
        c = sweep_tau(model, corpus, be, [0.0], seed=3)
        sc = evaluate(SC_ONLY, corpus, be, seed=3)
        lc = evaluate(LC_ONLY, corpus, be, seed=3)
        assert c.sc_endpoint == (sc.avg_tokens, sc.accuracy)
        assert c.lc_endpoint == (lc.avg_tokens, lc.accuracy)

    def test_empty_grid(self, small_trained):
        corpus, be, model, _ = small_trained
        with pytest.raises(ValueError):
            sweep_tau(model, corpus, be, [])


@pytest.mark.slow
def test_default_threshold_saves_tokens_on_planted_corpus():
    from cotswitch.data.builder import build_dataset
    from cotswitch.switcher import TrainConfig, train

    corpus = planted_corpus(1000, seed=1)
    be = mock_backend(corpus, 0)
    data, _ = build_dataset(corpus[:800], 8, be)
    model, _ = train(data, TrainConfig(seed=0))
    test = corpus[800:]
    sw = evaluate(Policy.switcher(0.05), test, be, model, n_samples_per_query=16)
    lc = evaluate(LC_ONLY, test, be, n_samples_per_query=16)
    assert sw.avg_tokens <= 0.85 * lc.avg_tokens
    assert sw.accuracy >= lc.accuracy - 0.01
