import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lincomb.evalkit import (
    accuracy,
    calibration_mae,
    isotonic_fit,
    mann_whitney_auc,
    pav,
    reliability_csv,
    roc_auc,
    score_variance,
    to_binary,
)
from oracles import brute_isotonic, pair_count_auc, two_pass_variance, welford_variance


class TestAccuracy:
    def test_examples(self):
        a = [1, -1, 1, -1]
        assert accuracy(a, a) == 1.0
        assert accuracy(a, [-v for v in a]) == 0.0
        assert accuracy(a, [1, -1, 1, 1]) == 0.75

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy([], [])
        with pytest.raises(ValueError):
            accuracy([1], [1, 1])


class TestRoc:
    def test_pair_count_example(self):
        labels, scores = [-1, -1, 1, 1], [0.1, 0.4, 0.35, 0.8]
        assert pair_count_auc(labels, scores) == 0.75
        assert roc_auc(labels, scores).auc == pytest.approx(0.75, abs=1e-12)

    def test_all_ties(self):
        assert roc_auc([1, -1, 1, -1], [2.0] * 4).auc == 0.5

    def test_separating(self):
        assert roc_auc([1, 1, -1], [3.0, 2.0, 1.0]).auc == 1.0

    def test_curve_shape(self):
        rng = np.random.default_rng(0)
        labels = np.where(rng.random(50) < 0.4, 1, -1)
        labels[:2] = (1, -1)
        roc = roc_auc(labels, rng.normal(size=50).round(1))
        pts = np.array(roc.points)
        assert tuple(pts[0]) == (0.0, 0.0) and tuple(pts[-1]) == (1.0, 1.0)
        assert np.all(np.diff(pts, axis=0) >= 0)
        trap = float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2))
        assert roc.auc == pytest.approx(trap, abs=1e-12)

    def test_single_class(self):
        with pytest.raises(ValueError):
            roc_auc([1, 1], [0.1, 0.2])

    def test_labels_must_be_pm1(self):
        with pytest.raises(ValueError):
            roc_auc([0, 1], [0.0, 1.0])

    def test_csv(self):
        text = roc_auc([1, -1], [0.2, 0.1]).to_csv({"stage": "evaluate"})
        lines = text.splitlines()
        assert lines[0] == "# stage=evaluate"
        assert lines[1] == "threshold,false_positive_rate,true_positive_rate"
        assert lines[2] == "inf,0.0,0.0"

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from([-1, 1]), st.integers(-4, 4)), min_size=2, max_size=30))
    def test_matches_pair_count(self, pairs):
        labels = np.array([p[0] for p in pairs])
        scores = np.array([p[1] for p in pairs], dtype=float) / 2
        if len(set(labels)) < 2:
            return
        ref = pair_count_auc(labels, scores)
        assert roc_auc(labels, scores).auc == pytest.approx(ref, abs=1e-9)
        assert mann_whitney_auc(labels, scores) == pytest.approx(ref, abs=1e-9)


class TestIsotonic:
    def test_no_violators(self):
        m = isotonic_fit([1, 2, 3, 4], [0, 0, 1, 1])
        np.testing.assert_array_equal(m.fitted, [0, 0, 1, 1])

    def test_single_pool(self):
        np.testing.assert_allclose(isotonic_fit([1, 2], [1, 0]).fitted, [0.5, 0.5])

    def test_four_point_example(self):
        y = [0, 1, 0, 1]
        np.testing.assert_allclose(brute_isotonic(y), [0, 0.5, 0.5, 1])
        np.testing.assert_allclose(isotonic_fit([1, 2, 3, 4], y).fitted, [0, 0.5, 0.5, 1])

    def test_ties_are_pooled(self):
        m = isotonic_fit([1.0, 1.0, 2.0], [1, 0, 1])
        np.testing.assert_allclose(m.predict([1.0, 2.0]), [0.5, 1.0])

    def test_step_prediction_and_flat_ends(self):
        m = isotonic_fit([0.0, 1.0, 2.0, 3.0], [0, 1, 0, 1])
        np.testing.assert_allclose(m.predict([-5.0, 0.5, 1.0, 2.9, 10.0]), [0, 0, 0.5, 0.5, 1])

    def test_pm1_targets_converted(self):
        a = isotonic_fit([1, 2, 3], [-1, 1, 1])
        b = isotonic_fit([1, 2, 3], [0, 1, 1])
        np.testing.assert_array_equal(a.fitted, b.fitted)

    def test_empty(self):
        with pytest.raises(ValueError):
            isotonic_fit([], [])

    def test_exhaustive_binary_targets(self):
        for n in range(1, 7):
            for y in itertools.product((0, 1), repeat=n):
                fit = isotonic_fit(np.arange(n, dtype=float), y).fitted
                np.testing.assert_allclose(fit, brute_isotonic(y), atol=1e-9)

    def test_pav_weighted(self):
        np.testing.assert_allclose(pav([1.0, 0.0], [3.0, 1.0]), [0.75, 0.75])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from([0, 1])), min_size=1, max_size=7))
    def test_ties_against_grouped_brute_force(self, pairs):
        pairs = sorted(pairs, key=lambda p: p[0])
        s = np.array([p[0] for p in pairs], dtype=float)
        y = np.array([p[1] for p in pairs])
        ref = brute_isotonic(y, groups=s)
        m = isotonic_fit(s, y)
        np.testing.assert_allclose(m.predict(s), ref, atol=1e-9)
        # monotone in the input score
        grid = np.linspace(-1, 4, 41)
        assert np.all(np.diff(m.predict(grid)) >= 0)


class TestCalibrationMae:
    def test_perfect(self):
        s, y = [0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]
        assert calibration_mae(isotonic_fit(s, y), s, y) == 0.0

    def test_constant_half(self):
        m = isotonic_fit([0.0, 0.0, 0.0, 0.0], [0, 1, 0, 1])
        assert calibration_mae(m, [0.0] * 4, [0, 1, 0, 1]) == 0.5

    def test_reliability_csv_sorted(self):
        s, y = [0.3, 0.1, 0.2], [1, 0, 1]
        lines = reliability_csv(isotonic_fit(s, y), s, y).splitlines()
        assert lines[0] == "score,target,calibrated"
        assert [float(l.split(",")[0]) for l in lines[1:]] == [0.1, 0.2, 0.3]

    @pytest.mark.xfail(strict=True, reason=(
        "0.143 is not reachable when the isotonic posterior is scored against 0/1 labels: "
        "the in-sample fit on this pipeline gives about 0.24; see the decisions ledger"))
    def test_heart_pipeline_value(self, pipelines):
        m = pipelines.run("heart")["metrics"]
        assert abs(m["combined"]["calibration_mae"] - 0.143) <= 0.03
        assert abs(m["max_accuracy"]["calibration_mae"] - 0.138) <= 0.03


class TestScoreVariance:
    def test_examples(self):
        assert score_variance([1, -1, 1], [1, -1, 1]) == 0.0
        assert score_variance([0, 0], [1, -1]) == 2.0

    def test_short(self):
        with pytest.raises(ValueError):
            score_variance([1], [1])

    def test_against_streaming_oracles(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = rng.integers(2, 200)
            y = np.where(rng.random(n) < 0.5, 1, -1)
            s = rng.normal(size=n) * 10
            d = s - y
            v = score_variance(y, s)
            assert v == pytest.approx(two_pass_variance(d), rel=1e-12)
            assert v == pytest.approx(welford_variance(d), rel=1e-10)

    def test_to_binary(self):
        np.testing.assert_array_equal(to_binary([-1, 1, 1]), [0, 1, 1])
