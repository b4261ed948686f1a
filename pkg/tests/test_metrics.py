import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochfire import metrics as M

SCORES = [0.9, 0.8, 0.4, 0.3]
GT = [1, 0, 1, 0]


def brute_auc_roc(f, o):
    pos = [x for x, y in zip(f, o) if y]
    neg = [x for x, y in zip(f, o) if not y]
    twice = sum(2 * (p > n) + (p == n) for p in pos for n in neg)
    return float(Fraction(twice, 2 * len(pos) * len(neg)))


def brute_auc_pr(f, o):
    n_pos = sum(o)
    terms, prev_tp = [], 0
    for thr in sorted(set(f), reverse=True):
        tp = sum(1 for x, y in zip(f, o) if x >= thr and y)
        fp = sum(1 for x, y in zip(f, o) if x >= thr and not y)
        terms.append((tp - prev_tp) * (tp / (tp + fp)))
        prev_tp = tp
    return math.fsum(terms) / n_pos


# -- thresholded -------------------------------------------------------------

def test_threshold_strict():
    assert M.apply_threshold([0.3, 0.5, 0.8], 0.5).tolist() == [0, 0, 1]
    assert M.apply_threshold([0.1, 0.9], 0.0).tolist() == [1, 1]
    assert M.apply_threshold([0.1, 1.0], 1.0).tolist() == [0, 0]
    with pytest.raises(M.MetricInputError):
        M.apply_threshold([0.2], 1.5)


def test_confusion_hand_example():
    c = M.confusion([1, 1, 0, 0], [1, 0, 1, 0])
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)
    for fn in (M.precision, M.recall, M.accuracy, M.f1):
        assert fn(c) == 0.5


def test_perfect_prediction():
    c = M.confusion([1, 0, 1], [1, 0, 1])
    assert M.precision(c) == M.recall(c) == M.f1(c) == 1.0


def test_no_positives():
    c = M.confusion([0, 0, 1], [0, 0, 0])
    with pytest.raises(M.UndefinedMetric):
        M.recall(c)
    assert M.accuracy(c) == pytest.approx(2 / 3)
    with pytest.raises(M.UndefinedMetric):
        M.precision(M.confusion([0, 0], [0, 0]))


# -- ranking -----------------------------------------------------------------

def test_ap_hand_value():
    assert M.auc_pr(SCORES, GT) == pytest.approx(5 / 6, abs=1e-15)


def test_roc_hand_value():
    assert M.auc_roc(SCORES, GT) == 0.75


def test_ranking_degenerate():
    assert M.auc_pr([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert M.auc_roc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert M.auc_roc([0.4] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    assert M.auc_pr([0.4] * 8, [1, 0, 1, 0, 0, 0, 0, 0]) == 0.25
    with pytest.raises(M.UndefinedMetric):
        M.auc_pr([0.2, 0.3], [0, 0])
    with pytest.raises(M.UndefinedMetric):
        M.auc_roc([0.2, 0.3], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 8), st.booleans()), min_size=2, max_size=60))
@settings(max_examples=300, deadline=None)
def test_ranking_against_brute_force(pairs):
    f = [k / 8 for k, _ in pairs]
    o = [int(b) for _, b in pairs]
    assume(0 < sum(o) < len(o))
    assert M.auc_roc(f, o) == brute_auc_roc(f, o)
    assert M.auc_pr(f, o) == brute_auc_pr(f, o)


@given(st.lists(st.tuples(st.integers(0, 5), st.booleans(), st.integers(0, 4)), min_size=2, max_size=30))
@settings(max_examples=200, deadline=None)
def test_integer_weights_equal_repetition(rows):
    f = np.array([k / 5 for k, _, _ in rows])
    o = np.array([int(b) for _, b, _ in rows])
    w = np.array([n for _, _, n in rows])
    rf, ro = np.repeat(f, w), np.repeat(o, w)
    assume(0 < ro.sum() < ro.size)
    assert M.auc_roc(f, o, w) == M.auc_roc(rf, ro)
    assert M.auc_pr(f, o, w) == M.auc_pr(rf, ro)
    assert M.mse(f, o, w) == pytest.approx(M.mse(rf, ro), abs=1e-14)
    assert M.ece(f, o, 10, w) == pytest.approx(M.ece(rf, ro), abs=1e-14)
    for name in ("precision", "recall", "accuracy"):
        try:
            expect = M.score(name, rf, ro)
        except M.UndefinedMetric:
            continue
        assert M.score(name, f, o, sample_weight=w) == pytest.approx(expect, abs=1e-14)


# -- probabilistic -----------------------------------------------------------

def test_mse_hand_values():
    assert M.mse([0.8, 0.2], [1, 0]) == pytest.approx(0.04)
    assert M.mse([0.5] * 3, [1, 0, 1]) == 0.25
    assert M.mse([1, 0], [1, 0]) == 0.0


def test_decomposition_hand_values():
    d = M.brier_decomposition([0.9, 0.9], [1, 0])
    assert d.reliability == pytest.approx(0.16, abs=1e-15)
    assert d.conditional_variance == 0.25
    assert d.mse == pytest.approx(0.41, abs=1e-15)
    d = M.brier_decomposition([0.5] * 4, [1, 1, 0, 0])
    assert (d.reliability, d.conditional_variance) == (0.0, 0.25)
    d = M.brier_decomposition([1, 0, 1], [1, 0, 1])
    assert (d.reliability, d.conditional_variance) == (0.0, 0.0)


@given(arrays(np.int64, st.integers(1, 40), elements=st.integers(0, 10)),
       st.data())
@settings(max_examples=300, deadline=None)
def test_decomposition_identity(levels, data):
    f = levels / 10
    o = np.array(data.draw(st.lists(st.booleans(), min_size=f.size, max_size=f.size)), dtype=float)
    d = M.brier_decomposition(f, o)
    assert abs(d.reliability + d.conditional_variance - M.mse(f, o)) <= 1e-12
    assert d.reliability >= 0 and d.conditional_variance >= 0


def test_ece_hand_values():
    assert M.ece([0.9, 0.9, 0.1, 0.1], [1, 0, 0, 0], 10) == pytest.approx(0.25, abs=1e-15)
    assert M.ece([0.7] * 10, [1] * 7 + [0] * 3) == pytest.approx(0.0, abs=1e-15)
    assert M.ece([1.0] * 3, [1] * 3) == 0.0


def test_bin_edges():
    assert M.bin_index([0.0, 0.1, 0.0999, 0.95, 1.0], 10).tolist() == [0, 1, 0, 9, 9]


def test_calibration_curve_consistency(rng):
    f = rng.random(5000)
    o = rng.random(5000) < f
    curve = M.calibration_curve(f, o, 10)
    assert curve.total == 5000
    manual = sum(n / 5000 * abs(y - p) for n, y, p in
                 zip(curve.count, curve.mean_obs, curve.mean_pred) if n > 0)
    assert curve.ece() == pytest.approx(manual, abs=1e-15)
    assert curve.ece() == M.ece(f, o, 10)
    # Bernoulli(F) outcomes sit on the diagonal within sampling error
    occ = curve.count > 0
    se = np.sqrt(0.25 / curve.count[occ])
    assert np.all(np.abs(curve.mean_obs[occ] - curve.mean_pred[occ]) < 5 * se)


def test_constant_forecast_one_bin():
    curve = M.calibration_curve([0.33] * 20, [0, 1] * 10)
    assert np.count_nonzero(curve.count) == 1
    assert curve.mean_pred[curve.occupied][0] == pytest.approx(0.33)


# -- dice and bootstrap ------------------------------------------------------

def test_dice():
    a = np.zeros((4, 4), bool)
    b = np.zeros((4, 4), bool)
    a[0, :4] = True
    b[0, 2:4] = True
    b[1, :2] = True
    assert M.dice(a, b) == 0.5
    assert M.dice(a, a) == 1.0
    assert M.dice(a, ~a) == 0.0
    with pytest.raises(M.UndefinedMetric):
        M.dice(np.zeros(3), np.zeros(3))


def test_bootstrap_ci():
    same = [0.3] * 10
    assert M.bootstrap_ci(same) == (np.mean(same), np.mean(same))
    assert M.bootstrap_ci([0.4]) is None
    assert M.bootstrap_ci([1.0, 2.0, 2.0], groups=[7, 7, 7]) is None
    vals = np.random.default_rng(0).exponential(size=50)
    lo, hi = M.bootstrap_ci(vals, 500)
    assert lo <= vals.mean() <= hi


def test_metric_report_invariant():
    with pytest.raises(ValueError):
        M.MetricReport("mse", 0.5, 10, ci=(0.6, 0.7))
    with pytest.raises(ValueError):
        M.MetricReport("mse", None, 0, ci=(0.1, 0.2))


def test_score_dispatch():
    for name in M.METRICS:
        M.score(name, SCORES, GT)
    with pytest.raises(M.MetricInputError, match="auc_pr"):
        M.score("brier", SCORES, GT)
    with pytest.raises(M.MetricInputError):
        M.mse([0.1, 0.2], [1])
