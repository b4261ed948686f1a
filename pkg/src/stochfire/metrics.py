"""Forecast-verification metrics for binary burn grids.

Every scoring function takes a forecast array, a binary outcome array of the
same shape and an optional non-negative ``sample_weight``. Integer weights
let a pooled evaluation collapse many realisations onto one forecast map:
a cell forecast ``f`` that burnt in ``c`` of ``n`` realisations becomes two
weighted samples ``(f, 1, c)`` and ``(f, 0, n - c)``.

A metric that is undefined on its input (zero denominator, single class)
raises :class:`UndefinedMetric`; nothing returns a placeholder value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UndefinedMetric(ArithmeticError):
    """The metric has no value on this input (e.g. no positive outcomes)."""


class MetricInputError(ValueError):
    pass


def _prepare(forecast, outcome, sample_weight=None):
    f = np.asarray(forecast, dtype=np.float64).ravel()
    o = np.asarray(outcome).ravel()
    if f.shape != o.shape:
        raise MetricInputError(f"shape mismatch: forecast {np.shape(forecast)} vs outcome {np.shape(outcome)}")
    o = o.astype(np.float64)
    if sample_weight is None:
        w = np.ones_like(f)
    else:
        w = np.asarray(sample_weight, dtype=np.float64).ravel()
        if w.shape != f.shape:
            raise MetricInputError("sample_weight must match forecast shape")
        if np.any(w < 0):
            raise MetricInputError("sample_weight must be non-negative")
    return f, o, w


def apply_threshold(forecast, threshold: float = 0.5) -> np.ndarray:
    """Binary prediction ``forecast > threshold`` as uint8."""
    if not 0.0 <= threshold <= 1.0:
        raise MetricInputError(f"threshold must lie in [0, 1], got {threshold}")
    return (np.asarray(forecast) > threshold).astype(np.uint8)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: float
    fp: float
    fn: float
    tn: float

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, gt, sample_weight=None) -> ConfusionCounts:
    p, g, w = _prepare(pred, gt, sample_weight)
    p = p > 0.5
    g = g > 0.5
    tp = float(np.sum(w[p & g]))
    fp = float(np.sum(w[p & ~g]))
    fn = float(np.sum(w[~p & g]))
    tn = float(np.sum(w[~p & ~g]))
    return ConfusionCounts(tp, fp, fn, tn)


def precision(c: ConfusionCounts) -> float:
    if c.tp + c.fp == 0:
        raise UndefinedMetric("precision: no positive predictions")
    return c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetric("recall: no positive outcomes")
    return c.tp / (c.tp + c.fn)


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise UndefinedMetric("accuracy: empty input")
    return (c.tp + c.tn) / c.total


def f1(c: ConfusionCounts) -> float:
    p, r = precision(c), recall(c)
    if p + r == 0:
        raise UndefinedMetric("f1: precision and recall are both zero")
    return 2 * p * r / (p + r)


def _ranked_counts(f, o, w):
    """Cumulative weighted TP/FP at each distinct score, highest first."""
    order = np.argsort(-f, kind="mergesort")
    f, o, w = f[order], o[order], w[order]
    pos = w * o
    neg = w * (1.0 - o)
    # last index of each tie group
    ends = np.flatnonzero(np.diff(f) != 0)
    ends = np.append(ends, f.size - 1)
    tp = np.cumsum(pos)[ends]
    fp = np.cumsum(neg)[ends]
    return f[ends], tp, fp


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    average_precision: float


def pr_curve(forecast, outcome, sample_weight=None) -> PRCurve:
    """Precision/recall at every distinct forecast value, plus average precision.

    AP is the step integral ``sum_n (R_n - R_{n-1}) P_n`` over descending
    thresholds; tied scores share one operating point.
    """
    f, o, w = _prepare(forecast, outcome, sample_weight)
    if f.size == 0 or np.sum(w * o) == 0:
        raise UndefinedMetric("auc_pr: no positive outcomes")
    thr, tp, fp = _ranked_counts(f, o, w)
    n_pos = tp[-1]
    keep = (tp + fp) > 0
    thr, tp, fp = thr[keep], tp[keep], fp[keep]
    prec = tp / (tp + fp)
    rec = tp / n_pos
    d_tp = np.diff(np.concatenate([[0.0], tp]))
    # fsum is correctly rounded, so AP does not depend on summation order
    ap = math.fsum(d_tp * prec) / n_pos
    return PRCurve(thr, prec, rec, ap)


def auc_pr(forecast, outcome, sample_weight=None) -> float:
    return pr_curve(forecast, outcome, sample_weight).average_precision


@dataclass
class ROCCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(forecast, outcome, sample_weight=None) -> ROCCurve:
    """ROC over all distinct thresholds with trapezoidal area.

    The area is accumulated as ``sum dFP * (TP_k + TP_{k-1})`` before a single
    division, so with integer weights it is the exact tie-corrected
    Mann-Whitney statistic.
    """
    f, o, w = _prepare(forecast, outcome, sample_weight)
    n_pos = float(np.sum(w * o))
    n_neg = float(np.sum(w * (1.0 - o)))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("auc_roc: outcomes contain a single class")
    thr, tp, fp = _ranked_counts(f, o, w)
    tp0 = np.concatenate([[0.0], tp])
    fp0 = np.concatenate([[0.0], fp])
    twice_area = float(np.sum(np.diff(fp0) * (tp0[1:] + tp0[:-1])))
    auc = twice_area / (2.0 * n_pos * n_neg)
    return ROCCurve(thr, fp / n_neg, tp / n_pos, auc)


def auc_roc(forecast, outcome, sample_weight=None) -> float:
    return roc_curve(forecast, outcome, sample_weight).auc


def mse(forecast, outcome, sample_weight=None) -> float:
    """Brier score: weighted mean of ``(F - O)**2``."""
    f, o, w = _prepare(forecast, outcome, sample_weight)
    tot = np.sum(w)
    if tot == 0:
        raise UndefinedMetric("mse: empty input")
    return float(np.sum(w * (f - o) ** 2) / tot)


@dataclass(frozen=True)
class BrierDecomposition:
    reliability: float
    conditional_variance: float

    @property
    def mse(self):
        return self.reliability + self.conditional_variance


def brier_decomposition(forecast, outcome, sample_weight=None) -> BrierDecomposition:
    """Split MSE into reliability ``E[(E[O|F] - F)^2]`` and ``E[Var(O|F)]``.

    Cells are grouped by exact forecast value.
    """
    f, o, w = _prepare(forecast, outcome, sample_weight)
    tot = np.sum(w)
    if tot == 0:
        raise UndefinedMetric("brier_decomposition: empty input")
    values, inv = np.unique(f, return_inverse=True)
    wg = np.bincount(inv, weights=w, minlength=values.size)
    occupied = wg > 0
    ybar = np.zeros_like(values)
    ybar[occupied] = np.bincount(inv, weights=w * o, minlength=values.size)[occupied] / wg[occupied]
    resid = np.bincount(inv, weights=w * (o - ybar[inv]) ** 2, minlength=values.size)
    rel = float(np.sum(wg * (ybar - values) ** 2) / tot)
    cvar = float(np.sum(resid) / tot)
    return BrierDecomposition(rel, cvar)


def bin_index(forecast, n_bins: int) -> np.ndarray:
    """Equal-width bins on [0, 1], left-closed; the last bin includes 1.0."""
    if n_bins < 1:
        raise MetricInputError("n_bins must be >= 1")
    idx = np.floor(np.asarray(forecast, dtype=np.float64) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


@dataclass
class CalibrationCurve:
    """Per-bin mean forecast, observed frequency and weight.

    ``mean_pred``/``mean_obs`` are NaN where ``count == 0``; use ``occupied``.
    """

    edges: np.ndarray
    mean_pred: np.ndarray
    mean_obs: np.ndarray
    count: np.ndarray

    @property
    def occupied(self):
        return self.count > 0

    @property
    def total(self):
        return float(self.count.sum())

    def ece(self) -> float:
        occ = self.occupied
        gaps = np.abs(self.mean_obs[occ] - self.mean_pred[occ])
        return float(np.sum(self.count[occ] * gaps) / self.total)

    def max_gap(self, min_count: float = 0) -> float:
        sel = self.occupied & (self.count >= min_count)
        if not sel.any():
            raise UndefinedMetric("no bins with enough support")
        return float(np.max(np.abs(self.mean_obs[sel] - self.mean_pred[sel])))


def calibration_curve(forecast, outcome, n_bins: int = 10, sample_weight=None) -> CalibrationCurve:
    f, o, w = _prepare(forecast, outcome, sample_weight)
    if np.sum(w) == 0:
        raise UndefinedMetric("calibration_curve: empty input")
    idx = bin_index(f, n_bins)
    cnt = np.bincount(idx, weights=w, minlength=n_bins)
    sp = np.bincount(idx, weights=w * f, minlength=n_bins)
    so = np.bincount(idx, weights=w * o, minlength=n_bins)
    mp = np.full(n_bins, np.nan)
    mo = np.full(n_bins, np.nan)
    occ = cnt > 0
    mp[occ] = sp[occ] / cnt[occ]
    mo[occ] = so[occ] / cnt[occ]
    return CalibrationCurve(np.linspace(0.0, 1.0, n_bins + 1), mp, mo, cnt)


def ece(forecast, outcome, n_bins: int = 10, sample_weight=None) -> float:
    """Expected calibration error with ``n_bins`` equal-width bins.

    Per bin, the gap is between the mean forecast and the observed positive
    rate; gaps are weighted by bin support.
    """
    return calibration_curve(forecast, outcome, n_bins, sample_weight).ece()


def dice(mask_a, mask_b) -> float:
    a = np.asarray(mask_a).astype(bool)
    b = np.asarray(mask_b).astype(bool)
    if a.shape != b.shape:
        raise MetricInputError("dice: masks differ in shape")
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        raise UndefinedMetric("dice: both masks empty")
    return 2.0 * int(np.count_nonzero(a & b)) / denom


def bootstrap_ci(values, n_resamples: int = 1000, level: float = 0.95, seed: int = 0,
                 groups=None, statistic=np.mean):
    """Percentile bootstrap interval of ``statistic(values)``.

    With ``groups`` whole groups (e.g. simulations) are resampled instead of
    individual values. Returns None when there are fewer than two sampling
    units or no resamples are requested.
    """
    values = np.asarray(values, dtype=np.float64)
    if groups is None:
        units = [values[i:i + 1] for i in range(values.size)]
    else:
        groups = np.asarray(groups)
        keys = np.unique(groups)
        units = [values[groups == k] for k in keys]
    if len(units) < 2 or n_resamples < 1:
        return None
    rng = np.random.default_rng(seed)
    n = len(units)
    stats = np.empty(n_resamples)
    for r in range(n_resamples):
        pick = rng.integers(0, n, size=n)
        stats[r] = statistic(np.concatenate([units[i] for i in pick]))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    point = statistic(values)
    # percentile intervals can miss the point estimate for skewed statistics
    return float(min(lo, point)), float(max(hi, point))


METRICS = ("precision", "recall", "accuracy", "f1", "auc_pr", "auc_roc", "mse", "ece")


def score(name: str, forecast, outcome, threshold: float = 0.5, n_bins: int = 10,
          sample_weight=None) -> float:
    """Evaluate one named metric; raises UndefinedMetric when it has no value."""
    if name in ("precision", "recall", "accuracy", "f1"):
        c = confusion(apply_threshold(forecast, threshold), outcome, sample_weight)
        return {"precision": precision, "recall": recall, "accuracy": accuracy, "f1": f1}[name](c)
    if name == "auc_pr":
        return auc_pr(forecast, outcome, sample_weight)
    if name == "auc_roc":
        return auc_roc(forecast, outcome, sample_weight)
    if name == "mse":
        return mse(forecast, outcome, sample_weight)
    if name == "ece":
        return ece(forecast, outcome, n_bins, sample_weight)
    raise MetricInputError(f"unknown metric {name!r}; valid: {', '.join(METRICS)}")


@dataclass
class MetricReport:
    """One metric value for one stratum, with support and optional CI."""

    metric: str
    value: float | None
    support: int
    stratum_kind: str = "overall"
    stratum_lo: float | None = None
    stratum_hi: float | None = None
    ci: tuple | None = None

    def __post_init__(self):
        if self.value is None and self.ci is not None:
            raise ValueError("a CI needs a value")
        if self.ci is not None:
            lo, hi = self.ci
            if not lo <= self.value <= hi:
                raise ValueError(f"CI {self.ci} does not bracket {self.value}")
