"""Evaluation studies on simulated ensembles.

Forecasters are either a shared :class:`ForecastMap` (the same map scored
against every realisation) or a callable ``f(burnt_frames, sim_index, t0=None)``
returning a per-realisation map, such as :class:`Persistence`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import metrics as M
from .ensemble import Ensemble, macro_series, micro_stat_map
from .forecasters import ForecastMap, oracle_forecast, persistence_forecast


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class Persistence:
    """Per-realisation persistence forecaster observing frames up to ``t0``."""

    t0: int = 10

    def __call__(self, burnt_frames, sim_index, t0=None):
        return persistence_forecast(burnt_frames, self.t0 if t0 is None else t0)


def _check(forecaster, evaluation: Ensemble):
    if isinstance(forecaster, ForecastMap):
        forecaster.check_holdout(evaluation)
    elif not callable(forecaster):
        raise ExperimentError("forecaster must be a ForecastMap or a callable")


def _per_sim_forecasts(forecaster, evaluation: Ensemble):
    burnt = evaluation.burnt()
    return [forecaster(burnt[k], int(evaluation.sim_indices[k])).values for k in range(len(evaluation))]


class _Pooled:
    """All realisations' cells at one timestep as one weighted sample."""

    def __init__(self, forecast_frame, gt, per_sim=None):
        n = gt.shape[0]
        self.n = n
        self.gt = gt.reshape(n, -1)
        if per_sim is None:
            # cells with equal forecasts merge into one weighted sample;
            # integer weights keep every metric exact
            f = np.asarray(forecast_frame, dtype=np.float64).ravel()
            self.shared = True
            values, self.inv = np.unique(f, return_inverse=True)
            self.n_groups = values.size
            self.f = np.concatenate([values, values])
            self.o = np.concatenate([np.ones(values.size), np.zeros(values.size)])
            self.group_size = np.bincount(self.inv, minlength=values.size).astype(np.float64)
            self.cells = f.size
            # burnt cells per (realisation, forecast group)
            self.group_pos = np.stack([np.bincount(self.inv, weights=row, minlength=values.size)
                                       for row in self.gt])
        else:
            self.shared = False
            self.f = np.concatenate([p.ravel() for p in per_sim])
            self.o = self.gt.ravel().astype(np.float64)
            self.cells = self.gt.shape[1]

    def weights(self, sim_weights=None):
        if sim_weights is None:
            sim_weights = np.ones(self.n)
        if self.shared:
            pos = sim_weights @ self.group_pos
            return np.concatenate([pos, sim_weights.sum() * self.group_size - pos])
        return np.repeat(sim_weights, self.cells)

    def score(self, name, sim_weights=None, threshold=0.5, n_bins=10):
        return M.score(name, self.f, self.o, threshold, n_bins, self.weights(sim_weights))


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except M.UndefinedMetric:
        return None


def _boot_weights(n, n_boot, seed):
    rng = np.random.default_rng(seed)
    return np.stack([np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
                     for _ in range(n_boot)]) if n_boot else np.empty((0, n))


def _ci_from(values, point, level=0.95):
    vals = np.array([v for v in values if v is not None])
    if point is None or vals.size < 2:
        return None
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(vals, [a, 1.0 - a])
    return float(min(lo, point)), float(max(hi, point))


def default_horizon(evaluation: Ensemble, t_obs: int = 10, t_end: int | None = None):
    t_end = evaluation.n_frames - 1 if t_end is None else t_end
    if not 0 <= t_obs < t_end < evaluation.n_frames:
        raise ExperimentError(f"horizon ({t_obs}, {t_end}] does not fit {evaluation.n_frames} frames")
    return range(t_obs + 1, t_end + 1)


def time_stratified_eval(evaluation: Ensemble, forecaster, metric_names, timesteps=None,
                         threshold: float = 0.5, n_bins: int = 10, n_boot: int = 0,
                         seed: int = 0):
    """Pool every realisation's cells at each timestep and score once.

    With ``n_boot`` > 0 a percentile CI is attached by resampling whole
    realisations. Returns a list of :class:`MetricReport` (one per
    timestep and metric).
    """
    _check(forecaster, evaluation)
    timesteps = default_horizon(evaluation) if timesteps is None else timesteps
    shared = isinstance(forecaster, ForecastMap)
    per_sim = None if shared else _per_sim_forecasts(forecaster, evaluation)
    W = _boot_weights(len(evaluation), n_boot, seed)
    out = []
    for t in timesteps:
        gt = evaluation.burnt(t)
        pooled = _Pooled(forecaster.values[t] if shared else None, gt,
                         None if shared else [p[t] for p in per_sim])
        for name in metric_names:
            value = _safe(pooled.score, name, None, threshold, n_bins)
            ci = None
            if n_boot and value is not None:
                ci = _ci_from([_safe(pooled.score, name, w, threshold, n_bins) for w in W], value)
            out.append(M.MetricReport(name, value, len(evaluation) if value is not None else 0,
                                      "timestep", t, t, ci))
    return out


def pooled_overall(evaluation: Ensemble, forecaster: ForecastMap, metric_name, timesteps,
                   threshold=0.5, n_bins=10):
    """One metric pooled over all realisations and all ``timesteps``."""
    _check(forecaster, evaluation)
    f, o, w = _stack_shared(forecaster, evaluation, timesteps)
    return M.score(metric_name, f, o, threshold, n_bins, w)


def _stack_shared(forecaster: ForecastMap, evaluation: Ensemble, timesteps):
    fs, os_, ws = [], [], []
    n = len(evaluation)
    for t in timesteps:
        f = forecaster.values[t].ravel()
        c = evaluation.burnt(t).reshape(n, -1).sum(axis=0).astype(np.float64)
        fs += [f, f]
        os_ += [np.ones(f.size), np.zeros(f.size)]
        ws += [c, n - c]
    return np.concatenate(fs), np.concatenate(os_), np.concatenate(ws)


@dataclass
class VarianceBinnedStat:
    """Per macro-variance bin: mean and SD of each metric over scored frames."""

    edges: np.ndarray
    metrics: tuple
    mean: dict
    sd: dict
    support: dict
    count: np.ndarray
    records: list = field(repr=False, default_factory=list)
    excluded: dict = field(default_factory=dict)

    def occupied(self, metric, min_support=2):
        return self.support[metric] >= min_support

    def spearman(self, metric, min_support=2) -> float:
        """Rank correlation of per-bin SD against bin centre."""
        occ = self.occupied(metric, min_support)
        centres = 0.5 * (self.edges[:-1] + self.edges[1:])
        if occ.sum() < 3:
            raise M.UndefinedMetric("fewer than 3 occupied variance bins")
        return float(sps.spearmanr(centres[occ], self.sd[metric][occ]).statistic)

    def top_bin(self, metric, min_support=2) -> int:
        occ = np.flatnonzero(self.occupied(metric, min_support))
        if occ.size == 0:
            raise M.UndefinedMetric("no occupied variance bins")
        return int(occ[-1])


def variance_sensitivity(evaluation: Ensemble, forecaster, metric_names, n_bins: int = 20,
                         timesteps=None, threshold: float = 0.5, ece_bins: int = 10):
    """Score each (realisation, timestep) frame and group by Var[Z_t].

    Bins are ``n_bins`` equal-width intervals over the observed range of the
    burnt-count variance across the scored timesteps.
    """
    _check(forecaster, evaluation)
    timesteps = list(default_horizon(evaluation) if timesteps is None else timesteps)
    var = macro_series(evaluation).var_burnt
    vt = np.array([var[t] for t in timesteps])
    lo, hi = float(vt.min()), float(vt.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    shared = isinstance(forecaster, ForecastMap)
    per_sim = None if shared else _per_sim_forecasts(forecaster, evaluation)
    burnt = evaluation.burnt()

    records = []
    for k in range(len(evaluation)):
        for t in timesteps:
            f = forecaster.values[t] if shared else per_sim[k][t]
            row = {"sim_index": int(evaluation.sim_indices[k]), "t": t, "var": float(var[t]),
                   "bin": int(M.bin_index((var[t] - lo) / (hi - lo), n_bins))}
            for name in metric_names:
                row[name] = _safe(M.score, name, f, burnt[k, t], threshold, ece_bins)
            records.append(row)

    mean, sd, support, excluded = {}, {}, {}, {}
    count = np.bincount([r["bin"] for r in records], minlength=n_bins)
    for name in metric_names:
        mean[name] = np.full(n_bins, np.nan)
        sd[name] = np.full(n_bins, np.nan)
        support[name] = np.zeros(n_bins, dtype=np.int64)
        excluded[name] = sum(r[name] is None for r in records)
        for b in range(n_bins):
            vals = np.array([r[name] for r in records if r["bin"] == b and r[name] is not None])
            support[name][b] = vals.size
            if vals.size:
                mean[name][b] = vals.mean()
                sd[name][b] = vals.std()
    return VarianceBinnedStat(edges, tuple(metric_names), mean, sd, support, count, records, excluded)


@dataclass
class CalibrationCheck:
    curve: M.CalibrationCurve
    ece: float
    ece_by_t: dict
    scatter: np.ndarray  # rows (forecast, statistic of evaluation half, n_cells)


def oracle_calibration_check(training: Ensemble, evaluation: Ensemble, timesteps=None,
                             n_bins: int = 10, forecast: ForecastMap | None = None):
    """Calibration of a training-half statistic against held-out realisations."""
    fc = oracle_forecast(training, evaluation) if forecast is None else forecast
    fc.check_holdout(evaluation)
    timesteps = list(default_horizon(evaluation) if timesteps is None else timesteps)
    f, o, w = _stack_shared(fc, evaluation, timesteps)
    curve = M.calibration_curve(f, o, n_bins, w)
    by_t = {}
    for t in timesteps:
        ft, ot, wt = _stack_shared(fc, evaluation, [t])
        by_t[t] = M.ece(ft, ot, n_bins, wt)
    target = micro_stat_map(evaluation).values
    pairs = np.stack([fc.values[timesteps].ravel(), target[timesteps].ravel()], axis=1)
    uniq, cnt = np.unique(pairs, axis=0, return_counts=True)
    scatter = np.column_stack([uniq, cnt])
    return CalibrationCheck(curve, curve.ece(), by_t, scatter)


@dataclass
class DCPairScore:
    sim_index: int
    t: int
    dc: float
    values: dict


def dc_pairs(evaluation: Ensemble, forecaster, delta: int = 5, timesteps=None):
    """Yield ``(mask_t, mask_{t+delta}, forecast_{t+delta}, sim_index, t)``.

    Frames whose starting mask is empty are skipped (Dice undefined). A
    callable forecaster observes up to ``t0 = t``.
    """
    if delta < 1:
        raise ExperimentError("delta must be >= 1")
    burnt = evaluation.burnt()
    T = evaluation.n_frames
    timesteps = range(1, T - delta) if timesteps is None else timesteps
    shared = isinstance(forecaster, ForecastMap)
    for k in range(len(evaluation)):
        for t in timesteps:
            if t + delta >= T:
                break
            a = burnt[k, t]
            if not a.any():
                continue
            if shared:
                f = forecaster.values[t + delta]
            else:
                f = forecaster(burnt[k], int(evaluation.sim_indices[k]), t0=t).values[t + delta]
            yield a, burnt[k, t + delta], f, int(evaluation.sim_indices[k]), t


DC_METRICS = ("precision", "recall", "auc_pr", "mse")


def dc_stratified_eval(pairs, metric_names=DC_METRICS, n_bins: int = 10, threshold: float = 0.5,
                       n_boot: int = 1000, seed: int = 0, level: float = 0.95):
    """Table of per-pair metric means stratified by Dice(mask_t, mask_t+delta).

    Returns ``(reports, scored_pairs)``: ``n_bins`` rows plus one Overall row
    per metric, and the raw per-pair scores from which every row value is
    the plain mean. CIs resample simulations, not pairs.
    """
    scored = []
    for a, b, f, sim, t in pairs:
        try:
            dc = M.dice(a, b)
        except M.UndefinedMetric:
            raise ExperimentError(f"pair (sim {sim}, t {t}) has two empty masks") from None
        vals = {name: _safe(M.score, name, f, b, threshold) for name in metric_names}
        scored.append(DCPairScore(sim, t, dc, vals))

    bins = M.bin_index([p.dc for p in scored], n_bins) if scored else np.empty(0, dtype=np.int64)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    reports = []
    strata = [(b, edges[b], edges[b + 1]) for b in range(n_bins)] + [(None, 0.0, 1.0)]
    for name in metric_names:
        for b, lo, hi in strata:
            sel = [i for i in range(len(scored)) if (b is None or bins[i] == b)
                   and scored[i].values[name] is not None]
            vals = np.array([scored[i].values[name] for i in sel])
            groups = np.array([scored[i].sim_index for i in sel])
            kind = "overall" if b is None else "dc"
            if vals.size == 0:
                reports.append(M.MetricReport(name, None, 0, kind, lo, hi, None))
                continue
            value = float(vals.mean())
            ci = M.bootstrap_ci(vals, n_boot, level, seed, groups) if vals.size >= 2 else None
            reports.append(M.MetricReport(name, value, int(vals.size), kind, lo, hi, ci))
    return reports, scored


@dataclass
class CrossLevelResult:
    reports: dict          # forecaster label -> list[MetricReport] by timestep
    overall: dict          # forecaster label -> {metric: pooled value}


def cross_slevel_eval(forecasts: dict, evaluation: Ensemble, metric_names=("auc_pr", "mse", "ece"),
                      timesteps=None, n_boot: int = 200, seed: int = 0, n_bins: int = 10):
    """Score several oracles on the same held-out realisations.

    ``forecasts`` maps a label (e.g. ``"s10"``) to a ForecastMap. Every
    forecast is checked against the evaluation ensemble before scoring, and
    all of them use the same bootstrap resamples.
    """
    if not forecasts:
        raise ExperimentError("no forecasts to compare")
    for fc in forecasts.values():
        fc.check_holdout(evaluation)
    timesteps = list(default_horizon(evaluation) if timesteps is None else timesteps)
    reports, overall = {}, {}
    for label, fc in forecasts.items():
        reports[label] = time_stratified_eval(evaluation, fc, metric_names, timesteps,
                                              n_bins=n_bins, n_boot=n_boot, seed=seed)
        overall[label] = {name: _safe(pooled_overall, evaluation, fc, name, timesteps, n_bins=n_bins)
                          for name in metric_names}
    return CrossLevelResult(reports, overall)


def ci_overlap_fraction(a_reports, b_reports, metric: str) -> float:
    """Share of timesteps at which the two forecasters' CIs intersect."""
    a = {r.stratum_lo: r for r in a_reports if r.metric == metric}
    b = {r.stratum_lo: r for r in b_reports if r.metric == metric}
    common = [t for t in a if t in b and a[t].ci is not None and b[t].ci is not None]
    if not common:
        raise M.UndefinedMetric("no timesteps with CIs for both forecasters")
    hits = sum(a[t].ci[0] <= b[t].ci[1] and b[t].ci[0] <= a[t].ci[1] for t in common)
    return hits / len(common)
