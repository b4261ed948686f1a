"""Experiment configurations and their on-disk outputs."""
from __future__ import annotations

import dataclasses
import json
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiments as X
from . import io
from . import metrics as M
from .config import ConfigError, SimConfig
from .ensemble import EnsembleSpec, run_ensemble, slevel_sweep, steady_state_histogram
from .engine import initial_condition
from .forecasters import constant_forecast, mismatched_oracle, oracle_forecast

KINDS = ("sweep", "time", "variance", "calibration", "dc", "cross_slevel")

_DEFAULT_METRICS = {
    "time": ("precision", "recall", "f1", "auc_pr", "auc_roc", "mse", "ece"),
    "variance": ("precision", "recall", "auc_pr", "mse", "ece"),
    "dc": X.DC_METRICS,
    "cross_slevel": ("auc_pr", "mse", "ece"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    sim: SimConfig = field(default_factory=SimConfig)
    n_sims: int = 200
    s_levels: tuple = (0, 5, 10, 15, 20)
    s_level: float = 20.0
    level_a: float = 10.0
    level_b: float = 20.0
    t_obs: int = 10
    t_end: int = 60
    sweep_length: int | None = None
    train_fraction: float = 0.5
    forecaster: str | None = None
    constant: float = 0.5
    metrics: tuple | None = None
    threshold: float = 0.5
    ece_bins: int = 10
    var_bins: int = 20
    hist_bins: int = 30
    dc_delta: int = 5
    dc_bins: int = 10
    n_boot: int = 100
    boot_seed: int = 0
    workers: int = 1
    plots: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; valid: {', '.join(KINDS)}")
        object.__setattr__(self, "s_levels", tuple(float(s) for s in self.s_levels))
        if not self.s_levels:
            raise ConfigError("s_levels must be non-empty")
        if self.metrics is not None:
            object.__setattr__(self, "metrics", tuple(self.metrics))
        if not 0 <= self.t_obs < self.t_end:
            raise ConfigError("need 0 <= t_obs < t_end")
        if self.n_sims < 2:
            raise ConfigError("n_sims must be >= 2")

    @property
    def metric_names(self):
        return self.metrics if self.metrics is not None else _DEFAULT_METRICS.get(self.kind, ())

    @property
    def eval_length(self):
        return self.t_end + 1

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["sim"] = self.sim.to_dict()
        d["s_levels"] = list(self.s_levels)
        d["metrics"] = list(self.metric_names)
        return d

    @classmethod
    def from_dict(cls, data: dict, kind: str | None = None):
        data = dict(data)
        if kind is not None:
            data["kind"] = kind
        if "kind" not in data:
            raise ConfigError("experiment config needs a 'kind'")
        sim = data.pop("sim", {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(sim=SimConfig.from_dict(sim) if isinstance(sim, dict) else sim, **data)


def load_experiment_config(path, kind=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig(kind=kind)
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read experiment config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data, kind)


def _ensemble(cfg: ExperimentConfig, s_level, initial):
    spec = EnsembleSpec(cfg.sim.replace(s_level=float(s_level)), cfg.n_sims, cfg.eval_length)
    return run_ensemble(spec, cfg.workers, initial)


def _forecaster(cfg: ExperimentConfig, training, evaluation, default="oracle"):
    kind = cfg.forecaster or default
    if kind == "oracle":
        return oracle_forecast(training, evaluation)
    if kind == "persistence":
        return X.Persistence(cfg.t_obs)
    if kind == "constant":
        return constant_forecast(cfg.constant, (evaluation.n_frames,) + evaluation.grid_shape)
    raise ConfigError(f"forecaster {kind!r} not valid for experiment {cfg.kind!r}")


def _run_sweep(cfg, out):
    length = cfg.sweep_length or cfg.sim.max_steps
    levels = slevel_sweep(EnsembleSpec(cfg.sim, cfg.n_sims, length), cfg.s_levels,
                          cfg.workers, keep_micro=False)
    macro_rows, hist_rows, ss_rows = [], [], []
    for lv in levels:
        m = lv.macro
        for t in range(m.n_frames):
            macro_rows.append([lv.s_level, t, m.mean_burnt[t], m.var_burnt[t],
                               m.mean_unburnt[t], m.var_unburnt[t]])
        h = steady_state_histogram(m, lv.steady_t, cfg.hist_bins)
        for i, c in enumerate(h.counts):
            hist_rows.append([lv.s_level, h.t, h.edges[i], h.edges[i + 1], c])
        ss_rows.append([lv.s_level, lv.steady_t, m.mean_burnt[lv.steady_t], lv.steady_sd,
                        m.mean_unburnt[lv.steady_t], float(np.sqrt(m.var_unburnt[lv.steady_t]))])
    files = [out / "fig3a_macro.csv", out / "fig3b_histogram.csv", out / "fig3_steady_state.csv"]
    io.write_csv(files[0], ["s_level", "t", "mean_burnt", "var_burnt", "mean_unburnt", "var_unburnt"],
                 macro_rows)
    io.write_csv(files[1], ["s_level", "t", "bin_lo", "bin_hi", "count"], hist_rows)
    io.write_csv(files[2], ["s_level", "steady_t", "mean_burnt", "sd_burnt", "mean_unburnt",
                            "sd_unburnt"], ss_rows)
    if cfg.plots:
        from . import plots
        files += plots.sweep(levels, out)
    return files


def _run_time(cfg, out):
    initial = initial_condition(cfg.sim)
    horizon = range(cfg.t_obs + 1, cfg.t_end + 1)
    rows = []
    for s in cfg.s_levels:
        ens = _ensemble(cfg, s, initial)
        tr, ev = ens.split(cfg.train_fraction)
        fc = _forecaster(cfg, tr, ev)
        reps = X.time_stratified_eval(ev, fc, cfg.metric_names, horizon, cfg.threshold,
                                      cfg.ece_bins, cfg.n_boot, cfg.boot_seed)
        rows += [((s,), r) for r in reps]
        if hasattr(fc, "values"):
            for name in cfg.metric_names:
                v = X._safe(X.pooled_overall, ev, fc, name, horizon, cfg.threshold, cfg.ece_bins)
                rows.append(((s,), M.MetricReport(name, v, len(ev) if v is not None else 0,
                                                    "overall", cfg.t_obs + 1, cfg.t_end)))
        del ens
    path = out / "fig4_time_stratified.csv"
    io.write_reports(path, rows, ["s_level"])
    files = [path]
    if cfg.plots:
        from . import plots
        files += plots.time_curves(rows, out)
    return files


def _run_variance(cfg, out):
    ens = _ensemble(cfg, cfg.s_level, initial_condition(cfg.sim))
    tr, ev = ens.split(cfg.train_fraction)
    fc = _forecaster(cfg, tr, ev)
    vs = X.variance_sensitivity(ev, fc, cfg.metric_names, cfg.var_bins,
                                range(cfg.t_obs + 1, cfg.t_end + 1), cfg.threshold, cfg.ece_bins)
    rows = []
    for name in vs.metrics:
        for b in range(len(vs.edges) - 1):
            rows.append([vs.edges[b], vs.edges[b + 1], name, vs.mean[name][b], vs.sd[name][b],
                         vs.support[name][b]])
    f1 = out / "fig6_sd_vs_var.csv"
    io.write_csv(f1, ["bin_lo", "bin_hi", "metric", "mean", "sd", "support"], rows)
    f2 = out / "fig6_frames.csv"
    cols = ["sim_index", "t", "var", "bin", *vs.metrics]
    io.write_csv(f2, cols, [[r[c] for c in cols] for r in vs.records])
    files = [f1, f2]
    if cfg.plots:
        from . import plots
        files += plots.sd_vs_var(vs, out)
    return files


def _run_calibration(cfg, out):
    ens = _ensemble(cfg, cfg.s_level, initial_condition(cfg.sim))
    tr, ev = ens.split(cfg.train_fraction)
    cc = X.oracle_calibration_check(tr, ev, range(cfg.t_obs + 1, cfg.t_end + 1), cfg.ece_bins)
    f1, f2, f3 = out / "fig7_calibration.csv", out / "fig7_ece_by_t.csv", out / "fig5_scatter.csv"
    io.write_calibration_csv(f1, cc.curve)
    io.write_csv(f2, ["t", "ece"], [[t, v] for t, v in cc.ece_by_t.items()] + [["overall", cc.ece]])
    io.write_csv(f3, ["forecast", "statistic", "cells"], cc.scatter.tolist())
    files = [f1, f2, f3]
    if cfg.plots:
        from . import plots
        files += plots.calibration(cc, out)
    return files


def _run_dc(cfg, out):
    ens = _ensemble(cfg, cfg.s_level, initial_condition(cfg.sim))
    tr, ev = ens.split(cfg.train_fraction)
    fc = _forecaster(cfg, tr, ev, default="persistence")
    pairs = X.dc_pairs(ev, fc, cfg.dc_delta, range(cfg.t_obs, cfg.t_end - cfg.dc_delta + 1))
    reports, scored = X.dc_stratified_eval(pairs, cfg.metric_names, cfg.dc_bins, cfg.threshold,
                                           cfg.n_boot, cfg.boot_seed)
    f1, f2 = out / "table3_dc_stratified.csv", out / "table3_pairs.csv"
    io.write_reports(f1, reports)
    io.write_csv(f2, ["sim_index", "t", "dc", *cfg.metric_names],
                 [[p.sim_index, p.t, p.dc, *(p.values[m] for m in cfg.metric_names)] for p in scored])
    return [f1, f2]


def _run_cross(cfg, out):
    initial = initial_condition(cfg.sim)
    ens_b = _ensemble(cfg, cfg.level_b, initial)
    tr_b, ev_b = ens_b.split(cfg.train_fraction)
    ens_a = _ensemble(cfg, cfg.level_a, initial)
    tr_a, _ = ens_a.split(cfg.train_fraction)
    label_a, label_b = f"s{cfg.level_a:g}", f"s{cfg.level_b:g}"
    forecasts = {label_b: oracle_forecast(tr_b, ev_b)}
    forecasts[label_a if label_a != label_b else label_a + "_a"] = mismatched_oracle(tr_a, ev_b)
    res = X.cross_slevel_eval(forecasts, ev_b, cfg.metric_names,
                              range(cfg.t_obs + 1, cfg.t_end + 1), cfg.n_boot, cfg.boot_seed,
                              cfg.ece_bins)
    rows = []
    for label, reps in res.reports.items():
        rows += [((label,), r) for r in reps]
        for name, v in res.overall[label].items():
            rows.append(((label,), M.MetricReport(name, v, len(ev_b) if v is not None else 0,
                                                    "overall", cfg.t_obs + 1, cfg.t_end)))
    path = out / "fig10_cross_slevel.csv"
    io.write_reports(path, rows, ["forecaster"])
    files = [path]
    if cfg.plots:
        from . import plots
        files += plots.time_curves(rows, out, name="fig10_cross_slevel")
    return files


_RUNNERS = {"sweep": _run_sweep, "time": _run_time, "variance": _run_variance,
            "calibration": _run_calibration, "dc": _run_dc, "cross_slevel": _run_cross}


def run_experiment(cfg: ExperimentConfig, out_dir) -> list:
    """Run one study into ``out_dir``; the manifest is written even on failure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = io.now_iso()
    try:
        files = _RUNNERS[cfg.kind](cfg, out)
    except Exception as exc:
        io.write_manifest(out, f"experiment {cfg.kind}", cfg.to_dict(), status="failed",
                          error={"type": type(exc).__name__, "message": str(exc),
                                 "traceback": traceback.format_exc()},
                          started=started)
        raise
    io.write_manifest(out, f"experiment {cfg.kind}", cfg.to_dict(), outputs=files,
                      extra={"master_seed": cfg.sim.master_seed}, started=started)
    return files
