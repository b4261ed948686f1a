"""Command-line entry point: ``stochfire {simulate,stats,evaluate,experiment}``.

Exit codes: 0 success, 1 usage, 2 input/format, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from . import experiments as X
from . import metrics as M
from .config import ConfigError, SimConfig, load_config
from .engine import SeedingError
from .ensemble import (Ensemble, EnsembleError, EnsembleSpec, macro_series, micro_stat_map,
                       run_ensemble, steady_state_histogram, steady_state_time)
from .forecasters import ContaminationError, ForecastInputError, ForecastMap, initial_digest
from .runner import KINDS, load_experiment_config, run_experiment

log = logging.getLogger("stochfire")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InvariantViolation(AssertionError):
    pass


_INPUT_ERRORS = (ConfigError, io.FormatError, EnsembleError, SeedingError, ForecastInputError,
                 ContaminationError, M.MetricInputError, X.ExperimentError, FileNotFoundError,
                 NotADirectoryError, PermissionError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _prepare_out(out, force):
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise UsageError(f"output directory {out} is not empty; pass --force to overwrite")
        for p in out.iterdir():
            if p.is_dir():
                shutil.rmtree(p)
            else:
                p.unlink()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _trace_files(trace_dir):
    d = Path(trace_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"trace directory {d} does not exist")
    files = sorted(d.glob("*.ffca"))
    if not files:
        raise EnsembleError(f"no .ffca trace files in {d}")
    return files


def load_trace_dir(trace_dir) -> Ensemble:
    """Read every trace in a directory, refusing mixed configurations."""
    files = _trace_files(trace_dir)
    ref = None
    traces = []
    for f in files:
        hdr = io.read_trace_header(f)
        key = {k: v for k, v in hdr.items() if k != "sim_index"}
        if ref is None:
            ref, ref_file = key, f
        elif key != ref:
            diff = sorted(k for k in key if key[k] != ref[k])
            raise EnsembleError(f"{f.name} differs from {ref_file.name} in {', '.join(diff)}; "
                                "one directory must hold one configuration")
        traces.append(io.read_trace(f))
    return Ensemble.from_traces(traces)


def cmd_simulate(args):
    config = load_config(args.config) if args.config else SimConfig()
    changes = {}
    if args.s_level is not None:
        changes["s_level"] = args.s_level
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if changes:
        config = config.replace(**changes)
    if args.sims < 1 or args.first_index < 0:
        raise UsageError("--sims must be >= 1 and --first-index >= 0")
    length = args.length or config.max_steps
    out = _prepare_out(args.out, args.force)
    written = []
    started = io.now_iso()
    try:
        chunk = 64
        for first in range(0, args.sims, chunk):
            n = min(chunk, args.sims - first)
            spec = EnsembleSpec(config, n, length, args.first_index + first)
            ens = run_ensemble(spec, args.workers)
            for tr in ens.traces:
                path = out / f"trace_{tr.sim_index:06d}.ffca"
                io.write_trace(path, tr)
                written.append(path)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    io.write_manifest(out, "simulate", config.to_dict(), outputs=written, started=started,
                      extra={"master_seed": config.master_seed, "n_sims": args.sims,
                             "first_index": args.first_index,
                             "trace_length": length, "workers": args.workers})
    print(f"wrote {len(written)} traces to {out}")


def cmd_stats(args):
    ens = load_trace_dir(args.trace_dir)
    out = _prepare_out(args.out or Path(args.trace_dir) / "stats", args.force)
    stat = micro_stat_map(ens, smoothing=args.smoothing)
    series = macro_series(ens, allow_single=True)
    if not np.array_equal(series.burnt + series.unburnt,
                          np.full_like(series.burnt, series.initial_trees)):
        raise InvariantViolation("burnt + unburnt trees differs from the initial tree count")
    t = args.t if args.t is not None else steady_state_time(series)
    hist = steady_state_histogram(series, t, args.bins)
    files = [out / "stats.ffst", out / "macro.csv", out / "histogram.csv"]
    io.write_stat_map(files[0], stat.values)
    io.write_macro_csv(files[1], series)
    io.write_histogram_csv(files[2], hist)
    io.write_manifest(out, "stats", ens.config.to_dict(), outputs=files,
                      inputs=_trace_files(args.trace_dir),
                      extra={"sim_indices": ens.sim_indices.tolist(), "s_level": ens.config.s_level,
                             "initial_digest": initial_digest(ens), "histogram_t": int(t),
                             "n_sims": len(ens)})
    print(f"stats for {len(ens)} traces written to {out}")


def _load_forecast(path) -> ForecastMap:
    values = io.read_stat_map(path)
    manifest = Path(path).parent / "manifest.json"
    training, s_level, initial = frozenset(), None, None
    if manifest.exists():
        doc = io.read_manifest(manifest)
        training = frozenset(doc.get("sim_indices", []))
        s_level = doc.get("s_level")
        initial = doc.get("initial_digest")
    return ForecastMap(values, "file", training, s_level, initial)


def cmd_evaluate(args):
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    bad = [m for m in metric_names if m not in M.METRICS]
    if bad or not metric_names:
        raise UsageError(f"unknown metric(s) {bad}; valid names: {', '.join(M.METRICS)}")
    ens = load_trace_dir(args.trace_dir)
    fc = _load_forecast(args.forecast)
    fc.check_holdout(ens)
    out = _prepare_out(args.out, args.force)
    t_end = ens.n_frames - 1 if args.t_end is None else args.t_end
    horizon = range(args.t_obs + 1, t_end + 1)
    if len(horizon) == 0 or t_end >= ens.n_frames:
        raise ForecastInputError(f"horizon ({args.t_obs}, {t_end}] does not fit {ens.n_frames} frames")
    files = []
    if args.stratify == "time":
        reps = X.time_stratified_eval(ens, fc, metric_names, horizon, args.threshold, args.bins,
                                      args.n_boot)
        for name in metric_names:
            v = X._safe(X.pooled_overall, ens, fc, name, horizon, args.threshold, args.bins)
            reps.append(M.MetricReport(name, v, len(ens) if v is not None else 0, "overall",
                                       horizon.start, horizon.stop - 1))
        files.append(out / "report.csv")
        io.write_reports(files[-1], reps)
    elif args.stratify == "variance":
        vs = X.variance_sensitivity(ens, fc, metric_names, args.var_bins, horizon, args.threshold,
                                    args.bins)
        reps = []
        for name in metric_names:
            for b in range(len(vs.edges) - 1):
                v = None if vs.support[name][b] == 0 else float(vs.mean[name][b])
                reps.append(M.MetricReport(name, v, int(vs.support[name][b]), "variance",
                                           vs.edges[b], vs.edges[b + 1]))
        files.append(out / "report.csv")
        io.write_reports(files[-1], reps)
        files.append(out / "sd_vs_var.csv")
        io.write_csv(files[-1], ["bin_lo", "bin_hi", "metric", "mean", "sd", "support"],
                     [[vs.edges[b], vs.edges[b + 1], n, vs.mean[n][b], vs.sd[n][b], vs.support[n][b]]
                      for n in metric_names for b in range(len(vs.edges) - 1)])
    else:
        pairs = X.dc_pairs(ens, fc, args.delta, range(args.t_obs, t_end - args.delta + 1))
        reps, scored = X.dc_stratified_eval(pairs, metric_names, 10, args.threshold, args.n_boot)
        files.append(out / "report.csv")
        io.write_reports(files[-1], reps)
        files.append(out / "pairs.csv")
        io.write_csv(files[-1], ["sim_index", "t", "dc", *metric_names],
                     [[p.sim_index, p.t, p.dc, *(p.values[m] for m in metric_names)] for p in scored])
    io.write_manifest(out, f"evaluate --stratify {args.stratify}",
                      {"metrics": metric_names, "threshold": args.threshold, "t_obs": args.t_obs,
                       "t_end": t_end, "delta": args.delta, "bins": args.bins},
                      outputs=files, inputs=[Path(args.forecast)])
    print(f"evaluation written to {out}")


def cmd_experiment(args):
    cfg = load_experiment_config(args.config, args.kind)
    if args.workers is not None or args.plots:
        cfg = dataclasses.replace(cfg, workers=args.workers or cfg.workers,
                                  plots=args.plots or cfg.plots)
    out = _prepare_out(args.out, args.force)
    files = run_experiment(cfg, out)
    print(f"experiment {cfg.kind}: {len(files)} files in {out}")


def build_parser():
    p = _Parser(prog="stochfire", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stochfire {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate an ensemble of FFCA trace files")
    s.add_argument("config", nargs="?", help="SimConfig JSON (defaults if omitted)")
    s.add_argument("--sims", type=int, default=10, help="number of simulations")
    s.add_argument("--s-level", type=float, help="override the config's S-Level (0-100)")
    s.add_argument("--seed", type=int, help="override master_seed")
    s.add_argument("--first-index", type=int, default=0,
                   help="sim index of the first trace; use disjoint ranges for train/test sets")
    s.add_argument("--length", type=int, help="padded frames per trace (default max_steps)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, default=1, help="simulation threads")
    s.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("stats", help="burn-probability map, macro CSV and histogram from traces")
    s.add_argument("trace_dir")
    s.add_argument("--out", help="output directory (default TRACE_DIR/stats)")
    s.add_argument("--bins", type=int, default=30, help="histogram bins")
    s.add_argument("--t", type=int, help="histogram timestep (default: steady state)")
    s.add_argument("--smoothing", action="store_true", help="add-one smoothed probabilities")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("evaluate", help="score an FFST forecast against traces")
    s.add_argument("forecast", help="FFST forecast file")
    s.add_argument("trace_dir")
    s.add_argument("--metrics", default="mse", help=f"comma list from: {', '.join(M.METRICS)}")
    s.add_argument("--stratify", choices=("time", "variance", "dc"), default="time")
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=0.5, help="binarisation threshold (strict >)")
    s.add_argument("--bins", type=int, default=10, help="ECE bins")
    s.add_argument("--var-bins", type=int, default=20)
    s.add_argument("--delta", type=int, default=5, help="frame gap for --stratify dc")
    s.add_argument("--t-obs", type=int, default=0, help="last observed frame; scoring starts after it")
    s.add_argument("--t-end", type=int, help="last scored frame (default: last frame)")
    s.add_argument("--n-boot", type=int, default=0, help="bootstrap resamples for CIs")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("experiment", help="run one study end to end")
    s.add_argument("kind", choices=KINDS)
    s.add_argument("config", nargs="?", help="experiment JSON (defaults if omitted)")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--plots", action="store_true", help="also render PNG figures")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"stochfire: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INPUT_ERRORS as exc:
        print(f"stochfire: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantViolation, AssertionError) as exc:
        print(f"stochfire: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
