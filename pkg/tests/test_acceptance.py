"""Acceptance criteria 1-12, each checked at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL ...`` line; the lines are also
collected into the terminal summary. The heavy ensembles use the shipped
default configuration (64x64, d=0.7, centre seed).
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from stochfire import experiments as X
from stochfire import io
from stochfire import metrics as M
from stochfire.cli import main as cli_main
from stochfire.config import SimConfig
from stochfire.ensemble import (EnsembleSpec, MacroSeries, macro_series, micro_stat_map, run_ensemble,
                                slevel_sweep)
from stochfire.forecasters import mismatched_oracle, oracle_forecast

from conftest import CRITERIA_LINES

DEFAULT = SimConfig()
LEVELS = (0, 5, 10, 15, 20)


@pytest.fixture
def verdict(request):
    """Record and print a criterion outcome, then assert it."""
    def check(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        request.config.stash.setdefault(CRITERIA_LINES, []).append(line)
        assert ok, line
    return check


# -- 1 -----------------------------------------------------------------------

def test_c01_determinism_and_collapse(tmp_path, verdict):
    t0 = time.perf_counter()
    ens = run_ensemble(EnsembleSpec(DEFAULT.replace(s_level=0.0), 50))
    identical = bool(np.all(ens.states == ens.states[0]))
    zero_var = bool(np.all(macro_series(ens).var_burnt == 0))
    v = micro_stat_map(ens).values
    binary = bool(np.all((v == 0) | (v == 1)))
    digests = []
    for w in (1, 8):
        out = tmp_path / f"w{w}"
        rc = cli_main(["simulate", "--sims", "50", "--s-level", "0", "--workers", str(w),
                       "--out", str(out)])
        assert rc == 0
        digests.append(json.loads((out / "manifest.json").read_text())["outputs"])
    same = digests[0] == digests[1]
    elapsed = time.perf_counter() - t0
    verdict(1, identical and zero_var and binary and same and elapsed < 10,
            f"identical={identical} var0={zero_var} binary_map={binary} "
            f"workers1==8={same} runtime={elapsed:.1f}s (<10s)")


# -- 2 and 3 -----------------------------------------------------------------

@pytest.fixture(scope="module")
def level_checks():
    """Linearity error and conservation per S-Level on 200-sim ensembles."""
    out = {}
    for s in LEVELS:
        ens = run_ensemble(EnsembleSpec(DEFAULT.replace(s_level=float(s)), 200))
        m = macro_series(ens)
        stat = micro_stat_map(ens).values
        err = float(np.max(np.abs(m.mean_burnt - stat.reshape(stat.shape[0], -1).sum(axis=1))))
        trees0 = int(np.count_nonzero(ens.states[0, 0] == 1) + np.count_nonzero(ens.states[0, 0] >= 2))
        conserved = bool(np.all(m.burnt + m.unburnt == trees0))
        out[s] = (err, conserved)
        del ens
    return out


def test_c02_linearity(level_checks, verdict):
    tol = 1e-9 * 4096
    worst = max(e for e, _ in level_checks.values())
    verdict(2, worst <= tol, f"max |E[Z_t] - sum(map_t)| = {worst:.2e} over S in {LEVELS} (tol {tol:.1e})")


def test_c03_conservation(level_checks, verdict):
    ok = all(c for _, c in level_checks.values())
    verdict(3, ok, f"burnt + unburnt == initial trees in every frame of 5x200 traces: {ok}")


# -- 4 -----------------------------------------------------------------------

def test_c04_brier_identity(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100_000):
        n = int(rng.integers(1, 40))
        levels = int(rng.integers(1, 12))
        f = rng.integers(0, levels + 1, n) / levels if rng.random() < 0.7 else rng.random(n)
        o = (rng.random(n) < rng.random()).astype(float)
        d = M.brier_decomposition(f, o)
        worst = max(worst, abs(d.reliability + d.conditional_variance - M.mse(f, o)))
    verdict(4, worst <= 1e-12, f"max |rel + cond_var - MSE| = {worst:.2e} over 1e5 cases (tol 1e-12)")


# -- 5 -----------------------------------------------------------------------

def brute_roc(f, o):
    pos, neg = f[o == 1], f[o == 0]
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return int(2 * gt + eq) / (2 * pos.size * neg.size)


def brute_ap(f, o):
    n_pos = int(o.sum())
    terms, prev = [], 0
    for thr in np.unique(f)[::-1]:
        sel = f >= thr
        tp = int(np.count_nonzero(sel & (o == 1)))
        fp = int(np.count_nonzero(sel & (o == 0)))
        terms.append((tp - prev) * (tp / (tp + fp)))
        prev = tp
    return math.fsum(terms) / n_pos


def test_c05_ranking_oracles(verdict):
    rng = np.random.default_rng(7)
    bad_roc = bad_ap = 0
    cases = 0
    while cases < 1000:
        n = int(rng.integers(2, 1001))
        levels = int(rng.choice([2, 5, 20, 1000, 10**9]))
        f = rng.integers(0, levels + 1, n) / levels
        o = (rng.random(n) < rng.random()).astype(np.int64)
        if o.sum() in (0, n):
            continue
        cases += 1
        bad_roc += M.auc_roc(f, o) != brute_roc(f, o)
        bad_ap += M.auc_pr(f, o) != brute_ap(f, o)
    verdict(5, bad_roc == 0 and bad_ap == 0,
            f"mismatches over {cases} inputs: auc_roc={bad_roc} auc_pr={bad_ap} (exact equality)")


# -- 6 -----------------------------------------------------------------------

def test_c06_hand_values(verdict):
    got = {
        "AP": (M.auc_pr([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]), 5 / 6),
        "AUC-ROC": (M.auc_roc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]), 0.75),
        "ECE": (M.ece([0.9, 0.9, 0.1, 0.1], [1, 0, 0, 0], 10), 0.25),
    }
    d = M.brier_decomposition([0.9, 0.9], [1, 0])
    got.update({"reliability": (d.reliability, 0.16), "cond_var": (d.conditional_variance, 0.25),
                "MSE": (d.mse, 0.41)})
    got["variance"] = (MacroSeries(np.array([[10], [20]]), np.zeros((2, 1)), 0, 1).var_burnt[0], 25.0)
    # decimal inputs such as 0.9 are not representable, so "exact" means float64 rounding
    ok = all(abs(v - e) <= 1e-15 * max(1.0, abs(e)) for v, e in got.values())
    verdict(6, ok, ", ".join(f"{k}={v:.16g}" for k, (v, _) in got.items()))


# -- 7 -----------------------------------------------------------------------

def test_c07_macro_variance_shape(verdict):
    t0 = time.perf_counter()
    levels = list(range(0, 55, 5))
    sweep = slevel_sweep(EnsembleSpec(DEFAULT, 200), levels, keep_micro=False)
    sd = np.array([lv.steady_sd for lv in sweep])
    peak = int(np.argmax(sd))
    elapsed = time.perf_counter() - t0
    ok = (sd[0] == 0 and 0 < peak < len(levels) - 1 and sd[-1] < sd[peak] and elapsed < 300)
    verdict(7, ok, f"steady SD by S-Level {dict(zip(levels, np.round(sd, 1).tolist()))}; "
                   f"peak at {levels[peak]}; runtime {elapsed:.0f}s (<300s)")


# -- 8 -----------------------------------------------------------------------

def test_c08_metric_sensitivity(verdict):
    ens = run_ensemble(EnsembleSpec(DEFAULT.replace(s_level=20.0), 200, 61))
    tr, ev = ens.split()
    vs = X.variance_sensitivity(ev, oracle_forecast(tr, ev), ["recall", "auc_pr", "mse"], 20)
    rho_r, rho_ap = vs.spearman("recall"), vs.spearman("auc_pr")
    top = vs.top_bin("recall")
    sd_mse, sd_rec = vs.sd["mse"][top], vs.sd["recall"][top]
    ok = rho_r > 0.8 and rho_ap > 0.8 and sd_mse < sd_rec
    verdict(8, ok, f"spearman recall={rho_r:.3f} auc_pr={rho_ap:.3f} (>0.8); top bin "
                   f"SD(MSE)={sd_mse:.4f} < SD(recall)={sd_rec:.4f}")


# -- 9 and 10 ----------------------------------------------------------------

@pytest.fixture(scope="module")
def s20_split():
    ens = run_ensemble(EnsembleSpec(DEFAULT.replace(s_level=20.0), 1000, 61))
    return ens.split()


def test_c09_oracle_calibration(s20_split, verdict):
    tr, ev = s20_split
    horizon = range(11, 61)
    # the threshold first has to hold for outcomes drawn from the forecast itself
    fc = oracle_forecast(tr, ev)
    p = np.concatenate([fc.values[t].ravel() for t in horizon])
    k = np.random.default_rng(0).binomial(500, p).astype(float)
    synth = M.ece(np.concatenate([p, p]), np.repeat([1.0, 0.0], p.size), 10,
                  np.concatenate([k, 500 - k]))
    cc = X.oracle_calibration_check(tr, ev, horizon)
    per_t = max(cc.ece_by_t.values())
    gap = cc.curve.max_gap(1000)
    ok = synth < 0.02 and cc.ece < 0.02 and per_t < 0.05 and gap < 0.05
    verdict(9, ok, f"synthetic Bernoulli ECE={synth:.4f}; oracle ECE={cc.ece:.4f} (<0.02), "
                   f"max per-t ECE={per_t:.4f} (<0.05), max bin gap (N>=1000)={gap:.4f} (<0.05)")


def test_c10_cross_slevel(s20_split, verdict):
    tr, ev = s20_split
    ens10 = run_ensemble(EnsembleSpec(DEFAULT.replace(s_level=10.0), 1000, 61))
    tr10, _ = ens10.split()
    res = X.cross_slevel_eval({"s20": oracle_forecast(tr, ev), "s10": mismatched_oracle(tr10, ev)},
                              ev, n_boot=100)
    e20, e10 = res.overall["s20"]["ece"], res.overall["s10"]["ece"]
    overlap = X.ci_overlap_fraction(res.reports["s20"], res.reports["s10"], "auc_pr")
    ok = e10 > 2 * e20 and overlap >= 0.8
    verdict(10, ok, f"ECE mismatched={e10:.4f} vs matched={e20:.4f} (ratio {e10 / e20:.1f} > 2); "
                    f"AUC-PR CI overlap {overlap:.0%} of timesteps (>=80%)")


# -- 11 ----------------------------------------------------------------------

def test_c11_time_stratified_trends(verdict):
    rec, ap, ece = [], [], []
    for s in LEVELS:
        ens = run_ensemble(EnsembleSpec(DEFAULT.replace(s_level=float(s)), 200, 61))
        tr, ev = ens.split()
        fc = oracle_forecast(tr, ev)
        r = {x.metric: x.value for x in X.time_stratified_eval(ev, fc, ["recall", "auc_pr"], [60])}
        rec.append(r["recall"])
        ap.append(r["auc_pr"])
        ece.append(max(x.value for x in X.time_stratified_eval(ev, fc, ["ece"], range(11, 61))))
    rho_r = sps.spearmanr(LEVELS, rec).statistic
    rho_ap = sps.spearmanr(LEVELS, ap).statistic
    # rho = -1 with five distinct values means strictly decreasing; compare ranks, not floats
    ok = bool(np.all(np.diff(rec) < 0) and np.all(np.diff(ap) < 0)) and max(ece) < 0.05
    verdict(11, ok, f"t=60 recall={np.round(rec, 3).tolist()} (rho {rho_r:.6f}), "
                    f"auc_pr={np.round(ap, 3).tolist()} (rho {rho_ap:.6f}); "
                    f"max matched ECE over t in [11,60] = {max(ece):.4f} (<0.05)")


# -- 12 ----------------------------------------------------------------------

def test_c12_dc_table(tmp_path, verdict):
    rng = np.random.default_rng(12)
    pairs = []
    for k in range(300):
        a = rng.random((16, 16)) < rng.uniform(0.05, 0.5)
        grow = rng.random((16, 16)) < rng.uniform(0.0, 0.6) ** 2
        b = a | grow
        f = np.clip(b * rng.uniform(0.3, 1.0) + rng.normal(0, 0.2, b.shape), 0, 1)
        pairs.append((a, b, f, k // 5, (k % 5) * 5))
    reports, scored = X.dc_stratified_eval(pairs, X.DC_METRICS, n_boot=200)
    io.write_reports(tmp_path / "table.csv", reports)
    io.write_csv(tmp_path / "pairs.csv", ["sim_index", "t", "dc", *X.DC_METRICS],
                 [[p.sim_index, p.t, p.dc, *(p.values[m] for m in X.DC_METRICS)] for p in scored])
    table = io.read_csv(tmp_path / "table.csv")
    raw = io.read_csv(tmp_path / "pairs.csv")
    dc = np.array([float(r["dc"]) for r in raw])
    bins = M.bin_index(dc, 10)
    problems = []
    for name in X.DC_METRICS:
        rows = [r for r in table if r["metric"] == name]
        kinds = [r["stratum_kind"] for r in rows]
        if kinds != ["dc"] * 10 + ["overall"]:
            problems.append(f"{name}: strata {kinds}")
        if sum(int(r["support"]) for r in rows[:10]) != len(pairs) or int(rows[10]["support"]) != len(pairs):
            problems.append(f"{name}: supports")
        for b, r in enumerate(rows):
            sel = np.ones(len(raw), bool) if b == 10 else bins == b
            vals = [float(x[name]) for x, s in zip(raw, sel) if s and x[name] != ""]
            if int(r["support"]) < 2 and (r["ci_lo"] or r["ci_hi"]):
                problems.append(f"{name} bin {b}: CI with support {r['support']}")
            if vals and abs(float(r["value"]) - float(np.mean(vals))) > 1e-12:
                problems.append(f"{name} bin {b}: value not recomputable")
            if not vals and r["value"] != "":
                problems.append(f"{name} bin {b}: value without support")
    supports = [int(r["support"]) for r in table if r["metric"] == "recall"][:10]
    verdict(12, not problems, f"10 bins + Overall per metric, supports {supports} sum "
                              f"{sum(supports)} == {len(pairs)} pairs; " + ("; ".join(problems) or "all rows recomputed from pairs.csv"))
