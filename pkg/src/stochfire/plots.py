"""Optional figure rendering (matplotlib, Agg backend). CSVs are the contract."""
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def sweep(levels, out):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for lv in levels:
        m = lv.macro
        t = np.arange(m.n_frames)
        ax1.plot(t, m.mean_unburnt, label=f"S={lv.s_level:g}")
        ax1.fill_between(t, m.mean_unburnt - np.sqrt(m.var_unburnt),
                         m.mean_unburnt + np.sqrt(m.var_unburnt), alpha=0.2)
        ax2.plot(t, m.var_burnt, label=f"S={lv.s_level:g}")
    ax1.set(xlabel="t", ylabel="unburnt trees")
    ax2.set(xlabel="t", ylabel="Var[Z_t]")
    ax1.legend(fontsize=7)
    return [_save(fig, out / "fig3_macro.png")]


def time_curves(rows, out, name="fig4_time_stratified"):
    series = defaultdict(list)
    for (key,), r in rows:
        if r.stratum_kind == "timestep" and r.value is not None:
            series[(r.metric, key)].append((r.stratum_lo, r.value))
    metrics = sorted({m for m, _ in series})
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        for (m, key), pts in sorted(series.items(), key=lambda kv: str(kv[0])):
            if m == metric:
                t, v = zip(*pts)
                ax.plot(t, v, label=str(key))
        ax.set(title=metric, xlabel="t")
    axes[0][0].legend(fontsize=7)
    return [_save(fig, out / f"{name}.png")]


def sd_vs_var(vs, out):
    fig, ax = plt.subplots(figsize=(5, 4))
    centres = 0.5 * (vs.edges[:-1] + vs.edges[1:])
    for name in vs.metrics:
        occ = vs.occupied(name)
        ax.plot(centres[occ], vs.sd[name][occ], marker="o", label=name)
    ax.set(xlabel="Var[Z_t]", ylabel="SD of metric")
    ax.legend(fontsize=7)
    return [_save(fig, out / "fig6_sd_vs_var.png")]


def calibration(cc, out):
    fig, ax = plt.subplots(figsize=(4, 4))
    occ = cc.curve.occupied
    ax.plot([0, 1], [0, 1], "k--", lw=1)
    ax.plot(cc.curve.mean_pred[occ], cc.curve.mean_obs[occ], marker="o", label=f"ECE={cc.ece:.4f}")
    ax.set(xlabel="mean forecast", ylabel="observed frequency")
    ax.legend()
    return [_save(fig, out / "fig7_calibration.png")]
