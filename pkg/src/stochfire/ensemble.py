"""Monte-Carlo ensembles sharing one initial condition, and their statistics.

An ensemble (the empirical stochastic process) holds ``n_sims`` realisations
started from the same forest layout and fire seed. From it we estimate

* the per-cell burn probability map over time (the statistic ground truth);
* the grid-level macro variable: per-timestep burnt count and unburnt-tree
  count, with their across-realisation mean and population variance.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import SimConfig
from .engine import GridFrame, SimulationTrace, initial_condition, run_simulation


class EnsembleError(ValueError):
    """Ensemble too small or inconsistent for the requested statistic."""


@dataclass(frozen=True)
class EnsembleSpec:
    config: SimConfig
    n_sims: int = 1000
    length: int | None = None
    first_index: int = 0

    def __post_init__(self):
        if self.n_sims < 1:
            raise EnsembleError("n_sims must be >= 1")
        if self.length is not None and self.length < 1:
            raise EnsembleError("length must be >= 1")

    @property
    def trace_length(self) -> int:
        return self.config.max_steps if self.length is None else self.length


@dataclass
class Ensemble:
    """Padded realisations stacked as ``states[n, t, y, x]`` (uint8)."""

    config: SimConfig
    states: np.ndarray
    sim_indices: np.ndarray
    terminated_at: list = field(default_factory=list)

    def __post_init__(self):
        self.sim_indices = np.asarray(self.sim_indices, dtype=np.int64)
        if self.states.ndim != 4 or self.states.shape[0] != len(self.sim_indices):
            raise EnsembleError("states must be (n_sims, T, H, W) matching sim_indices")
        if not self.terminated_at:
            self.terminated_at = [None] * len(self.sim_indices)
        if len(self) and not np.all(self.states[:, 0] == self.states[0, 0]):
            raise EnsembleError("ensemble members do not share frame 0")

    def __len__(self):
        return self.states.shape[0]

    @property
    def n_frames(self) -> int:
        return self.states.shape[1]

    @property
    def grid_shape(self):
        return self.states.shape[2:]

    @property
    def initial_trees(self) -> int:
        return int(np.count_nonzero(self.states[0, 0] == kernels.TREE))

    @property
    def traces(self):
        return [SimulationTrace(self.config, int(i), self.states[k], self.terminated_at[k])
                for k, i in enumerate(self.sim_indices)]

    def burnt(self, t=None) -> np.ndarray:
        """Burnt masks as bool, ``(n, T, H, W)`` or ``(n, H, W)`` at ``t``."""
        s = self.states if t is None else self.states[:, t]
        return s >= kernels.FIRE

    def subset(self, rows) -> "Ensemble":
        rows = np.asarray(rows)
        return Ensemble(self.config, self.states[rows], self.sim_indices[rows],
                        [self.terminated_at[k] for k in np.atleast_1d(rows)])

    def split(self, train_fraction: float = 0.5):
        """Disjoint ``(training, evaluation)`` halves, in sim-index order."""
        if len(self) < 2:
            raise EnsembleError("need at least two realisations to split")
        n_train = int(round(len(self) * train_fraction))
        n_train = min(max(n_train, 1), len(self) - 1)
        order = np.argsort(self.sim_indices, kind="stable")
        return self.subset(order[:n_train]), self.subset(order[n_train:])

    @classmethod
    def from_traces(cls, traces) -> "Ensemble":
        traces = list(traces)
        if not traces:
            raise EnsembleError("empty ensemble")
        lengths = {len(t) for t in traces}
        if len(lengths) != 1:
            raise EnsembleError(f"traces have unequal lengths {sorted(lengths)}")
        return cls(traces[0].config, np.stack([t.states for t in traces]),
                   [t.sim_index for t in traces], [t.terminated_at for t in traces])


def run_ensemble(spec: EnsembleSpec, workers: int = 1, initial: GridFrame | None = None,
                 accelerated=None) -> Ensemble:
    """Generate ``spec.n_sims`` padded realisations from one initial condition.

    Output is independent of ``workers``: each simulation owns its random
    stream and writes into its own slot.
    """
    config = spec.config
    if initial is None:
        initial = initial_condition(config)
    T = spec.trace_length
    indices = np.arange(spec.first_index, spec.first_index + spec.n_sims, dtype=np.int64)
    states = np.empty((spec.n_sims, T, config.height, config.width), dtype=np.uint8)
    terminated = [None] * spec.n_sims

    def one(k):
        tr = run_simulation(config, int(indices[k]), length=T, initial=initial,
                            accelerated=accelerated)
        states[k] = tr.states
        terminated[k] = tr.terminated_at

    if workers <= 1:
        for k in range(spec.n_sims):
            one(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(spec.n_sims)))
    return Ensemble(config, states, indices, terminated)


@dataclass
class MicroStatMap:
    """Per-cell burn probability ``values[t, y, x]`` with its burn counts."""

    values: np.ndarray
    counts: np.ndarray
    n_sims: int
    smoothed: bool = False

    @property
    def shape(self):
        return self.values.shape


def micro_stat_map(ensemble: Ensemble, smoothing: bool = False) -> MicroStatMap:
    """Burn frequency of each cell at each timestep.

    With ``smoothing`` the add-one estimate ``(k + 1) / (n + 2)`` is used so
    no entry is exactly 0 or 1.
    """
    n = len(ensemble)
    if n == 0:
        raise EnsembleError("empty ensemble")
    counts = np.zeros(ensemble.states.shape[1:], dtype=np.int64)
    for k in range(n):
        counts += ensemble.states[k] >= kernels.FIRE
    if smoothing:
        values = (counts + 1.0) / (n + 2.0)
    else:
        values = counts / float(n)
    return MicroStatMap(values, counts, n, smoothing)


@dataclass
class MacroSeries:
    """Across-realisation moments of the macro variable at each timestep.

    ``burnt`` and ``unburnt`` hold the raw per-simulation samples with shape
    ``(n_sims, T)``. Variances divide by ``n_sims``.
    """

    burnt: np.ndarray
    unburnt: np.ndarray
    initial_trees: int
    grid_cells: int

    @property
    def n_sims(self) -> int:
        return self.burnt.shape[0]

    @property
    def n_frames(self) -> int:
        return self.burnt.shape[1]

    @property
    def mean_burnt(self):
        return self.burnt.mean(axis=0)

    @property
    def var_burnt(self):
        return self.burnt.var(axis=0)

    @property
    def mean_unburnt(self):
        return self.unburnt.mean(axis=0)

    @property
    def var_unburnt(self):
        return self.unburnt.var(axis=0)

    def sd_burnt(self):
        return np.sqrt(self.var_burnt)


def macro_series(ensemble: Ensemble, allow_single: bool = False) -> MacroSeries:
    """Burnt and unburnt-tree counts per realisation and timestep."""
    n = len(ensemble)
    if n < 2 and not allow_single:
        raise EnsembleError(f"variance needs at least 2 realisations, got {n}")
    if n == 0:
        raise EnsembleError("empty ensemble")
    burnt = np.empty((n, ensemble.n_frames), dtype=np.int64)
    unburnt = np.empty_like(burnt)
    for k in range(n):
        s = ensemble.states[k].reshape(ensemble.n_frames, -1)
        burnt[k] = np.count_nonzero(s >= kernels.FIRE, axis=1)
        unburnt[k] = np.count_nonzero(s == kernels.TREE, axis=1)
    H, W = ensemble.grid_shape
    return MacroSeries(burnt, unburnt, ensemble.initial_trees, H * W)


def steady_state_time(series: MacroSeries, rel_tol: float = 1e-3, run: int = 5) -> int:
    """First timestep after which mean burnt count is flat for ``run`` steps.

    Flat means each step changes the mean by less than ``rel_tol`` of the
    grid size. The search starts at the step of fastest mean growth, so the
    slow start of a fire is not mistaken for burn-out. Falls back to the
    last frame.
    """
    m = series.mean_burnt
    d = np.abs(np.diff(m))
    if d.size == 0:
        return 0
    start = int(np.argmax(d)) if d.max() > 0 else 0
    flat = d < rel_tol * series.grid_cells
    for t in range(start, d.size - run + 1):
        if flat[t:t + run].all():
            return t
    return series.n_frames - 1


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    samples: np.ndarray
    t: int


def steady_state_histogram(series: MacroSeries, t: int | None = None, bins: int = 30,
                           which: str = "unburnt") -> Histogram:
    """Equal-width histogram of the per-simulation macrostate at ``t``."""
    if t is None:
        t = steady_state_time(series)
    if not 0 <= t < series.n_frames:
        raise EnsembleError(f"timestep {t} outside [0, {series.n_frames})")
    if which not in ("unburnt", "burnt"):
        raise EnsembleError("which must be 'unburnt' or 'burnt'")
    samples = (series.unburnt if which == "unburnt" else series.burnt)[:, t]
    lo, hi = samples.min(), samples.max()
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(samples, bins=bins, range=(float(lo), float(hi)))
    return Histogram(edges, counts, samples, t)


@dataclass
class SweepLevel:
    s_level: float
    macro: MacroSeries
    micro: MicroStatMap | None
    steady_t: int

    @property
    def steady_sd(self) -> float:
        return float(np.sqrt(self.macro.var_burnt[self.steady_t]))


def slevel_sweep(spec: EnsembleSpec, s_levels, workers: int = 1, keep_micro: bool = True,
                 accelerated=None):
    """One ensemble per S-Level, all sharing the base config's initial condition."""
    s_levels = list(s_levels)
    if not s_levels:
        raise EnsembleError("s_levels must be non-empty")
    initial = initial_condition(spec.config)
    out = []
    for s in s_levels:
        level_spec = EnsembleSpec(spec.config.replace(s_level=float(s)), spec.n_sims,
                                  spec.length, spec.first_index)
        ens = run_ensemble(level_spec, workers, initial, accelerated)
        macro = macro_series(ens)
        micro = micro_stat_map(ens) if keep_micro else None
        out.append(SweepLevel(float(s), macro, micro, steady_state_time(macro)))
        del ens
    return out
