"""Probability-map forecasters.

The oracle forecasts the burn-probability map estimated from a training half
of an ensemble; it is the ideal calibrated learner for realisations drawn
from the same process. The other forecasters are reference baselines.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble, micro_stat_map


class ContaminationError(ValueError):
    """A forecast would be scored on realisations it was fitted to."""


class ForecastInputError(ValueError):
    pass


def initial_digest(ensemble: Ensemble) -> str:
    """Short fingerprint of the shared frame 0 of an ensemble."""
    return hashlib.sha1(np.ascontiguousarray(ensemble.states[0, 0]).tobytes()).hexdigest()[:16]


@dataclass
class ForecastMap:
    """Forecast probabilities ``values[t, y, x]`` in [0, 1].

    ``training`` holds the sim indices whose realisations produced the map;
    they must never be scored against it.
    """

    values: np.ndarray
    kind: str = "constant"
    training: frozenset = field(default_factory=frozenset)
    s_level: float | None = None
    initial: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ForecastInputError("forecast values must be (T, H, W)")
        if not np.all(np.isfinite(self.values)):
            raise ForecastInputError("forecast contains non-finite values")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ForecastInputError("forecast probabilities must lie in [0, 1]")
        self.training = frozenset(int(i) for i in self.training)

    @property
    def n_frames(self):
        return self.values.shape[0]

    def check_holdout(self, evaluation: Ensemble):
        """Raise unless ``evaluation`` is disjoint from training and shares frame 0."""
        overlap = self.training.intersection(int(i) for i in evaluation.sim_indices)
        if overlap:
            raise ContaminationError(
                f"{len(overlap)} evaluation realisations were used to build the "
                f"{self.kind} forecast (e.g. sim {min(overlap)})")
        if self.initial is not None and self.initial != initial_digest(evaluation):
            raise ForecastInputError("forecast and evaluation ensembles start from different initial conditions")
        if self.values.shape[1:] != evaluation.grid_shape:
            raise ForecastInputError(
                f"forecast grid {self.values.shape[1:]} differs from ensemble grid {evaluation.grid_shape}")
        if self.n_frames < evaluation.n_frames:
            raise ForecastInputError("forecast covers fewer timesteps than the evaluation traces")


def oracle_forecast(training: Ensemble, evaluation: Ensemble | None = None) -> ForecastMap:
    """Statistic map of ``training``; checked against ``evaluation`` if given."""
    stat = micro_stat_map(training)
    fc = ForecastMap(stat.values, "oracle", frozenset(training.sim_indices.tolist()),
                     training.config.s_level, initial_digest(training))
    if evaluation is not None:
        fc.check_holdout(evaluation)
    return fc


def mismatched_oracle(source: Ensemble, evaluation: Ensemble) -> ForecastMap:
    """Statistic of ``source`` (any S-Level) aimed at ``evaluation``.

    Both must share the forest layout and seed; the realisations must be
    disjoint by sim index, since equal indices share a random stream.
    """
    if initial_digest(source) != initial_digest(evaluation):
        raise ForecastInputError("source and evaluation ensembles have different initial conditions")
    fc = oracle_forecast(source)
    fc.kind = "mismatched_oracle" if source.config.s_level != evaluation.config.s_level else "oracle"
    fc.check_holdout(evaluation)
    return fc


def persistence_forecast(burnt_frames, t0: int, length: int | None = None) -> ForecastMap:
    """Freeze the observed burn mask from ``t0`` on.

    ``burnt_frames`` are the masks of one realisation, shape ``(T, H, W)``;
    frames before ``t0`` are reproduced as observed.
    """
    burnt = np.asarray(burnt_frames).astype(np.float64)
    if t0 < 1:
        raise ForecastInputError("t0 must be >= 1")
    if t0 >= burnt.shape[0]:
        raise ForecastInputError(f"t0={t0} beyond the {burnt.shape[0]} observed frames")
    T = burnt.shape[0] if length is None else length
    values = np.empty((T,) + burnt.shape[1:])
    values[:t0] = burnt[:t0]
    values[t0:] = burnt[t0]
    return ForecastMap(values, "persistence")


def constant_forecast(c: float, shape) -> ForecastMap:
    if not 0.0 <= c <= 1.0:
        raise ForecastInputError(f"constant forecast must lie in [0, 1], got {c}")
    return ForecastMap(np.full(tuple(shape), float(c)), "constant")


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str = "oracle"
    constant: float = 0.5
    t0: int = 10
    train_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("oracle", "mismatched_oracle", "persistence", "constant"):
            raise ForecastInputError(f"unknown forecaster kind {self.kind!r}")
