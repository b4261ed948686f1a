"""Stochastic cellular-automaton forest fire.

Cells are NoTree, Tree, Fire, Ember or Dead. Trees gather heat from burning
Moore neighbours and from glowing embers; once a tree's heat exceeds
``q_threshold`` it ignites with probability ``1 - s_level/100`` per step.
Fire lasts one step, then the cell smoulders as an Ember that radiates
``q_die`` to each non-burning neighbour until its heat falls below
``q_dead``, when it goes Dead.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import SimConfig
from .rng import LAYOUT_STREAM, SplitMix64


class SeedingError(RuntimeError):
    """A fire seed could not be placed on a tree."""


class CellState(enum.IntEnum):
    NO_TREE = kernels.NO_TREE
    TREE = kernels.TREE
    FIRE = kernels.FIRE
    EMBER = kernels.EMBER
    DEAD = kernels.DEAD


LEGAL_TRANSITIONS = frozenset({
    (CellState.NO_TREE, CellState.NO_TREE),
    (CellState.TREE, CellState.TREE),
    (CellState.TREE, CellState.FIRE),
    (CellState.FIRE, CellState.EMBER),
    (CellState.EMBER, CellState.EMBER),
    (CellState.EMBER, CellState.DEAD),
    (CellState.DEAD, CellState.DEAD),
})

BURNT_STATES = (CellState.FIRE, CellState.EMBER, CellState.DEAD)


@dataclass
class GridFrame:
    """States and heat of every cell at timestep ``t``."""

    states: np.ndarray
    heat: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.uint8)
        self.heat = np.ascontiguousarray(self.heat, dtype=np.float64)
        if self.states.shape != self.heat.shape or self.states.ndim != 2:
            raise ValueError("states and heat must be equal-shaped 2-d grids")

    @property
    def shape(self):
        return self.states.shape

    def copy(self) -> "GridFrame":
        return GridFrame(self.states.copy(), self.heat.copy(), self.t)


@dataclass
class SimulationTrace:
    """Frames of one Monte-Carlo realisation.

    ``states`` has shape ``(T, H, W)``; ``heat`` is kept only on request.
    ``terminated_at`` is the first quiescent frame index, or None when the
    run hit ``max_steps`` while still active.
    """

    config: SimConfig
    sim_index: int
    states: np.ndarray
    terminated_at: int | None = None
    heat: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.states.shape[0]

    @property
    def frames(self):
        for t in range(len(self)):
            h = self.heat[t] if self.heat is not None else np.zeros(self.states.shape[1:])
            yield GridFrame(self.states[t], h, t)

    def burnt(self) -> np.ndarray:
        """Burnt masks for every frame, shape ``(T, H, W)``, uint8."""
        return (self.states >= kernels.FIRE).view(np.uint8)

    def padded(self, length: int) -> "SimulationTrace":
        """Trace of exactly ``length`` frames, repeating the last frame."""
        n = len(self)
        if length <= n:
            states = self.states[:length]
            heat = None if self.heat is None else self.heat[:length]
        else:
            reps = length - n
            states = np.concatenate([self.states, np.repeat(self.states[-1:], reps, axis=0)])
            heat = None
            if self.heat is not None:
                heat = np.concatenate([self.heat, np.repeat(self.heat[-1:], reps, axis=0)])
        return SimulationTrace(self.config, self.sim_index, states, self.terminated_at, heat)


def init_grid(config: SimConfig, rng: SplitMix64) -> GridFrame:
    """Random forest: each cell is a Tree with probability ``density``.

    Draws one uniform per cell in row-major order.
    """
    config.validate()
    n = config.height * config.width
    u = rng.uniforms(n).reshape(config.height, config.width)
    states = np.where(u < config.density, kernels.TREE, kernels.NO_TREE).astype(np.uint8)
    return GridFrame(states, np.zeros(states.shape), 0)


def seed_fire(frame: GridFrame, config: SimConfig, rng: SplitMix64) -> GridFrame:
    """Give ``n_seeds`` distinct tree cells heat ``i_seed * q_threshold``."""
    out = frame.copy()
    if config.n_seeds == 0:
        return out
    H, W = out.shape
    seed_heat = config.i_seed * config.q_threshold
    chosen = []
    if config.seed_placement == "fixed":
        for r, c in config.seed_cells[:config.n_seeds]:
            if not (0 <= r < H and 0 <= c < W):
                raise SeedingError(f"seed cell ({r}, {c}) lies outside the {H}x{W} grid")
            if out.states[r, c] != kernels.TREE:
                raise SeedingError(f"seed cell ({r}, {c}) is not a tree")
            if (r, c) in chosen:
                raise SeedingError(f"seed cell ({r}, {c}) listed twice")
            chosen.append((r, c))
    else:
        tries = 0
        while len(chosen) < config.n_seeds:
            if tries >= config.seed_retries:
                raise SeedingError(
                    f"placed {len(chosen)} of {config.n_seeds} seeds after {tries} attempts")
            k = int(rng.integers(1, H * W)[0])
            tries += 1
            r, c = divmod(k, W)
            if out.states[r, c] == kernels.TREE and (r, c) not in chosen:
                chosen.append((r, c))
    for r, c in chosen:
        out.heat[r, c] = seed_heat
    return out


def initial_condition(config: SimConfig) -> GridFrame:
    """Forest layout and seeds derived from ``master_seed`` alone."""
    rng = SplitMix64.for_stream(config.master_seed, LAYOUT_STREAM)
    return seed_fire(init_grid(config, rng), config, rng)


def step(frame: GridFrame, config: SimConfig, rng: SplitMix64, accelerated=None) -> GridFrame:
    """One synchronous update from ``frame`` to the next timestep."""
    states, heat = kernels.step_arrays(frame.states, frame.heat, config, rng, accelerated)
    return GridFrame(states, heat, frame.t + 1)


def run_simulation(config: SimConfig, sim_index: int, length: int | None = None,
                   initial: GridFrame | None = None, keep_heat: bool = False,
                   accelerated=None) -> SimulationTrace:
    """Run one realisation until quiescence or ``max_steps`` frames.

    Quiescence means no Fire, no Ember and no tree still above the ignition
    threshold. With ``length`` the trace is padded (or cut) to that many
    frames. ``initial`` defaults to :func:`initial_condition`.
    """
    if not 0 <= sim_index < 2**32:
        raise ValueError("sim_index must be a 32-bit unsigned integer")
    if initial is None:
        initial = initial_condition(config)
    rng = SplitMix64.for_stream(config.master_seed, sim_index)
    n_frames = config.max_steps if length is None else min(length, config.max_steps)
    states, heat, n_used, done = kernels.simulate_arrays(
        initial.states, initial.heat, config, rng, n_frames, keep_heat, accelerated)
    trace = SimulationTrace(
        config, sim_index, states[:n_used],
        terminated_at=n_used - 1 if done else None,
        heat=None if heat is None else heat[:n_used])
    if length is not None and len(trace) != length:
        trace = trace.padded(length)
    return trace


def burnt_mask(frame: GridFrame | np.ndarray) -> np.ndarray:
    """1 where a cell has ever ignited (Fire, Ember or Dead), else 0."""
    states = frame.states if isinstance(frame, GridFrame) else np.asarray(frame)
    return (states >= kernels.FIRE).astype(np.uint8)
