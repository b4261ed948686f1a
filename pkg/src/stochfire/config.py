"""Simulation configuration and its JSON form."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid simulation or experiment configuration."""


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one cellular-automaton fire run.

    ``s_level`` is the stochasticity percentage: the per-step ignition
    probability of a heated tree is ``1 - s_level / 100``.
    """

    height: int = 64
    width: int = 64
    density: float = 0.7
    s_level: float = 0.0
    q_threshold: float = 1.0
    i_seed: float = 2.0
    q_die: float = 0.1
    q_dead: float = 0.05
    alpha: float = 0.5
    radius: int = 1
    max_steps: int = 200
    n_seeds: int = 1
    seed_placement: str = "fixed"
    seed_cells: tuple = ((32, 32),)
    failed_ignition: str = "reset"
    master_seed: int = 0
    seed_retries: int = 10_000

    def __post_init__(self):
        cells = tuple(tuple(int(v) for v in c) for c in self.seed_cells)
        object.__setattr__(self, "seed_cells", cells)
        self.validate()

    @property
    def p_ignite(self) -> float:
        return 1.0 - self.s_level / 100.0

    def validate(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if not 0.0 <= self.density <= 1.0:
            raise ConfigError(f"density must lie in [0, 1], got {self.density}")
        if not 0.0 <= self.s_level <= 100.0:
            raise ConfigError(f"s_level must lie in [0, 100], got {self.s_level}")
        if not self.q_threshold > 0:
            raise ConfigError("q_threshold must be > 0")
        if self.q_die < 0 or self.q_dead < 0:
            raise ConfigError("q_die and q_dead must be >= 0")
        if self.i_seed < 0:
            raise ConfigError("i_seed must be >= 0")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.radius < 1:
            raise ConfigError("radius must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.n_seeds < 0:
            raise ConfigError("n_seeds must be >= 0")
        if self.seed_placement not in ("fixed", "random"):
            raise ConfigError(f"seed_placement must be 'fixed' or 'random', got {self.seed_placement!r}")
        if self.seed_placement == "fixed" and self.n_seeds > len(self.seed_cells):
            raise ConfigError(f"n_seeds={self.n_seeds} but only {len(self.seed_cells)} seed_cells given")
        if self.failed_ignition not in ("reset", "retain"):
            raise ConfigError(f"failed_ignition must be 'reset' or 'retain', got {self.failed_ignition!r}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seed_cells"] = [list(c) for c in self.seed_cells]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known - {"schema_version"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k in known}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> SimConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return SimConfig.from_dict(data)


def dump_config(config: SimConfig, path=None) -> str:
    text = json.dumps({"schema_version": CONFIG_SCHEMA_VERSION, **config.to_dict()}, indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
