"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .closed_forms import SystemParams
from .reservoir import ReservoirSpec, build_lorentzian_bath

SCENARIOS = ("canonical", "variance", "correlation", "fdt_drift", "nonmarkovian", "star_algebra")


class ConfigError(ValueError):
    pass


def parse_flat(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    """One experiment run.

    ``None`` marks a scenario-dependent default, resolved by :meth:`resolved`:
    ``hbar = kBT / (100 omega_max)`` (hot bath), ``t_max = 6/gamma`` for the
    variance and drift scenarios and 5 otherwise, ``n_samples = 40000`` for
    variance and drift and 10000 otherwise, ``F0 = 1`` for the drift scenario.
    """

    scenario: str
    gamma: float = 1.0
    Gamma: float = 50.0
    m: float = 1.0
    kBT: float = 10.0
    hbar: Optional[float] = None
    F0: Optional[float] = None
    N: int = 4000
    omega_max: float = 1000.0
    t_max: Optional[float] = None
    t_steps: int = 50
    n_samples: Optional[int] = None
    seed: int = 42
    out_dir: str = "results"

    def resolved(self) -> RunConfig:
        long_run = self.scenario in ("variance", "fdt_drift")
        fill = {}
        if self.hbar is None:
            fill["hbar"] = self.kBT / (100.0 * self.omega_max)
        if self.F0 is None:
            fill["F0"] = 1.0 if self.scenario == "fdt_drift" else 0.0
        if self.t_max is None:
            fill["t_max"] = 6.0 / self.gamma if long_run else 5.0
        if self.n_samples is None:
            fill["n_samples"] = 40_000 if long_run else 10_000
        return dataclasses.replace(self, **fill)

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.t_steps < 2:
            raise ConfigError("t_steps must be at least 2")
        for key in ("gamma", "Gamma", "m", "kBT", "omega_max"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.t_max is not None and self.t_max <= 0:
            raise ConfigError("t_max must be positive")

    @property
    def params(self) -> SystemParams:
        c = self.resolved()
        return SystemParams(m=c.m, gamma=c.gamma, T=c.kBT, F0=c.F0, hbar=c.hbar, k_B=1.0)

    def bath(self, horizon: Optional[float] = None) -> ReservoirSpec:
        c = self.resolved()
        return build_lorentzian_bath(
            c.gamma, c.Gamma, c.m, c.N, c.omega_max, c.kBT, c.hbar, 1.0, horizon=horizon
        )

    def recurrence_guard(self) -> float:
        return 0.5 * 2 * 3.141592653589793 / (self.omega_max / self.N)

    def to_text(self) -> str:
        c = self.resolved()
        return "".join(f"{f.name} = {getattr(c, f.name)}\n" for f in dataclasses.fields(c))


_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_INT_KEYS = {"N", "t_steps", "n_samples", "seed"}
_STR_KEYS = {"scenario", "out_dir"}


def _coerce(key: str, value: str):
    if key in _STR_KEYS:
        return value
    typ = int if key in _INT_KEYS else float
    try:
        return typ(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected {typ.__name__}, got {value!r}") from None


def config_from_mapping(raw: dict, overrides: Optional[dict] = None) -> RunConfig:
    values = dict(raw)
    values.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    for key in values:
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
    if "scenario" not in values:
        raise ConfigError("missing required key 'scenario'")
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    cfg.validate()
    return cfg


def parse_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return config_from_mapping(parse_flat(path.read_text()), overrides)
