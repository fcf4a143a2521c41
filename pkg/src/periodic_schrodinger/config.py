"""Run configuration: TOML file, environment overrides and command-line flags.

Precedence, lowest first: built-in defaults, the TOML file, ``PSCHRO_*``
environment variables, explicit command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import tomli

from .errors import ConfigError
from .model import DEFAULT_RHO0, PeriodicPotential

ENV_PREFIX = "PSCHRO_"
SEED_MAX = 2**64


@dataclass(frozen=True)
class RunConfig:
    potential: tuple[float, ...] = (1.0, -1.0)
    mu: float | None = None
    mus: tuple[float, ...] | None = None
    rho0: float = DEFAULT_RHO0
    nodes: int = 512
    sites: int | None = None  # None means derive from the cone rule
    t_max: float | None = None
    t_samples: int = 21
    d_max: int | None = None
    eps: float = 1e-6
    out: str = "out"
    seed: int = 0
    threads: int = 1
    direct: bool = True
    sweep_points: int = 5

    def pot(self) -> PeriodicPotential:
        return PeriodicPotential(tuple(self.potential))

    def echo(self) -> dict:
        d = asdict(self)
        d["potential"] = list(self.potential)
        d["mus"] = None if self.mus is None else list(self.mus)
        return d


_TUPLES = {"potential", "mus"}
_INTS = {"nodes", "sites", "t_samples", "d_max", "seed", "threads", "sweep_points"}
_FLOATS = {"mu", "rho0", "t_max", "eps"}
_BOOLS = {"direct"}


def _coerce(name: str, value):
    if value is None:
        return None
    try:
        if name in _TUPLES:
            if isinstance(value, str):
                value = [v for v in value.replace(";", ",").split(",") if v.strip()]
            return tuple(float(v) for v in value)
        if name in _INTS:
            if isinstance(value, str) and value.strip().lower() == "auto":
                return None
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if name in _FLOATS:
            return float(value)
        if name in _BOOLS:
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in {"1", "0", "true", "false", "yes", "no"}:
                    raise ValueError("not a boolean")
                return low in {"1", "true", "yes"}
            return bool(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name!r}: {value!r} ({exc})") from None


_NAMES = {f.name for f in fields(RunConfig)}


def _flatten(table: dict) -> dict:
    flat = {}
    for key, value in table.items():
        if isinstance(value, dict) and key in {"time", "velocity", "run"}:
            for sub, v in value.items():
                flat[sub if sub in _NAMES else f"{key}_{sub}"] = v
        else:
            flat[key] = value
    return flat


def _apply(cfg: RunConfig, updates: dict, source: str) -> RunConfig:
    unknown = set(updates) - _NAMES
    if unknown:
        raise ConfigError(f"unknown keys from {source}: {sorted(unknown)}")
    return replace(cfg, **{k: _coerce(k, v) for k, v in updates.items()})


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in _NAMES:
                out[name] = value
    return out


def load_config(path: str | os.PathLike | None = None, *, environ=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            table = tomli.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {p}: {exc}") from None
        cfg = _apply(cfg, _flatten(table), str(p))
    cfg = _apply(cfg, env_overrides(environ), "environment")
    if overrides:
        cfg = _apply(cfg, {k: v for k, v in overrides.items() if v is not None}, "command line")
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check every field against the preconditions of the modules that consume it."""
    try:
        pot = cfg.pot()
    except Exception as exc:  # domain errors carry the reason
        raise ConfigError(f"invalid potential {list(cfg.potential)}: {exc}") from None
    if cfg.mu is not None and not cfg.mu > 0:
        raise ConfigError(f"mu must be positive, got {cfg.mu}")
    if cfg.mus is not None and (len(cfg.mus) == 0 or min(cfg.mus) <= 0):
        raise ConfigError("mus must be a non-empty list of positive numbers")
    if not cfg.rho0 > 1:
        raise ConfigError(f"rho0 must exceed 1, got {cfg.rho0}")
    if cfg.nodes % 2 or cfg.nodes < 4 * pot.p:
        raise ConfigError(f"nodes must be even and >= 4p = {4 * pot.p}, got {cfg.nodes}")
    if cfg.sites is not None and cfg.sites < 1:
        raise ConfigError(f"sites must be positive or 'auto', got {cfg.sites}")
    if cfg.t_max is not None and not cfg.t_max > 0:
        raise ConfigError(f"t_max must be positive, got {cfg.t_max}")
    if cfg.t_samples < 2:
        raise ConfigError("t_samples must be >= 2")
    if cfg.d_max is not None and cfg.d_max < 1:
        raise ConfigError("d_max must be >= 1")
    if not 1e-12 < cfg.eps < 1e-2:
        raise ConfigError(f"eps must lie in (1e-12, 1e-2), got {cfg.eps}")
    if not 0 <= cfg.seed < SEED_MAX:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.sweep_points < 4:
        raise ConfigError("sweep_points must be >= 4")
